"""
Modulation: a perturbed soliton is written as tau_rho(v + Q_c).

The speed c and position rho are fixed by orthogonality of v to d_x Q* and
Q*. Along a run the tracked speed stays put while the position advances.
"""

import numpy as np

from zklab.decomposition import orthogonality_solve
from zklab.evolution import Integrator, evolve, modulation_track
from zklab.grid import new_grid
from zklab.waves import line_soliton

grid = new_grid(256, 8, 30.0, 1.0)
u = grid.shift_x(line_soliton(1.1, grid), 0.3)
state = orthogonality_solve(u, 1.0, grid)
print(f"recovered c = {state.c:.12f}, rho = {state.rho:.12f}, ||v|| = {grid.norm(state.v):.1e}")

bump = 1e-3 * np.outer(np.exp(-grid.x**2), grid.mode_cos(1))
traj = evolve(line_soliton(1.0, grid) + bump, grid, Integrator(dt=0.01, t_end=5.0, snapshot_every=100))
tracked = modulation_track(traj, 1.0)
print("\nt     c(t)        rho(t)")
for t, c, rho in zip(tracked.times, tracked.series["c"], tracked.series["rho"]):
    print(f"{t:3.1f}   {c:.8f}  {rho:.6f}")
