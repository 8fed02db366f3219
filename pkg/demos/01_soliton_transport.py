"""
A line soliton travels without change of shape.

Q_c = (3c/2) sech^2(sqrt(c) x / 2) is y-independent and moves at speed c.
We integrate the full equation for one time unit and compare with the
exact translate, then print the conserved mass and energy.
"""

import numpy as np

from zklab.evolution import Integrator, evolve
from zklab.grid import new_grid
from zklab.waves import functionals, line_soliton

grid = new_grid(512, 8, 30.0, 1.0)
Q = line_soliton(1.0, grid)
traj = evolve(Q, grid, Integrator(dt=1e-3, t_end=1.0, snapshot_every=250, diagnostics_every=50))

print("t      rel. error vs exact translate")
for t, u in zip(traj.times, traj.snapshots):
    err = grid.norm(u - grid.shift_x(Q, t)) / grid.norm(Q)
    print(f"{t:4.2f}   {err:.2e}")

M, E, S = functionals(Q, 1.0, grid)
print(f"\nM = {M:.10f}  (12 pi    = {12 * np.pi:.10f})")
print(f"E = {E:.10f}  (-18pi/5  = {-18 * np.pi / 5:.10f})")
print(f"S = {S:.10f}  (12pi/5   = {12 * np.pi / 5:.10f})")
print(f"mass drift   {np.ptp(traj.M) / traj.M[0]:.1e}")
print(f"energy drift {np.ptp(traj.E) / abs(traj.E[0]):.1e}")
