"""
Transverse instability switches on at c = 4 / (5 L^2).

For each transverse mode k the linearisation about Q_c reduces to a
one-dimensional operator A_k. Its leading eigenvalue is real and positive
exactly for 1 <= k < n0; on L = 1 the first mode turns unstable at c = 0.8.
"""

from zklab.grid import new_grid
from zklab.spectrum import compute_spectrum, leading_eigenvalue, n0

grid = new_grid(256, 8, 30.0, 1.0)

print("c      lambda_1(c)")
for c in (0.79, 0.81, 0.85, 0.9, 1.0, 1.2):
    lam = leading_eigenvalue(c, 1, grid).real
    print(f"{c:4.2f}   {max(lam, 0.0):.6f}")

for c in (1.0, 4.0):
    spec = compute_spectrum(c, grid)
    print(f"\nc = {c}: n0 = {n0(c, grid.L)}, unstable modes and rates:")
    for p in spec.pairs:
        print(f"  k = {p.k}: lambda = {p.lam:.8f}")
