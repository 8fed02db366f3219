"""
At the critical speed c* = 3.2 (L = 1) a y-dependent family bifurcates.

The kernel direction Q^{3/2} cos(2y) seeds a family phi(a) of stationary
waves. Its speed and mass grow quadratically in the amplitude, and the mass
coefficient satisfies a closed identity in terms of the speed coefficient.
"""

from zklab.grid import new_grid
from zklab.manifold import lyapunov_quartic_check
from zklab.spectrum import kernel_at_critical
from zklab.waves import FamilyCache, bifurcation_coefficients, c2_identity

c_star = 3.2
grid = new_grid(192, 16, 20.0, 1.0)
print(f"kernel residual at c*: {kernel_at_critical(c_star, 2, grid):.1e}")
print(f"kernel residual at 3.0: {kernel_at_critical(3.0, 2, grid):.1e}")

family = FamilyCache(c_star, grid)
C_star, C2 = bifurcation_coefficients(c_star, grid, cache=family)
print(f"\nC_*  = {C_star:.6f}")
print(f"C_2  = {C2:.6f}")
print(f"identity value = {c2_identity(c_star, C_star, grid):.6f}")

fit = lyapunov_quartic_check(c_star, [0.02, 0.04, 0.06, 0.08], [c_star], grid, family, C2)[0]
print(f"\nquartic action coefficient: fitted {fit.coef_fit:.4e}, formula {fit.coef_formula:.4e}")
