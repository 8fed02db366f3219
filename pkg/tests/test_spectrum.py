import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from zklab.grid import new_grid
from zklab.spectrum import (
    ResolutionError,
    compute_spectrum,
    count_unstable_modes,
    kernel_at_critical,
    leading_eigenvalue,
    linearized_L,
    mode_operator,
    n0,
    normalize_pairs,
    unstable_spectrum,
)
from zklab.waves import line_soliton, soliton_derivatives

# Eigenvalue of the k = 1 mode at c = 1, L = 1 from the weighted solve on a
# 1024-point, X = 60 grid; it agrees with the 512-point X = 30 value to 1e-10.
LAMBDA1 = 0.0967577751


class TestModeBound:
    @pytest.mark.parametrize("c,L,expected", [(1.0, 1.0, 2), (3.2, 1.0, 2), (5.0, 1.0, 3), (1.0, 3.0, 4)])
    def test_values(self, c, L, expected):
        assert n0(c, L) == expected

    def test_sandwich(self):
        for c in np.linspace(0.81, 20.0, 60):
            for L in (0.8, 1.0, 2.5):
                if c <= 4 / (5 * L**2):
                    continue
                n = n0(c, L)
                r = np.sqrt(5 * c)
                assert n >= 2
                assert 2 * (n - 1) / r < L <= 2 * n / r + 1e-12 or n == 2

    def test_subcritical(self):
        with pytest.raises(ValueError, match="subcritical"):
            n0(0.7, 1.0)


class TestModeOperator:
    def test_shape(self, grid):
        op = mode_operator(1.0, 1, grid)
        assert op.matrix.shape == (grid.nx, grid.nx)
        assert np.isrealobj(op.matrix)

    def test_translation_kernel(self, fine_grid):
        dx, dc = soliton_derivatives(1.0, fine_grid)
        A = mode_operator(1.0, 0, fine_grid).matrix
        assert np.linalg.norm(A @ dx[:, 0]) <= 1e-8 * np.linalg.norm(dx[:, 0])
        assert np.linalg.norm(A @ dc[:, 0] + dx[:, 0]) <= 1e-8 * np.linalg.norm(dx[:, 0])

    def test_spectrum_symmetric(self):
        g = new_grid(128, 8, 30.0, 1.0)
        w = np.linalg.eigvals(mode_operator(1.0, 1, g).matrix)
        cost = np.abs(w[:, None] + w[None, :])
        r, c = linear_sum_assignment(cost)
        assert np.max(cost[r, c]) <= 1e-6 * np.max(np.abs(w))

    def test_negative_k_rejected(self, grid):
        with pytest.raises(ValueError):
            mode_operator(1.0, -1, grid)


class TestUnstableSpectrum:
    def test_c1(self, spectrum):
        assert spectrum.n0 == 2
        assert [p.k for p in spectrum.pairs] == [1]
        assert spectrum.pairs[0].lam == pytest.approx(LAMBDA1, rel=1e-8)
        assert spectrum.kappa_star == spectrum.kappa_sup == spectrum.pairs[0].lam

    def test_mode_two_stable(self, grid):
        assert leading_eigenvalue(1.0, 2, grid).real <= 1e-6
        assert count_unstable_modes(1.0, grid, 4) == [1]

    def test_subcritical_empty(self, grid):
        spec = unstable_spectrum(0.79, grid)
        assert spec.pairs == [] and spec.kappa_star is None

    def test_onset(self, grid):
        lams = [unstable_spectrum(c, grid).pairs[0].lam for c in (0.81, 0.9, 1.0)]
        assert 0 < lams[0] < lams[1] < lams[2]

    def test_grid_independence(self, grid, fine_grid):
        a = unstable_spectrum(1.0, grid).pairs[0].lam
        b = unstable_spectrum(1.0, fine_grid).pairs[0].lam
        assert abs(a - b) <= 1e-8

    def test_eigenrelation(self, wide_grid, wide_spectrum):
        # the box profile solves the eigenproblem with its own box eigenvalue
        p = wide_spectrum.pairs[0]
        F = wide_spectrum.eigenfunction(1, 0, 1)
        lhs = wide_grid.derivative(linearized_L(F, 1.0, wide_grid), "x")
        assert wide_grid.norm(lhs - p.lam_box * F) <= 1e-8 * wide_grid.norm(F)
        assert p.lam_box == pytest.approx(p.lam, rel=0.01)

    def test_too_few_transverse_points(self):
        with pytest.raises(ResolutionError):
            unstable_spectrum(20.0, new_grid(128, 8, 30.0, 1.0))


class TestNormalization:
    def test_pairings(self, grid, spectrum):
        for j in (0, 1):
            Lm = linearized_L(spectrum.eigenfunction(1, j, -1), 1.0, grid)
            assert grid.inner(spectrum.eigenfunction(1, j, 1), Lm) == pytest.approx(1.0, abs=1e-6)
            assert abs(grid.inner(spectrum.eigenfunction(1, 1 - j, 1), Lm)) <= 1e-8

    def test_translation_mode_decoupled(self, grid, spectrum):
        dx, _ = soliton_derivatives(1.0, grid)
        LdxQ = linearized_L(dx, 1.0, grid)
        assert grid.norm(LdxQ) <= 1e-8
        for j in (0, 1):
            assert abs(grid.inner(spectrum.eigenfunction(1, j, 1), LdxQ)) <= 1e-10

    def test_idempotent(self, spectrum):
        again = normalize_pairs(spectrum)
        assert np.allclose(again.pairs[0].profile, spectrum.pairs[0].profile, rtol=1e-12, atol=0)

    def test_reflection_rule(self, grid, spectrum):
        Fp = spectrum.eigenfunction(1, 0, 1)
        Fm = spectrum.eigenfunction(1, 0, -1)
        refl = (grid.nx - np.arange(grid.nx)) % grid.nx
        assert np.array_equal(Fm, spectrum.minus_sign * Fp[refl])

    def test_empty_spectrum(self, grid):
        assert compute_spectrum(0.7, grid).normalized


class TestCriticalKernel:
    def test_critical(self, fine_grid):
        assert kernel_at_critical(3.2, 2, fine_grid) <= 1e-8

    def test_off_critical(self, fine_grid):
        r = kernel_at_critical(3.0, 2, fine_grid)
        assert r >= 1e-3
        # the operator acts as the constant n^2/L^2 - 5c/4 on Q^{3/2}
        assert r == pytest.approx(abs(4.0 - 5 * 3.0 / 4), rel=1e-6)

    def test_refinement(self):
        res = [kernel_at_critical(3.2, 2, new_grid(n, 8, 30.0, 1.0)) for n in (128, 256, 512)]
        assert res[0] > res[1] > res[2]

    def test_kernel_of_mode_operator(self, fine_grid):
        from zklab.waves import soliton_profile

        f = soliton_profile(3.2, fine_grid.x) ** 1.5
        H = mode_operator(3.2, 2, fine_grid).hamiltonian
        assert np.linalg.norm(H @ f) <= 1e-8 * np.linalg.norm(f)
        assert np.allclose(line_soliton(3.2, fine_grid)[:, 0] ** 1.5, f)
