import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import C_CRIT
from zklab.decomposition import (
    Decomposition,
    TubeError,
    coercivity_constant,
    critical_orthogonality_solve,
    e_kappa_norm,
    mobile_distance,
    orthogonality_solve,
    plateau_phi,
    project,
    random_smooth_field,
    smooth_plateau,
    tube_distance,
)
from zklab.grid import new_grid
from zklab.spectrum import compute_spectrum
from zklab.waves import kernel_modes, line_soliton, soliton_derivatives, theta


@pytest.fixture(scope="module")
def small():
    g = new_grid(128, 8, 30.0, 1.0)
    s = compute_spectrum(1.0, g)
    return g, s, Decomposition(s)


class TestPlateau:
    def test_limits(self):
        assert plateau_phi(0.0) == 1.0
        assert plateau_phi(10.0) == 1.0
        assert plateau_phi(25.0) == 25.0

    def test_monotone_and_smooth(self):
        r = np.linspace(0, 30, 3001)
        p = np.array([plateau_phi(v) for v in r])
        assert np.all(np.diff(p) >= -1e-14)
        assert np.max(np.abs(np.diff(p, 2))) < 1e-2
        s = smooth_plateau(r, 1.0, 2.0)
        assert s[0] == 0.0 and s[-1] == 1.0


class TestProjection:
    def test_gram_is_identity(self, small):
        _, _, d = small
        assert np.max(np.abs(d.gram() - np.eye(len(d.basis)))) <= 1e-10

    def test_translation_mode(self, small):
        g, s, d = small
        dx, _ = soliton_derivatives(1.0, g)
        comp = d.project(dx)
        assert comp.mu1 == pytest.approx(1.0, abs=1e-12)
        assert np.max(np.abs(comp.coefficient_vector()[:-2])) <= 1e-10
        assert abs(comp.mu2) <= 1e-10
        assert g.norm(comp.gamma) <= 1e-10 * g.norm(dx)

    def test_unstable_mode(self, small):
        g, s, d = small
        comp = d.project(s.eigenfunction(1, 0, 1))
        expected = np.zeros(len(d.basis))
        expected[0] = 1.0
        assert np.max(np.abs(comp.coefficient_vector() - expected)) <= 1e-6

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31))
    def test_reconstruction(self, seed):
        g = new_grid(64, 8, 30.0, 1.0)
        d = _decomp64()
        u = random_smooth_field(g, np.random.default_rng(seed))
        back = d.reconstruct(d.project(u))
        assert np.linalg.norm(back - u) <= 1e-8 * np.linalg.norm(u)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31))
    def test_idempotent(self, seed):
        g = new_grid(64, 8, 30.0, 1.0)
        d = _decomp64()
        gam = d.gamma_part(random_smooth_field(g, np.random.default_rng(seed)))
        assert np.max(np.abs(d.coefficients(gam))) <= 1e-10

    def test_module_level_project(self, small):
        g, s, _ = small
        with pytest.raises(ValueError):
            project(np.zeros((64, 8)), s)
        comp = project(s.eigenfunction(1, 1, -1), s)
        assert comp.Lambda_minus[0, 1] == pytest.approx(1.0, abs=1e-8)

    def test_critical_components(self, crit_grid):
        s = compute_spectrum(C_CRIT, crit_grid)
        d = Decomposition(s)
        Kc, Ks = kernel_modes(C_CRIT, crit_grid, 2)
        comp = d.project(0.3 * Kc - 0.2 * Ks)
        assert comp.is_critical
        assert comp.a0 == pytest.approx(0.3, abs=1e-8)
        assert comp.a1 == pytest.approx(-0.2, abs=1e-8)


_CACHE = {}


def _decomp64():
    if "d" not in _CACHE:
        g = new_grid(64, 8, 30.0, 1.0)
        _CACHE["d"] = Decomposition(compute_spectrum(1.0, g))
    return _CACHE["d"]


class TestEKappaNorm:
    def test_pure_gamma(self, small, rng):
        g, _, d = small
        gam = d.gamma_part(random_smooth_field(g, rng))
        comp = d.project(gam)
        assert e_kappa_norm(comp, d.spectrum) ** 2 == pytest.approx(d.quadratic_form(gam), rel=1e-10)

    def test_translation_mode_weight(self, small):
        g, _, d = small
        dx, _ = soliton_derivatives(1.0, g)
        assert d.norm(dx) == pytest.approx(d.kappa, rel=1e-8)

    def test_halving_kappa(self, small):
        g, s, d = small
        dx, _ = soliton_derivatives(1.0, g)
        half = Decomposition(s, kappa=d.kappa / 2)
        assert half.norm(dx) == pytest.approx(d.norm(dx) / 2, rel=1e-8)
        F = s.eigenfunction(1, 0, 1)
        assert half.norm(F) == pytest.approx(d.norm(F), rel=1e-12)

    def test_coercivity(self, small, rng):
        g, _, d = small
        fields = [random_smooth_field(g, rng) for _ in range(20)]
        C = coercivity_constant(d, fields)
        assert C > 0.05

    def test_rejects_broken_projection(self, small):
        g, s, d = small
        # Q itself lies in the negative direction of L once its d_c Q part is ignored
        Q = line_soliton(1.0, g)
        comp = d.project(Q)
        broken = type(comp)(comp.Lambda_plus, comp.Lambda_minus, comp.mu1, comp.mu2, None, None, Q)
        with pytest.raises(ValueError, match="negative quadratic form"):
            d.e_kappa_norm(broken)


class TestMobileDistance:
    def test_identity(self, small, rng):
        g, _, d = small
        v = 0.1 * random_smooth_field(g, rng)
        assert d.mobile_distance(v, 1.1, v, 1.1) <= 1e-6

    def test_zero_fields(self, small):
        g, s, _ = small
        z = g.zeros()
        assert mobile_distance(z, 1.0, z, 1.2, s) == pytest.approx(np.log(1.2), rel=1e-12)

    def test_symmetry(self, small, rng):
        g, _, d = small
        a, b = 0.1 * random_smooth_field(g, rng), 0.2 * random_smooth_field(g, rng)
        assert d.mobile_distance(a, 1.0, b, 0.9) == d.mobile_distance(b, 0.9, a, 1.0)

    def test_shift_discount(self, small, rng):
        g, _, d = small
        a = 0.2 * d.gamma_part(random_smooth_field(g, rng))
        b = g.shift_x(a, 1.5)
        # translating the gamma part costs only the shift penalty
        assert d.mobile_distance(a, 1.0, b, 1.0) < 0.5 * d.norm(a - b)

    def test_quasi_triangle(self, small, rng):
        g, _, d = small
        for _ in range(5):
            x, y, z = (0.1 * random_smooth_field(g, rng) for _ in range(3))
            cx, cy, cz = np.exp(rng.uniform(-0.1, 0.1, 3))
            lhs = d.mobile_distance(x, cx, z, cz)
            rhs = d.mobile_distance(x, cx, y, cy) + d.mobile_distance(y, cy, z, cz)
            assert lhs <= 4.0 * rhs


class TestTube:
    def test_tube_distance_of_translate(self, grid):
        u = grid.shift_x(line_soliton(1.0, grid), 2.3)
        dist, q = tube_distance(u, 1.0, grid)
        assert dist <= 1e-6
        assert q == pytest.approx(2.3, abs=1e-8)


class TestOrthogonalitySolve:
    def test_exact_representative(self, grid):
        u = grid.shift_x(line_soliton(1.1, grid), 0.3)
        st_ = orthogonality_solve(u, 1.0, grid)
        assert st_.c == pytest.approx(1.1, abs=1e-8)
        assert st_.rho == pytest.approx(0.3, abs=1e-8)
        assert grid.norm(st_.v) <= 1e-8
        assert np.max(np.abs(st_.residuals)) <= 1e-10

    def test_small_gamma_perturbation(self, grid, spectrum, rng):
        d = Decomposition(spectrum)
        gam = d.gamma_part(random_smooth_field(grid, rng))
        gam *= 1e-3 / grid.norm(gam)
        st_ = orthogonality_solve(line_soliton(1.0, grid) + gam, 1.0, grid)
        assert np.max(np.abs(st_.residuals)) <= 1e-10
        assert grid.norm(st_.v) == pytest.approx(1e-3, rel=0.05)
        dx, _ = soliton_derivatives(1.0, grid)
        assert abs(grid.inner(st_.v, dx)) <= 1e-10 * grid.norm(dx) ** 2
        assert abs(grid.inner(st_.v, line_soliton(1.0, grid))) <= 1e-10 * 12 * np.pi

    def test_bound_ratio(self, grid, rng):
        for eps in (1e-3, 1e-2):
            u = line_soliton(1.0, grid) + eps * random_smooth_field(grid, rng)
            assert orthogonality_solve(u, 1.0, grid).bound_ratio < 10.0

    def test_outside_tube(self, grid):
        with pytest.raises(TubeError, match="outside tube"):
            orthogonality_solve(grid.zeros(), 1.0, grid)


class TestCriticalSolve:
    def test_exact_representative(self, crit_grid, crit_family):
        a, c, q = (0.05, 0.02), 3.3, 0.4
        u = crit_grid.shift_x(theta(a, c, C_CRIT, crit_grid, crit_family), q)
        st_ = critical_orthogonality_solve(u, C_CRIT, crit_grid, crit_family)
        assert st_.c == pytest.approx(c, abs=1e-7)
        assert st_.rho == pytest.approx(q, abs=1e-7)
        assert np.allclose(st_.a, a, atol=1e-7)
        assert crit_grid.norm(st_.v) <= 1e-7
        assert np.max(np.abs(st_.residuals)) <= 1e-10

    def test_soliton(self, crit_grid, crit_family):
        st_ = critical_orthogonality_solve(line_soliton(C_CRIT, crit_grid), C_CRIT, crit_grid, crit_family)
        assert st_.c == pytest.approx(C_CRIT, abs=1e-12)
        assert abs(st_.rho) <= 1e-10
        assert np.allclose(st_.a, 0.0, atol=1e-12)

    def test_kernel_kick(self, crit_grid, crit_family):
        eps = 1e-3
        Kc, _ = kernel_modes(C_CRIT, crit_grid, 2)
        u = line_soliton(C_CRIT, crit_grid) + eps * Kc
        st_ = critical_orthogonality_solve(u, C_CRIT, crit_grid, crit_family)
        assert st_.a[0] == pytest.approx(eps, abs=10 * eps**2)
        assert crit_grid.norm(st_.v) <= 10 * eps**2 * crit_grid.norm(Kc)
