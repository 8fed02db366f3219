"""
Line solitons, conserved functionals and the bifurcating family at critical speed.

The line soliton is ``Q_c(x) = (3c/2) sech^2(sqrt(c) x / 2)``. At critical
speeds ``c* = 4 n^2 / (5 L^2)`` a two-parameter family of x-even solitary
waves ``phi(a)`` branches off ``Q_{c*}`` along ``Q^{3/2} cos(n y / L)`` and
``Q^{3/2} sin(n y / L)``; :func:`solve_modulated_family` computes it by a
bordered Newton iteration on the full 2D discretisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .grid import CylGrid


# Below this amplitude the family is replaced by its tangent Q + a.K (error
# O(|a|^2)); the Newton solve is ill-conditioned at the bifurcation point.
LINEAR_AMPLITUDE = 1e-7


class NewtonError(RuntimeError):
    """A Newton iteration failed to reach its tolerance."""


def _check_speed(c: float) -> float:
    c = float(c)
    if not (c > 0 and np.isfinite(c)):
        raise ValueError(f"speed must be positive, got {c}")
    return c


def soliton_profile(c: float, x: np.ndarray) -> np.ndarray:
    c = _check_speed(c)
    return 1.5 * c / np.cosh(0.5 * np.sqrt(c) * x) ** 2


def line_soliton(c: float, grid: CylGrid) -> np.ndarray:
    """Sample ``Q_c`` on ``grid`` (independent of y)."""
    return grid.from_profile(soliton_profile(c, grid.x))


def soliton_derivatives(c: float, grid: CylGrid) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(d_x Q_c, d_c Q_c)`` from the closed form."""
    c = _check_speed(c)
    s = 0.5 * np.sqrt(c) * grid.x
    sech2 = 1.0 / np.cosh(s) ** 2
    th = np.tanh(s)
    dx = -1.5 * c**1.5 * sech2 * th
    dc = 1.5 * sech2 - 0.75 * np.sqrt(c) * grid.x * sech2 * th
    return grid.from_profile(dx), grid.from_profile(dc)


def soliton_mass(c: float, L: float) -> float:
    """Exact ``||Q_c||^2 = 12 pi L c^{3/2}`` on the full line."""
    return 12.0 * np.pi * L * _check_speed(c) ** 1.5


def dirichlet_energy(u: np.ndarray, grid: CylGrid) -> float:
    """``int |grad u|^2`` by Parseval."""
    F = np.fft.fft2(grid.check(u))
    k2 = grid.xi[:, None] ** 2 + grid.eta[None, :] ** 2
    return float(np.sum(k2 * np.abs(F) ** 2) / (grid.nx * grid.ny) * grid.area_element)


def functionals(u: np.ndarray, c: float, grid: CylGrid) -> tuple[float, float, float]:
    """Mass, energy and action ``S_c = E + (c/2) M`` of ``u``."""
    M = grid.inner(u, u)
    E = 0.5 * dirichlet_energy(u, grid) - float(np.sum(u**3)) * grid.area_element / 3.0
    return M, E, E + 0.5 * c * M


def stationary_residual(phi: np.ndarray, c: float, grid: CylGrid) -> np.ndarray:
    """``-Lap phi + c phi - phi^2``."""
    return -grid.laplacian(phi) + c * phi - phi**2


# ---------------------------------------------------------------------------
# critical speeds


def critical_index(c_star: float, L: float, rtol: float = 1e-9) -> int:
    """Integer ``n > 1`` with ``c* = 4 n^2 / (5 L^2)``; ``ValueError`` otherwise."""
    c_star = _check_speed(c_star)
    nf = np.sqrt(5.0 * c_star * L**2 / 4.0)
    n = int(round(nf))
    if n < 2 or abs(nf - n) > rtol * max(nf, 1.0):
        raise ValueError(f"c_star={c_star} is not a critical speed 4n^2/(5L^2) with n>1 for L={L}")
    return n


def is_critical(c_star: float, L: float) -> bool:
    try:
        critical_index(c_star, L)
    except ValueError:
        return False
    return True


def kernel_modes(c_star: float, grid: CylGrid, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``Q^{3/2} cos(n y / L)`` and ``Q^{3/2} sin(n y / L)``."""
    q32 = soliton_profile(c_star, grid.x) ** 1.5
    return np.outer(q32, grid.mode_cos(n)), np.outer(q32, grid.mode_sin(n))


# ---------------------------------------------------------------------------
# bifurcating family


@dataclass
class ModulatedWave:
    """One member ``phi_{c*}(a)`` of the bifurcating family."""

    c_star: float
    a: tuple[float, float]
    profile: np.ndarray
    speed: float
    residual: float
    iterations: int = 0
    grid: CylGrid | None = field(default=None, repr=False)
    _jac: tuple | None = field(default=None, repr=False)
    angle: float = 0.0

    def amplitude_derivatives(self) -> tuple[np.ndarray, np.ndarray, float, float]:
        """``(d phi/d a0, d phi/d a1, d c/d a0, d c/d a1)`` at this member.

        Obtained from the bordered Jacobian: differentiating the stationary
        equation and the two pinning constraints in ``a``.
        """
        if self._jac is None:
            raise ValueError("wave carries no Jacobian")
        J, knorm, emb = self._jac
        ne = J.shape[1] - 1
        out = []
        for i in range(2):
            rhs = np.zeros(J.shape[0])
            rhs[ne + i] = knorm[i]
            sol = scipy.linalg.lstsq(J, rhs, lapack_driver="gelsy")[0]
            out.append(sol)
        d0, d1 = (emb(s[:ne]) for s in out)
        dc0, dc1 = float(out[0][ne]), float(out[1][ne])
        if self.angle == 0.0:
            return d0, d1, dc0, dc1
        # derivatives were taken at the unrotated member; rotate the pair
        ct, st = np.cos(self.angle), np.sin(self.angle)
        shift = self.angle * self.grid.L / critical_index(self.c_star, self.grid.L)
        r0, r1 = self.grid.shift_y(d0, shift), self.grid.shift_y(d1, shift)
        return ct * r0 - st * r1, st * r0 + ct * r1, ct * dc0 - st * dc1, st * dc0 + ct * dc1


class _EvenX:
    """Restriction of fields to the x-even subspace ``f(x, y) = f(-x, y)``."""

    def __init__(self, grid: CylGrid):
        self.grid = grid
        nx, ny = grid.nx, grid.ny
        self.h = nx // 2 + 1
        # index j maps to -x_j at (nx - j) mod nx
        ex = np.zeros((nx, self.h))
        for j in range(self.h):
            ex[j, j] = 1.0
            ex[(nx - j) % nx, j] = 1.0
        self.ex = ex
        w = np.full(self.h, 2.0)
        w[0] = w[-1] = 1.0
        self.weights = np.repeat(w, ny) * grid.area_element

    def restrict(self, f: np.ndarray) -> np.ndarray:
        return f[: self.h].ravel()

    def embed(self, v: np.ndarray) -> np.ndarray:
        return self.ex @ v.reshape(self.h, self.grid.ny)

    def laplacian_matrix(self) -> np.ndarray:
        g = self.grid
        dxx = g.x_diff_matrix(2)[: self.h] @ self.ex
        dyy = g.y_diff_matrix(2)
        return np.kron(dxx, np.eye(g.ny)) + np.kron(np.eye(self.h), dyy)


_LAPLACIANS: dict = {}


def _even_laplacian(sub: _EvenX) -> np.ndarray:
    g = sub.grid
    key = (g.nx, g.ny, g.X, g.L)
    if key not in _LAPLACIANS:
        _LAPLACIANS.clear()
        _LAPLACIANS[key] = sub.laplacian_matrix()
    return _LAPLACIANS[key]


def solve_modulated_family(
    c_star: float,
    a,
    grid: CylGrid,
    tol: float = 1e-10,
    initial: ModulatedWave | None = None,
    max_iter: int = 30,
    max_amplitude: float = 0.2,
) -> ModulatedWave:
    """Solve ``-Lap phi + c phi - phi^2 = 0`` on the branch pinned by ``a``.

    The unknowns are an x-even field ``phi`` and the speed ``c``. Two extra
    rows pin ``<phi - Q, K_c> = a0 ||K_c||^2`` and ``<phi - Q, K_s> = a1 ||K_s||^2``
    where ``K_c, K_s`` span the extra kernel at ``c*``. The bordered system
    is overdetermined by the y-rotation symmetry, so each step is a least
    squares solve; ``residual`` is the max-norm of the stationary residual.
    """
    n = critical_index(c_star, grid.L)
    a0, a1 = (float(v) for v in a)
    amp = float(np.hypot(a0, a1))
    if amp > max_amplitude:
        raise ValueError(f"|a|={amp} exceeds max_amplitude={max_amplitude}")
    Q = line_soliton(c_star, grid)
    if amp == 0.0:
        res = float(np.max(np.abs(stationary_residual(Q, c_star, grid))))
        return ModulatedWave(c_star, (a0, a1), Q, c_star, res, 0, grid)
    if a1 != 0.0 or a0 < 0.0:
        # y-aliasing breaks the rotation symmetry of the collocated problem,
        # so oblique members are exact y-rotations of the a0 > 0 member
        if initial is not None and initial.angle != 0.0:
            initial = rotate_member(initial, -initial.angle)
        base = solve_modulated_family(c_star, (amp, 0.0), grid, tol, initial, max_iter, max_amplitude)
        return rotate_member(base, float(np.arctan2(a1, a0)))

    Kc, Ks = kernel_modes(c_star, grid, n)
    knorm = (grid.inner(Kc, Kc), grid.inner(Ks, Ks))
    sub = _EvenX(grid)
    lap = _even_laplacian(sub)
    kc_w = sub.restrict(Kc) * sub.weights
    ks_w = sub.restrict(Ks) * sub.weights
    q_e = sub.restrict(Q)

    if initial is not None:
        phi, c = sub.restrict(initial.profile).copy(), float(initial.speed)
    else:
        phi, c = q_e + a0 * sub.restrict(Kc) + a1 * sub.restrict(Ks), c_star

    ne = phi.size
    J = np.zeros((ne + 2, ne + 1))
    it = 0
    res = np.inf
    for it in range(1, max_iter + 1):
        F = -lap @ phi + c * phi - phi**2
        g0 = kc_w @ (phi - q_e) - a0 * knorm[0]
        g1 = ks_w @ (phi - q_e) - a1 * knorm[1]
        res = float(np.max(np.abs(F)))
        if res <= tol and abs(g0) <= tol * knorm[0] and abs(g1) <= tol * knorm[1]:
            break
        J[:ne, :ne] = -lap
        J[np.arange(ne), np.arange(ne)] += c - 2.0 * phi
        J[:ne, ne] = phi
        J[ne, :ne] = kc_w
        J[ne + 1, :ne] = ks_w
        J[ne:, ne] = 0.0
        rhs = -np.concatenate([F, [g0, g1]])
        step = scipy.linalg.lstsq(J, rhs, lapack_driver="gelsy")[0]
        phi = phi + step[:ne]
        c = c + step[ne]
        if not np.all(np.isfinite(phi)) or not np.isfinite(c):
            raise NewtonError("modulated family Newton produced non-finite values")
    else:
        raise NewtonError(f"modulated family Newton did not converge: residual {res:.3e} > {tol:.1e}")

    J[:ne, :ne] = -lap
    J[np.arange(ne), np.arange(ne)] += c - 2.0 * phi
    J[:ne, ne] = phi
    J[ne, :ne] = kc_w
    J[ne + 1, :ne] = ks_w
    J[ne:, ne] = 0.0
    return ModulatedWave(
        c_star, (a0, a1), sub.embed(phi), float(c), res, it, grid, (J.copy(), knorm, sub.embed)
    )


def rotate_member(wave: ModulatedWave, angle: float) -> ModulatedWave:
    """Rotate a family member in amplitude space by a y-translation."""
    g = wave.grid
    n = critical_index(wave.c_star, g.L)
    prof = g.shift_y(wave.profile, angle * g.L / n)
    ct, st = np.cos(angle), np.sin(angle)
    a = (ct * wave.a[0] - st * wave.a[1], st * wave.a[0] + ct * wave.a[1])
    return ModulatedWave(
        wave.c_star, a, prof, wave.speed, wave.residual, wave.iterations, g, wave._jac, wave.angle + angle
    )


class FamilyCache:
    """Memoises family members and warm-starts new solves from the nearest one.

    Members are solved on the ``a0 > 0`` axis, continued outward from the
    origin in steps of at most ``step``, and rotated to the requested angle.
    """

    def __init__(self, c_star: float, grid: CylGrid, tol: float = 1e-10, step: float = 0.03):
        self.c_star = float(c_star)
        self.grid = grid
        self.tol = tol
        self.step = step
        self._base: dict[float, ModulatedWave] = {}

    def __call__(self, a) -> ModulatedWave:
        a0, a1 = float(a[0]), float(a[1])
        amp = float(np.hypot(a0, a1))
        base = self.base(amp)
        if a1 == 0.0 and a0 >= 0.0:
            return base
        return rotate_member(base, float(np.arctan2(a1, a0)))

    def base(self, amp: float) -> ModulatedWave:
        if amp in self._base:
            return self._base[amp]
        if amp == 0.0:
            return solve_modulated_family(self.c_star, (0.0, 0.0), self.grid, self.tol)
        # the origin is a candidate too: near the bifurcation point a warm
        # start from a distant member can land on the line-soliton branch
        r0 = min([0.0] + [r for r in self._base if r > 0], key=lambda r: abs(r - amp))
        n_steps = max(1, int(np.ceil(abs(amp - r0) / self.step)))
        wave = self._base.get(r0)
        radii = list(np.linspace(r0, amp, n_steps + 1)[1:-1]) + [amp]
        for r in map(float, radii):
            wave = solve_modulated_family(self.c_star, (r, 0.0), self.grid, self.tol, initial=wave)
            self._base[r] = wave
        return wave


def _fit_quadratic(amp2: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Fit ``y = p amp2 + r amp2^2``; return ``(p, relative residual)``."""
    A = np.column_stack([amp2, amp2**2])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ coef
    rel = float(np.linalg.norm(fit - y) / max(np.linalg.norm(y), 1e-300))
    return float(coef[0]), rel


def bifurcation_coefficients(
    c_star: float,
    grid: CylGrid,
    amplitudes=(0.02, 0.04, 0.06, 0.08, 0.1),
    tol: float = 1e-10,
    fit_tol: float = 1e-3,
    cache: FamilyCache | None = None,
) -> tuple[float, float]:
    """Fit ``C_*`` and ``C_{2,c*}`` from the family along ``a = (s, 0)``.

    ``c(a) - c* = (C_*/2)|a|^2 + ...`` and
    ``||phi(a)||^2 - ||Q||^2 = (C_2/2)|a|^2 + ...``; a quartic correction is
    fitted alongside and discarded.
    """
    cache = cache or FamilyCache(c_star, grid, tol)
    Q = line_soliton(c_star, grid)
    mq = grid.inner(Q, Q)
    s = np.asarray(amplitudes, dtype=float)
    dc, dm = [], []
    for v in s:
        w = cache((v, 0.0))
        dc.append(w.speed - c_star)
        dm.append(grid.inner(w.profile, w.profile) - mq)
    p_c, r_c = _fit_quadratic(s**2, np.array(dc))
    p_m, r_m = _fit_quadratic(s**2, np.array(dm))
    if max(r_c, r_m) > fit_tol:
        raise ValueError(f"bifurcation fit residual too large ({r_c:.2e}, {r_m:.2e})")
    return 2.0 * p_c, 2.0 * p_m


def c2_identity(c_star: float, C_star: float, grid: CylGrid) -> float:
    """Right side ``3 C_* ||Q||^2 / (2 c*) - (5/2) ||Q^{3/2} cos(n y/L)||^2``."""
    n = critical_index(c_star, grid.L)
    Q = line_soliton(c_star, grid)
    Kc, _ = kernel_modes(c_star, grid, n)
    return 1.5 * C_star * grid.inner(Q, Q) / c_star - 2.5 * grid.inner(Kc, Kc)


# ---------------------------------------------------------------------------
# rescaled family


def dilate(phi: np.ndarray, c: float, c_star: float, grid: CylGrid) -> np.ndarray:
    """``(c/c*) phi(sqrt(c/c*) x, y)``."""
    c = _check_speed(c)
    r = c / c_star
    if r == 1.0:
        return np.array(phi, dtype=float, copy=True)
    return r * grid.dilate_x(phi, np.sqrt(r))


def theta(a, c: float, c_star: float, grid: CylGrid, family=None) -> np.ndarray:
    """Modulated solitary wave ``(c/c*) phi_{c*}(a)(sqrt(c/c*) x, y)``.

    ``family`` maps an amplitude pair to a :class:`ModulatedWave`; by
    default a fresh solve is run.
    """
    c = _check_speed(c)
    amp = float(np.hypot(*a))
    if amp == 0.0:
        return line_soliton(c, grid)
    if amp < LINEAR_AMPLITUDE:
        n = critical_index(c_star, grid.L)
        Kc, Ks = kernel_modes(c_star, grid, n)
        return dilate(line_soliton(c_star, grid) + a[0] * Kc + a[1] * Ks, c, c_star, grid)
    wave = family(a) if family is not None else solve_modulated_family(c_star, a, grid)
    return dilate(wave.profile, c, c_star, grid)


def beta(a, c: float, c_star: float, grid: CylGrid, family=None) -> float:
    """Mass-matching speed ``c* ||Q_c||^{4/3} / ||phi_{c*}(a)||^{4/3}``."""
    c = _check_speed(c)
    if float(np.hypot(*a)) == 0.0:
        return c
    phi = theta(a, c_star, c_star, grid, family)
    mq = grid.inner(line_soliton(c, grid), line_soliton(c, grid))
    mphi = grid.inner(phi, phi)
    return c_star * (mq / mphi) ** (2.0 / 3.0)
