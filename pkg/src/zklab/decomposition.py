"""
Spectral splitting of perturbations of the line soliton and modulation solvers.

A perturbation ``u`` is split as

    u = sum (Lam+ F+ + Lam- F-) + mu1 d_x Q + mu2 d_c Q [+ a0 K0 + a1 K1] + gamma

with every coefficient read off by a single inner product against a dual
test function. ``gamma`` is the coercive remainder on which
``<gamma, L gamma>`` controls the H^1 norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .grid import CylGrid
from .spectrum import UnstableSpectrum, linearized_L
from .waves import (
    LINEAR_AMPLITUDE,
    FamilyCache,
    NewtonError,
    critical_index,
    dilate,
    is_critical,
    kernel_modes,
    line_soliton,
    soliton_derivatives,
    theta,
)

QUAD_TOL = 1e-10


class TubeError(RuntimeError):
    """The field is not close enough to the soliton orbit."""


@dataclass(frozen=True)
class Components:
    """Coefficients of the spectral splitting (arrays indexed ``[k-1, j]``)."""

    Lambda_plus: np.ndarray
    Lambda_minus: np.ndarray
    mu1: float
    mu2: float
    a0: float | None
    a1: float | None
    gamma: np.ndarray = field(repr=False)
    kappa: float = 0.1
    c_star: float = 1.0
    is_critical: bool = False

    def coefficient_vector(self) -> np.ndarray:
        v = [self.Lambda_plus.ravel(), self.Lambda_minus.ravel(), [self.mu1, self.mu2]]
        if self.is_critical:
            v.append([self.a0, self.a1])
        return np.concatenate(v)


def smooth_plateau(r: np.ndarray | float, r0: float, r1: float) -> np.ndarray:
    """C-infinity step equal to 0 for ``r <= r0`` and 1 for ``r >= r1``."""
    t = np.clip((np.asarray(r, dtype=float) - r0) / (r1 - r0), 0.0, 1.0)

    def h(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    t = np.atleast_1d(t)
    a, b = h(t), h(1.0 - t)
    out = a / (a + b)
    return out if np.ndim(r) else float(out[0])


def plateau_phi(r: float, C2: float = 10.0) -> float:
    """Nondecreasing ``phi`` with ``phi = 1`` on ``r <= C2`` and ``phi = r`` on ``r >= 2 C2``."""
    return float(1.0 + (r - 1.0) * smooth_plateau(r, C2, 2.0 * C2))


class Decomposition:
    """Projection machinery at a fixed reference speed ``c*``.

    Parameters
    ----------
    spectrum : UnstableSpectrum
        Normalised unstable eigenpairs at ``c*`` (may be empty when subcritical).
    kappa : float
        Weight of the translation and kernel directions in the E_kappa norm.
    delta : float
        Scale of the shift penalty in the mobile distance.
    plateau : float
        Plateau constant of ``phi`` in the mobile distance.
    """

    def __init__(self, spectrum: UnstableSpectrum, kappa: float = 0.1, delta: float = 0.05, plateau: float = 10.0):
        if spectrum.pairs and not spectrum.normalized:
            raise ValueError("spectrum must be normalised before projecting")
        if kappa <= 0 or delta <= 0:
            raise ValueError("kappa and delta must be positive")
        g = spectrum.grid
        self.spectrum = spectrum
        self.grid = g
        self.c_star = c = spectrum.c_star
        self.kappa = float(kappa)
        self.delta = float(delta)
        self.plateau = float(plateau)
        self.Q = line_soliton(c, g)
        self.dxQ, self.dcQ = soliton_derivatives(c, g)
        self.is_critical = is_critical(c, g.L)
        self.nk = len(spectrum.pairs)

        basis, tests = [], []
        for sign in (1, -1):
            for p in spectrum.pairs:
                for j in (0, 1):
                    basis.append(spectrum.eigenfunction(p.k, j, sign))
                    tests.append(linearized_L(spectrum.eigenfunction(p.k, j, -sign), c, g, self.Q))
        basis.append(self.dxQ)
        tests.append(self.dxQ / g.inner(self.dxQ, self.dxQ))
        basis.append(self.dcQ)
        tests.append(self.Q / g.inner(self.dcQ, self.Q))
        if self.is_critical:
            n = critical_index(c, g.L)
            if n >= g.ny // 2:
                raise ValueError(f"ny={g.ny} cannot represent kernel mode {n}")
            for K in kernel_modes(c, g, n):
                basis.append(K)
                tests.append(K / g.inner(K, K))
        self.basis = np.array(basis)
        self.tests = np.array(tests)
        k2 = self.kappa**2
        w = [1.0] * (4 * self.nk) + [k2, 1.0] + ([k2, k2] if self.is_critical else [])
        self.weights = np.array(w)

    # -- projections --------------------------------------------------------
    def gram(self) -> np.ndarray:
        """``<basis_i, test_j>``; the identity when the splitting is consistent."""
        return np.einsum("iab,jab->ij", self.basis, self.tests) * self.grid.area_element

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        u = self.grid.check(u)
        return np.einsum("iab,ab->i", self.tests, u) * self.grid.area_element

    def project(self, u: np.ndarray) -> Components:
        coef = self.coefficients(u)
        gamma = u - np.tensordot(coef, self.basis, axes=1)
        return self._components(coef, gamma)

    def _components(self, coef: np.ndarray, gamma: np.ndarray) -> Components:
        nk = self.nk
        lp = coef[: 2 * nk].reshape(nk, 2)
        lm = coef[2 * nk : 4 * nk].reshape(nk, 2)
        mu1, mu2 = coef[4 * nk], coef[4 * nk + 1]
        a0 = a1 = None
        if self.is_critical:
            a0, a1 = float(coef[4 * nk + 2]), float(coef[4 * nk + 3])
        return Components(lp, lm, float(mu1), float(mu2), a0, a1, gamma, self.kappa, self.c_star, self.is_critical)

    def reconstruct(self, comp: Components) -> np.ndarray:
        return np.tensordot(comp.coefficient_vector(), self.basis, axes=1) + comp.gamma

    def gamma_part(self, u: np.ndarray) -> np.ndarray:
        return u - np.tensordot(self.coefficients(u), self.basis, axes=1)

    # -- norms --------------------------------------------------------------
    def quadratic_form(self, u: np.ndarray) -> float:
        """``<u, L_{c*} u>`` by spectral quadrature."""
        g = self.grid
        F = np.fft.fft2(g.check(u))
        k2 = g.xi[:, None] ** 2 + g.eta[None, :] ** 2
        grad = float(np.sum(k2 * np.abs(F) ** 2) / (g.nx * g.ny)) * g.area_element
        return grad + float(np.sum((self.c_star - 2.0 * self.Q) * u * u)) * g.area_element

    def e_kappa_norm(self, comp: Components) -> float:
        q = self.quadratic_form(comp.gamma)
        if q < -QUAD_TOL:
            raise ValueError(f"negative quadratic form on gamma ({q:.3e}): broken projection")
        return float(np.sqrt(self.weights @ comp.coefficient_vector() ** 2 + max(q, 0.0)))

    def norm(self, u: np.ndarray) -> float:
        """``||u||_{E_kappa}``."""
        return self.e_kappa_norm(self.project(u))

    def discrete_norm_sq(self, u: np.ndarray) -> float:
        """``||P_d u||^2_{E_kappa}``."""
        return float(self.weights @ self.coefficients(u) ** 2)

    # -- mobile distance ----------------------------------------------------
    def phi_delta(self, v: np.ndarray) -> float:
        r = np.sqrt(max(self.quadratic_form(self.gamma_part(v)), 0.0)) / self.delta
        return plateau_phi(r, self.plateau)

    def _shift_objective(self, a: np.ndarray, b: np.ndarray, weight: float):
        g = self.grid
        Fb = np.fft.fft(b, axis=0)
        nyq = g.nx // 2

        def obj(q: float) -> float:
            phase = np.exp(-1j * g.xi * q)
            phase[nyq] = np.cos(g.xi[nyq] * q)
            w = a - np.fft.ifft(Fb * phase[:, None], axis=0).real
            comp = self.project(w)
            val = self.weights @ comp.coefficient_vector() ** 2 + self.quadratic_form(comp.gamma)
            return float(val + self.delta * q * q * weight)

        return obj

    def shift_infimum(self, a: np.ndarray, b: np.ndarray, weight: float) -> tuple[float, float]:
        """``min_q ||a - tau_q b||^2_{E_kappa} + delta q^2 weight`` over ``|q| <= X/2``."""
        g = self.grid
        obj = self._shift_objective(a, b, weight)
        m = int(np.floor(0.5 * g.X / g.dx))
        qs = g.dx * np.arange(-m, m + 1)
        vals = np.array([obj(q) for q in qs])
        i = int(np.argmin(vals))
        best_q, best = float(qs[i]), float(vals[i])
        if 0 < i < len(qs) - 1:
            res = minimize_scalar(obj, bracket=(qs[i - 1], qs[i], qs[i + 1]), method="golden", tol=1e-8)
            if res.fun < best and abs(res.x) <= 0.5 * g.X:
                best_q, best = float(res.x), float(res.fun)
        return best, best_q

    def mobile_distance(self, v0: np.ndarray, c0: float, v1: np.ndarray, c1: float) -> float:
        """Mobile quasi-distance between ``(v0, c0)`` and ``(v1, c1)``."""
        if c0 <= 0 or c1 <= 0:
            raise ValueError("speeds must be positive")
        d2 = self.discrete_norm_sq(v0 - v1)
        g0, g1 = self.gamma_part(v0), self.gamma_part(v1)
        w0, w1 = self.phi_delta(v0) ** 2, self.phi_delta(v1) ** 2
        # both orderings are evaluated, so the result is symmetric exactly
        s01, _ = self.shift_infimum(g0, g1, w1)
        s10, _ = self.shift_infimum(g1, g0, w0)
        return float(np.sqrt(d2 + min(s01, s10) + (np.log(c0) - np.log(c1)) ** 2))


def project(u: np.ndarray, spectrum: UnstableSpectrum, kappa: float = 0.1) -> Components:
    """One-shot :meth:`Decomposition.project`."""
    if u.shape != spectrum.grid.shape:
        raise ValueError(f"field shape {u.shape} does not match spectrum grid {spectrum.grid.shape}")
    return Decomposition(spectrum, kappa).project(u)


def e_kappa_norm(comp: Components, spectrum: UnstableSpectrum) -> float:
    return Decomposition(spectrum, comp.kappa).e_kappa_norm(comp)


def mobile_distance(
    v0: np.ndarray, c0: float, v1: np.ndarray, c1: float, spectrum: UnstableSpectrum, delta: float = 0.05, kappa: float = 0.1
) -> float:
    return Decomposition(spectrum, kappa, delta).mobile_distance(v0, c0, v1, c1)


def coercivity_constant(decomp: Decomposition, fields) -> float:
    """Smallest ``<gamma, L gamma> / ||gamma||_{H^1}^2`` over the gamma parts of ``fields``."""
    g = decomp.grid
    ratios = []
    for u in fields:
        gam = decomp.gamma_part(u)
        ratios.append(decomp.quadratic_form(gam) / g.h1_norm(gam) ** 2)
    return float(min(ratios))


def random_smooth_field(grid: CylGrid, rng: np.random.Generator, amplitude: float = 1.0, width: float = 4.0, kmax: float = 3.0) -> np.ndarray:
    """Localised random field: smooth Gaussian noise under a Gaussian x-envelope."""
    F = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    k2 = grid.xi[:, None] ** 2 + grid.eta[None, :] ** 2
    F *= np.exp(-k2 / kmax**2)
    f = np.fft.ifft2(F).real
    f *= np.exp(-((grid.x[:, None] - rng.uniform(-2.0, 2.0)) ** 2) / width**2)
    return amplitude * f / grid.norm(f)


# ---------------------------------------------------------------------------
# modulation


@dataclass
class ModulationState:
    """``u = tau_rho(v + Q_c)`` or ``u = tau_rho(v + Theta(a, c))``."""

    v: np.ndarray = field(repr=False)
    c: float
    rho: float
    a: tuple[float, float] | None
    residuals: np.ndarray
    iterations: int = 0
    tube_distance: float = 0.0
    bound_ratio: float = 0.0


def tube_distance(u: np.ndarray, c_star: float, grid: CylGrid, Q: np.ndarray | None = None) -> tuple[float, float]:
    """``min_q ||u - tau_q Q_{c*}||_{H^1}`` and the minimising shift.

    ``<u, tau_q Q>_{H^1}`` is a trigonometric polynomial in ``q``; it is
    scanned on the grid shifts by one inverse FFT and refined by Brent.
    """
    if Q is None:
        Q = line_soliton(c_star, grid)
    U, P = np.fft.fft2(grid.check(u)), np.fft.fft2(Q)
    k2 = grid.xi[:, None] ** 2 + grid.eta[None, :] ** 2
    scale = grid.area_element / (grid.nx * grid.ny)
    w = np.sum((1.0 + k2) * U * np.conj(P), axis=1) * scale
    nuu = float(np.sum((1.0 + k2) * np.abs(U) ** 2).real * scale)
    nqq = float(np.sum((1.0 + k2) * np.abs(P) ** 2).real * scale)
    # corr[j] = <u, tau_{j dx} Q>_{H^1}
    corr = np.fft.ifft(w).real * grid.nx
    j = int(np.argmax(corr))
    q0 = j * grid.dx if j <= grid.nx // 2 else (j - grid.nx) * grid.dx
    wr = w.copy()
    wr[grid.nx // 2] = wr[grid.nx // 2].real

    def negcorr(q):
        return -float(np.sum(wr * np.exp(1j * grid.xi * q)).real)

    res = minimize_scalar(negcorr, bounds=(q0 - grid.dx, q0 + grid.dx), method="bounded", options={"xatol": 1e-12})
    q, c = (float(res.x), -res.fun) if -res.fun >= corr[j] else (q0, corr[j])
    return float(np.sqrt(max(nuu + nqq - 2.0 * c, 0.0))), q


def default_tube(c_star: float, grid: CylGrid) -> float:
    return 0.5 * grid.h1_norm(line_soliton(c_star, grid))


def orthogonality_solve(
    u: np.ndarray,
    c_star: float,
    grid: CylGrid,
    tube: float | None = None,
    tol: float = 1e-12,
    max_iter: int = 40,
) -> ModulationState:
    """Find ``(c, rho)`` with ``v = tau_{-rho} u - Q_c`` orthogonal to ``d_x Q*`` and ``Q*``.

    Raises :class:`TubeError` when ``u`` is at H^1 distance ``>= tube`` from
    the orbit of ``Q_{c*}`` (default: half of ``||Q_{c*}||_{H^1}``).
    """
    Q = line_soliton(c_star, grid)
    dxQ, _ = soliton_derivatives(c_star, grid)
    dist, q = tube_distance(u, c_star, grid, Q)
    tube = default_tube(c_star, grid) if tube is None else tube
    if dist >= tube:
        raise TubeError(f"outside tube: distance {dist:.3e} >= {tube:.3e}")
    tests = (dxQ, Q)
    scale = np.array([grid.norm(dxQ) ** 2, grid.norm(Q) ** 2])
    c, rho = c_star, q
    Fu = np.fft.fft(u, axis=0)
    nyq = grid.nx // 2
    G = np.full(2, np.inf)

    def shifted(r):
        phase = np.exp(1j * grid.xi * r)
        phase[nyq] = np.cos(grid.xi[nyq] * r)
        ph = phase[:, None]
        return np.fft.ifft(Fu * ph, axis=0).real, np.fft.ifft(Fu * ph * (1j * grid.xi[:, None]), axis=0).real

    for it in range(1, max_iter + 1):
        if c <= 0:
            raise NewtonError("modulation Newton left c > 0")
        w, wx = shifted(rho)
        Qc = line_soliton(c, grid)
        _, dcQc = soliton_derivatives(c, grid)
        v = w - Qc
        G = np.array([grid.inner(v, t) for t in tests])
        if np.all(np.abs(G) <= tol * scale):
            break
        J = np.array([[-grid.inner(dcQc, t), grid.inner(wx, t)] for t in tests])
        if abs(np.linalg.det(J)) < 1e-14 * np.prod(scale):
            raise NewtonError("modulation Jacobian is singular")
        dc, drho = np.linalg.solve(J, -G)
        c, rho = c + dc, rho + drho
    else:
        raise NewtonError(f"modulation Newton did not converge (residual {np.max(np.abs(G)):.2e})")
    bound = (grid.h1_norm(v) + abs(c - c_star)) / max(dist, 1e-300)
    return ModulationState(v, float(c), float(rho), None, G / scale, it, dist, bound)


def critical_orthogonality_solve(
    u: np.ndarray,
    c_star: float,
    grid: CylGrid,
    family: FamilyCache | None = None,
    tube: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 40,
    initial: tuple[float, float, float, float] | None = None,
) -> ModulationState:
    """Find ``(c, rho, a0, a1)`` with ``v = tau_{-rho} u - Theta(a, c)``
    orthogonal to ``Theta``, ``d_x Theta``, ``d_{a0} Theta`` and ``d_{a1} Theta``.

    The Jacobian drops the terms where the tests themselves are
    differentiated (they are multiplied by ``v``), so convergence is linear
    with a rate of order ``||v||``.
    """
    n = critical_index(c_star, grid.L)
    family = family or FamilyCache(c_star, grid)
    dist, q = tube_distance(u, c_star, grid)
    tube = default_tube(c_star, grid) if tube is None else tube
    if dist >= tube:
        raise TubeError(f"outside tube: distance {dist:.3e} >= {tube:.3e}")
    K = kernel_modes(c_star, grid, n)
    Fu = np.fft.fft(u, axis=0)
    nyq = grid.nx // 2
    if initial is None:
        Q = line_soliton(c_star, grid)
        ush = grid.shift_x(u, -q)
        a0, a1 = (grid.inner(ush - Q, k) / grid.inner(k, k) for k in K)
        c, rho = c_star, q
    else:
        c, rho, a0, a1 = initial
    G = np.full(4, np.inf)
    for it in range(1, max_iter + 1):
        phase = np.exp(1j * grid.xi * rho)
        phase[nyq] = np.cos(grid.xi[nyq] * rho)
        w = np.fft.ifft(Fu * phase[:, None], axis=0).real
        wx = grid.derivative(w, "x")
        th = theta((a0, a1), c, c_star, grid, family)
        thx = grid.derivative(th, "x")
        if np.hypot(a0, a1) < LINEAR_AMPLITUDE:
            dphi = K
        else:
            d0, d1, _, _ = family((a0, a1)).amplitude_derivatives()
            dphi = (d0, d1)
        tha = [dilate(d, c, c_star, grid) for d in dphi]
        thc = (th + 0.5 * grid.x[:, None] * thx) / c
        v = w - th
        tests = [th, thx, tha[0], tha[1]]
        scale = np.array([grid.inner(t, t) for t in tests])
        G = np.array([grid.inner(v, t) for t in tests])
        if np.all(np.abs(G) <= tol * scale):
            break
        cols = [-thc, wx, -tha[0], -tha[1]]
        J = np.array([[grid.inner(col, t) for col in cols] for t in tests])
        step = np.linalg.solve(J, -G)
        c, rho, a0, a1 = c + step[0], rho + step[1], a0 + step[2], a1 + step[3]
        if c <= 0:
            raise NewtonError("critical modulation Newton left c > 0")
    else:
        raise NewtonError(f"critical modulation Newton did not converge (residual {np.max(np.abs(G / scale)):.2e})")
    bound = (grid.h1_norm(v) + abs(c - c_star) + np.hypot(a0, a1) ** 2) / max(dist, 1e-300)
    return ModulationState(v, float(c), float(rho), (float(a0), float(a1)), G / scale, it, dist, bound)
