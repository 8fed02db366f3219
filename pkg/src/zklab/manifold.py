"""
Desk-scale experiments on the dynamics near an unstable line soliton.

Growth rates of the unstable modes, exit times from the tube around the
soliton orbit, shooting for the unstable amplitudes that keep a trajectory
in the tube (a computable proxy for the graph of the center-stable
manifold), the small-data scaling of those amplitudes, and the quartic
expansion of the action along the bifurcating family at critical speeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .decomposition import Decomposition, tube_distance
from .evolution import Integrator, evolve_perturbation
from .grid import CylGrid
from .spectrum import UnstableSpectrum, compute_spectrum
from .waves import (
    FamilyCache,
    bifurcation_coefficients,
    beta,
    critical_index,
    functionals,
    kernel_modes,
    line_soliton,
    theta,
)


def default_grid(L: float = 1.0) -> CylGrid:
    """Grid used by the shooting experiments at ``c* = 1``.

    The box is wide enough that the box eigenvalue is within 1% of the
    true one (the eigenfunction has a slow left tail).
    """
    from .grid import new_grid

    return new_grid(512, 8, 60.0, L)


class _Lab:
    """Shared state for experiments at one ``c*``: spectrum, projections, tests."""

    def __init__(self, c_star: float, grid: CylGrid, spectrum: UnstableSpectrum | None = None, dt: float = 0.05):
        self.c_star = float(c_star)
        self.grid = grid
        self.spectrum = spectrum or compute_spectrum(c_star, grid)
        if not self.spectrum.pairs:
            raise ValueError(f"c*={c_star} is subcritical: no unstable directions")
        self.decomp = Decomposition(self.spectrum)
        self.Q = line_soliton(c_star, grid)
        self.dt = dt
        self.labels = self.spectrum.indices()
        self.plus_tests = [self.decomp.tests[i] for i in range(len(self.labels))]

    @property
    def lam(self) -> float:
        return self.spectrum.pairs[0].lam

    def unstable_field(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        out = self.grid.zeros()
        for bi, (k, j) in zip(b, self.labels):
            if bi:
                out = out + bi * self.spectrum.eigenfunction(k, j, 1)
        return out

    def plus_coefficients(self, v: np.ndarray) -> np.ndarray:
        dA = self.grid.area_element
        return np.array([np.sum(v * t) * dA for t in self.plus_tests])

    def integrator(self, t_end: float, check_every: int) -> Integrator:
        # IFRK4 at dt = 0.05 amplifies high x-wavenumbers at rate ~0.06, which
        # ends long runs near t = 265; ETDRK4 is stable at this step
        return Integrator(
            scheme="etdrk4", dt=self.dt, t_end=t_end, snapshot_every=10**9, diagnostics_every=check_every, cfl_guard=10.0
        )


# ---------------------------------------------------------------------------
# growth and exit


@dataclass
class GrowthFit:
    lambda_fit: float
    lambda_eig: float
    rel_dev: float
    times: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False)


def growth_rate(
    c_star: float,
    direction: tuple[int, int, int],
    eps: float,
    T: float | None = None,
    grid: CylGrid | None = None,
    spectrum: UnstableSpectrum | None = None,
    dt: float = 0.05,
    sample_every: int = 10,
) -> GrowthFit:
    """Fit the exponential rate of ``Lambda_k^{sign,j}`` for ``u0 = Q* + eps F_k^{sign,j}``.

    The full equation is integrated; the fit uses the window where the
    coefficient stays within a factor 10 of ``eps``, i.e. ``t <= ln(10)/lambda``.
    """
    if not 1e-6 <= eps <= 1e-2:
        raise ValueError(f"eps must lie in [1e-6, 1e-2], got {eps}")
    k, j, sign = direction
    grid = grid or default_grid()
    lab = _Lab(c_star, grid, spectrum, dt)
    lam = lab.spectrum.pair(k).lam
    T = np.log(10.0) / lam if T is None else T
    idx = lab.labels.index((k, j)) + (0 if sign > 0 else len(lab.labels))
    test = lab.decomp.tests[idx]
    v0 = eps * lab.spectrum.eigenfunction(k, j, sign)
    ts, cs = [], []

    def monitor(t, v, z):
        ts.append(t)
        cs.append(float(np.sum(v * test)) * grid.area_element)
        if abs(cs[-1]) > 10.0 * eps:
            return True
        return False

    monitor(0.0, v0, None)
    evolve_perturbation(v0, c_star, grid, lab.integrator(T, 10**9), monitor=monitor, monitor_every=sample_every)
    ts, cs = np.array(ts), np.array(cs)
    keep = np.abs(cs) <= 10.0 * eps
    if keep.sum() < 3:
        raise RuntimeError("tube exit before a fittable window")
    slope = np.polyfit(ts[keep], np.log(np.abs(cs[keep])), 1)[0]
    ref = lam if sign > 0 else -lam
    return GrowthFit(float(slope), float(ref), float(abs(slope - ref) / lam), ts, cs)


@dataclass
class ExitResult:
    """Outcome of one run: ``time`` is ``None`` when the trajectory survived."""

    time: float | None
    survived: bool
    t_max: float
    plus_coefficients: np.ndarray
    max_distance: float

    def sign(self, index: int) -> int:
        if self.survived:
            return 0
        return int(np.sign(self.plus_coefficients[index]))


def _exit_run(lab: _Lab, v0: np.ndarray, eps_tube: float, T_max: float, check_every: int, y_even: bool) -> ExitResult:
    grid = lab.grid
    state = {"max": 0.0, "v": v0}

    def monitor(t, v, z):
        d, _ = tube_distance(lab.Q + v, lab.c_star, grid, lab.Q)
        state["max"] = max(state["max"], d)
        state["v"] = v
        return d >= eps_tube

    monitor(0.0, v0, None)
    if state["max"] >= eps_tube:
        return ExitResult(0.0, False, T_max, lab.plus_coefficients(v0), state["max"])
    tr = evolve_perturbation(
        v0, lab.c_star, grid, lab.integrator(T_max, 10**9), monitor=monitor, monitor_every=check_every, y_even=y_even
    )
    coef = lab.plus_coefficients(state["v"])
    if tr.stopped:
        return ExitResult(float(tr.exit_time), False, T_max, coef, state["max"])
    return ExitResult(None, True, T_max, coef, state["max"])


def exit_time(
    u0: np.ndarray,
    c_star: float,
    eps_tube: float = 0.05,
    T_max: float = 200.0,
    grid: CylGrid | None = None,
    spectrum: UnstableSpectrum | None = None,
    dt: float = 0.05,
    check_every: int = 10,
) -> ExitResult:
    """First time with ``min_q ||u(t) - tau_q Q*||_{H^1} >= eps_tube``, or survival."""
    grid = grid or default_grid()
    lab = _Lab(c_star, grid, spectrum, dt)
    return _exit_run(lab, np.asarray(u0) - lab.Q, eps_tube, T_max, check_every, False)


# ---------------------------------------------------------------------------
# shooting


@dataclass
class ShootResult:
    """Unstable amplitudes ``b_star`` that keep ``Q* + w + sum b F+`` in the tube."""

    w: np.ndarray = field(repr=False)
    b_star: np.ndarray
    bracket_width: float
    brackets: list
    t_stay: float
    survived: bool
    converged: bool
    exit_log: list = field(repr=False)

    def log_table(self):
        return [(e["coord"], e["b"], e["exit_time"], e["sign"]) for e in self.exit_log]


def _y_reflect(w: np.ndarray) -> np.ndarray:
    return w[:, (w.shape[1] - np.arange(w.shape[1])) % w.shape[1]]


def _is_y_even(w: np.ndarray, rtol: float = 1e-12) -> bool:
    # grid cosines are even only up to rounding
    return bool(np.max(np.abs(w - _y_reflect(w))) <= rtol * max(np.max(np.abs(w)), 1e-300))


def shoot_graph(
    w: np.ndarray,
    c_star: float = 1.0,
    eps_tube: float = 0.05,
    T_target: float | None = None,
    tol: float = 1e-6,
    grid: CylGrid | None = None,
    spectrum: UnstableSpectrum | None = None,
    bracket: float = 1e-2,
    dt: float = 0.05,
    check_every: int = 10,
    require_survival: bool = True,
    max_trials: int = 200,
) -> ShootResult:
    """Bisect the unstable amplitudes so the trajectory stays in the tube.

    Each unstable coordinate ``b_i`` is bisected on the sign of
    ``Lambda^{+,i}`` at tube exit, with the other coordinates frozen at their
    current best values. Bisection continues past ``tol`` until a midpoint
    survives ``T_target`` (when ``require_survival``) or the bracket reaches
    floating-point resolution. For a datum even in ``y`` the sine
    coordinates vanish by symmetry; they are fixed at zero and the flow is
    kept in the even subspace.
    """
    grid = grid or default_grid()
    lab = _Lab(c_star, grid, spectrum, dt)
    w = np.asarray(grid.check(w), dtype=float)
    if grid.h1_norm(w) > 0.05:
        raise ValueError("shooting requires ||w||_{H^1} <= 0.05")
    T_target = 30.0 / lab.lam if T_target is None else T_target
    y_even = _is_y_even(w)
    if y_even:
        w = 0.5 * (w + _y_reflect(w))
    nb = len(lab.labels)
    coords = [i for i, (k, j) in enumerate(lab.labels) if not (y_even and j == 1)]
    b = np.zeros(nb)
    log: list = []
    brackets: list = [None] * nb

    def trial(bvec, coord):
        if len(log) >= max_trials:
            raise RuntimeError(f"shooting exceeded {max_trials} trials")
        res = _exit_run(lab, w + lab.unstable_field(bvec), eps_tube, T_target, check_every, y_even)
        log.append(
            dict(coord=coord, b=bvec.copy(), exit_time=res.time, sign=res.sign(coord), coefficients=res.plus_coefficients)
        )
        return res

    for i in coords:
        h = bracket
        lo, hi = b.copy(), b.copy()
        for _ in range(8):
            lo[i], hi[i] = b[i] - h, b[i] + h
            s_lo, s_hi = trial(lo, i).sign(i), trial(hi, i).sign(i)
            if s_lo * s_hi < 0:
                break
            h *= 4.0
        else:
            raise RuntimeError(f"no sign change for coordinate {i} within +-{h / 4.0:.2e}; see log")
        found = None
        while True:
            width = hi[i] - lo[i]
            floor = 4.0 * np.finfo(float).eps * max(abs(lo[i]), abs(hi[i]), 1e-300)
            if width <= tol and not require_survival:
                break
            mid = 0.5 * (lo + hi)
            if width <= floor or mid[i] in (lo[i], hi[i]):
                break
            s = trial(mid, i).sign(i)
            if s == 0:
                found = mid
                break
            if s == s_lo:
                lo = mid
            else:
                hi = mid
        if found is not None:
            b[i] = found[i]
            if hi[i] - lo[i] > tol:
                # certify a bracket of width tol around the surviving midpoint
                lo2, hi2 = found.copy(), found.copy()
                lo2[i] -= 0.5 * tol
                hi2[i] += 0.5 * tol
                if trial(lo2, i).sign(i) * trial(hi2, i).sign(i) < 0:
                    lo, hi = lo2, hi2
        else:
            b[i] = 0.5 * (lo[i] + hi[i])
        brackets[i] = (float(lo[i]), float(hi[i]))

    final = trial(b, -1)
    t_stay = T_target if final.survived else float(final.time)
    widths = [hi - lo for lo, hi in (br for br in brackets if br is not None)]
    width = float(max(widths)) if widths else 0.0
    return ShootResult(w, b, width, brackets, t_stay, bool(final.survived), width <= tol, log)


# ---------------------------------------------------------------------------
# small-data scaling


@dataclass
class HolderFit:
    exponent: float
    band: tuple[float, float]
    eps: np.ndarray
    b_norms: np.ndarray
    dropped: list
    in_window: bool


def holder_probe(
    c_star: float = 1.0,
    direction: tuple[int, int, int] = (1, 0, -1),
    eps_list=(3e-3, 1e-2, 3e-2),
    tol: float = 1e-13,
    grid: CylGrid | None = None,
    spectrum: UnstableSpectrum | None = None,
    confidence: float = 0.95,
    dt: float = 0.025,
    **shoot_kwargs,
) -> HolderFit:
    """Slope of ``log |b_star(eps)|`` against ``log eps`` for ``w = eps F_k^{sign,j}``.

    Points whose ``|b_star|`` falls below the bisection tolerance are
    dropped. The band is the two-sided t-interval of the slope.

    The default step is finer than for single shots: at ``dt = 0.05`` the
    discrete flow leaks ``~2e-8 eps`` of the stable datum into the unstable
    coordinate, which competes with ``|b_star| ~ eps^3`` at small ``eps``.
    """
    grid = grid or default_grid()
    lab = _Lab(c_star, grid, spectrum)
    k, j, sign = direction
    F = lab.spectrum.eigenfunction(k, j, sign)
    scale = grid.h1_norm(F)
    eps_used, norms, dropped = [], [], []
    for eps in eps_list:
        # eps measures the H^1 size of the stable datum; shooting needs <= 0.05
        w = eps * F / scale
        res = shoot_graph(
            w, c_star, grid=grid, spectrum=lab.spectrum, tol=tol, require_survival=False, dt=dt, **shoot_kwargs
        )
        nb = float(np.linalg.norm(res.b_star))
        if nb <= tol:
            dropped.append(eps)
            continue
        eps_used.append(eps)
        norms.append(nb)
    if len(eps_used) < 3:
        raise RuntimeError(f"insufficient converged points ({len(eps_used)} < 3)")
    x, y = np.log(eps_used), np.log(norms)
    fit = stats.linregress(x, y)
    tq = stats.t.ppf(0.5 + 0.5 * confidence, len(x) - 2)
    band = (fit.slope - tq * fit.stderr, fit.slope + tq * fit.stderr)
    return HolderFit(float(fit.slope), (float(band[0]), float(band[1])), np.array(eps_used), np.array(norms), dropped, 1.5 < fit.slope < 2.0)


# ---------------------------------------------------------------------------
# quartic Lyapunov coefficient


@dataclass
class QuarticFit:
    """Action difference along ``Theta(a, beta(a, c))`` against the quartic law.

    ``transverse`` holds ``((c* - c)/c*) ||d_y Theta||^2`` per sample and
    ``transverse_ratio`` the measured ``(dS - quartic) / transverse``.
    """

    c_star: float
    c: float
    amplitudes: np.ndarray
    dS: np.ndarray
    transverse: np.ndarray
    coef_fit: float
    coef_formula: float
    rel_dev: float
    quartic_residual: float
    transverse_ratio: np.ndarray
    transverse_rel_dev: float


def quartic_coefficient(c_star: float, C2: float, grid: CylGrid) -> float:
    """``5 c* C2 ||Q^{3/2} cos(n y/L)||^2 / (48 ||Q||^2)``."""
    n = critical_index(c_star, grid.L)
    Q = line_soliton(c_star, grid)
    Kc, _ = kernel_modes(c_star, grid, n)
    return 5.0 * c_star * C2 * grid.inner(Kc, Kc) / (48.0 * grid.inner(Q, Q))


def lyapunov_quartic_check(
    c_star: float,
    a_values,
    c_values,
    grid: CylGrid,
    family: FamilyCache | None = None,
    C2: float | None = None,
) -> list[QuarticFit]:
    """Compare ``S_c(Theta(a, beta)) - S_c(Q_c)`` with its quartic expansion.

    For each ``c``, the transverse term is subtracted, the remainder is
    fitted by ``K a^4 + K6 a^6`` and ``K`` is compared with
    ``(c/c*)^{5/2}`` times the displayed constant.
    """
    family = family or FamilyCache(c_star, grid)
    if C2 is None:
        _, C2 = bifurcation_coefficients(c_star, grid, cache=family)
    K = quartic_coefficient(c_star, C2, grid)
    amps = np.asarray(a_values, dtype=float)
    if np.any(amps > 0.1):
        raise ValueError("quartic fits use |a| <= 0.1 only")
    out = []
    for c in c_values:
        _, _, S0 = functionals(line_soliton(c, grid), c, grid)
        dS, trans = [], []
        for s in amps:
            a = (float(s), 0.0)
            bt = beta(a, c, c_star, grid, family)
            th = theta(a, bt, c_star, grid, family)
            dS.append(functionals(th, c, grid)[2] - S0)
            dy = grid.derivative(th, "y")
            trans.append((c_star - c) / c_star * grid.inner(dy, dy))
        dS, trans = np.array(dS), np.array(trans)
        kp = (c / c_star) ** 2.5 * K
        y = dS - trans
        nz = amps > 0
        A = np.column_stack([amps[nz] ** 4, amps[nz] ** 6])
        coef = np.linalg.lstsq(A, y[nz], rcond=None)[0]
        pure = np.linalg.lstsq(A[:, :1], y[nz], rcond=None)[0]
        resid = float(np.linalg.norm(A[:, :1] @ pure - y[nz]) / max(np.linalg.norm(y[nz]), 1e-300))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(trans != 0, (dS - kp * amps**4) / trans, np.nan)
        tdev = float(np.nanmax(np.abs(ratio[nz] - 1.0))) if c != c_star else 0.0
        out.append(
            QuarticFit(
                float(c_star), float(c), amps, dS, trans, float(coef[0]), float(kp),
                float(abs(coef[0] - kp) / abs(kp)), resid, ratio, tdev,
            )
        )
    return out


# ---------------------------------------------------------------------------
# stability sweep


@dataclass
class SweepEntry:
    label: str
    eps: float
    b_star: np.ndarray
    sup_distance: float
    survived: bool
    uncorrected_exit: float | None


def stability_sweep(
    c_star: float,
    perturbations: dict,
    eps: float,
    T: float,
    grid: CylGrid | None = None,
    spectrum: UnstableSpectrum | None = None,
    eps_tube: float = 0.05,
    **shoot_kwargs,
) -> list[SweepEntry]:
    """Shoot-correct each perturbation, then record ``sup_t`` tube distance over ``[0, T]``.

    ``perturbations`` maps labels to fields of unit H^1 norm, scaled by
    ``eps``. The uncorrected datum is also run and its exit time recorded.
    """
    grid = grid or default_grid()
    lab = _Lab(c_star, grid, spectrum)
    out = []
    for label, p in perturbations.items():
        w = eps * np.asarray(p)
        if eps == 0.0:
            out.append(SweepEntry(label, eps, np.zeros(len(lab.labels)), 0.0, True, None))
            continue
        sh = shoot_graph(w, c_star, eps_tube, T, grid=grid, spectrum=lab.spectrum, **shoot_kwargs)
        y_even = _is_y_even(w)
        w = sh.w
        corrected = _exit_run(lab, w + lab.unstable_field(sh.b_star), eps_tube, T, 10, y_even)
        raw = _exit_run(lab, w, eps_tube, T, 10, y_even)
        out.append(SweepEntry(label, eps, sh.b_star, corrected.max_distance, corrected.survived, raw.time))
    return out
