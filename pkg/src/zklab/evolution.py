"""
Time integration of the ZK flow, the localised modulation system and the
linearised flow around a moving background.

All integrators split ``u_t = L u + N(u)`` with ``L`` diagonal in Fourier
space and advance the stiff part exactly (integrating-factor RK4 by default,
Cox-Matthews ETDRK4 on request). Small real state vectors such as the
modulation parameters ``(c, rho)`` ride along with zero linear part.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .decomposition import smooth_plateau
from .grid import CylGrid
from .waves import functionals, line_soliton, soliton_derivatives

SCHEMES = ("ifrk4", "etdrk4")


class NumericalGuardError(RuntimeError):
    """An integration left its admissible regime (NaN, blow-up, CFL)."""


@dataclass(frozen=True)
class Integrator:
    """Time-stepping controls.

    Parameters
    ----------
    scheme : {"ifrk4", "etdrk4"}
    dt, t_end : float
    dealias : bool
        Apply the two-thirds rule to every explicit term.
    cfl_guard : float
        Abort when ``max|u| * dt`` exceeds this bound.
    max_amplitude : float
        Abort when ``max|u|`` exceeds this bound.
    snapshot_every, diagnostics_every : int
        Cadence in steps; the initial and final states are always kept.
    frame_speed : float
        Integrate in the frame moving with this speed.
    """

    scheme: str = "ifrk4"
    dt: float = 1e-2
    t_end: float = 1.0
    dealias: bool = True
    cfl_guard: float = 1.0
    max_amplitude: float = 1e3
    snapshot_every: int = 1
    diagnostics_every: int = 1
    frame_speed: float = 0.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        if self.snapshot_every < 1 or self.diagnostics_every < 1:
            raise ValueError("snapshot_every and diagnostics_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class Trajectory:
    """Snapshots and diagnostic series of one integration."""

    grid: CylGrid = field(repr=False)
    times: np.ndarray
    snapshots: list = field(repr=False)
    diag_times: np.ndarray
    M: np.ndarray
    E: np.ndarray
    S: np.ndarray
    c_ref: float = 1.0
    frame_speed: float = 0.0
    kind: str = "field"
    series: dict = field(default_factory=dict, repr=False)
    exit_time: float | None = None
    stopped: bool = False

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation between snapshots."""
        ts = self.times
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise ValueError(f"t={t} outside trajectory horizon [{ts[0]}, {ts[-1]}]")
        i = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2)) if len(ts) > 1 else 0
        if len(ts) == 1:
            return self.snapshots[0]
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return (1.0 - w) * self.snapshots[i] + w * self.snapshots[i + 1]


class _Fourier:
    """Real-to-complex transforms and symbols for one grid."""

    def __init__(self, grid: CylGrid, dealias: bool = True):
        self.grid = grid
        nyr = grid.ny // 2 + 1
        xi = grid.xi.copy()
        xi[grid.nx // 2] = 0.0
        self.xi = xi[:, None]
        self.eta = np.abs(grid.eta[:nyr])[None, :]
        self.k2 = grid.xi[:, None] ** 2 + self.eta**2
        self.ikx = 1j * self.xi
        m = np.abs(np.fft.fftfreq(grid.nx, d=1.0 / grid.nx))
        n = np.arange(nyr)
        mask = (m[:, None] <= grid.nx / 3.0) & (n[None, :] <= grid.ny / 3.0)
        self.mask = mask if dealias else np.ones_like(mask)

    def fwd(self, u):
        return np.fft.rfft2(u)

    def inv(self, U):
        return np.fft.irfft2(U, s=self.grid.shape)

    def dx(self, U):
        return self.ikx * U

    def dx_product(self, f):
        """Spectral ``d_x`` of a physical-space product, dealiased."""
        return self.ikx * self.mask * np.fft.rfft2(f)


def _etd_coefficients(Lh: np.ndarray, m: int = 32):
    # full circle: the half-circle shortcut is valid only for real Lh
    r = np.exp(2j * np.pi * (np.arange(1, m + 1) - 0.5) / m)
    LR = Lh[..., None] + r
    eL = np.exp(LR)
    Qc = np.mean((np.exp(LR / 2) - 1.0) / LR, axis=-1)
    f1 = np.mean((-4.0 - LR + eL * (4.0 - 3.0 * LR + LR**2)) / LR**3, axis=-1)
    f2 = np.mean((2.0 + LR + eL * (-2.0 + LR)) / LR**3, axis=-1)
    f3 = np.mean((-4.0 - 3.0 * LR - LR**2 + eL * (4.0 - LR)) / LR**3, axis=-1)
    return Qc, f1, f2, f3


class _Stepper:
    """One-step map for ``(U, z)`` with ``U_t = Lsym U + f_U``, ``z_t = f_z``."""

    def __init__(self, Lsym: np.ndarray, dt: float, scheme: str):
        self.dt = dt
        self.scheme = scheme
        self.E = np.exp(0.5 * dt * Lsym)
        self.E2 = self.E**2
        if scheme == "etdrk4":
            Qc, f1, f2, f3 = _etd_coefficients(dt * Lsym)
            self.Qc, self.f1, self.f2, self.f3 = dt * Qc, dt * f1, dt * f2, dt * f3

    def step(self, U, z, t, rhs):
        h = self.dt
        if self.scheme == "ifrk4":
            E, E2 = self.E, self.E2
            k1, l1 = rhs(U, z, t)
            k2, l2 = rhs(E * (U + 0.5 * h * k1), z + 0.5 * h * l1, t + 0.5 * h)
            k3, l3 = rhs(E * U + 0.5 * h * k2, z + 0.5 * h * l2, t + 0.5 * h)
            k4, l4 = rhs(E2 * U + h * E * k3, z + h * l3, t + h)
            Un = E2 * U + (h / 6.0) * (E2 * k1 + 2.0 * E * (k2 + k3) + k4)
        else:
            E, E2, Qc = self.E, self.E2, self.Qc
            k1, l1 = rhs(U, z, t)
            a = E * U + Qc * k1
            k2, l2 = rhs(a, z + 0.5 * h * l1, t + 0.5 * h)
            b = E * U + Qc * k2
            k3, l3 = rhs(b, z + 0.5 * h * l2, t + 0.5 * h)
            c = E * a + Qc * (2.0 * k3 - k1)
            k4, l4 = rhs(c, z + h * l3, t + h)
            Un = E2 * U + self.f1 * k1 + 2.0 * self.f2 * (k2 + k3) + self.f3 * k4
        zn = z + (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
        return Un, zn


def _check_state(u: np.ndarray, integ: Integrator, t: float) -> None:
    amax = float(np.max(np.abs(u)))
    if not np.isfinite(amax):
        raise NumericalGuardError(f"non-finite values at t={t:.6g}")
    if amax > integ.max_amplitude:
        raise NumericalGuardError(f"blow-up guard: max|u|={amax:.3e} at t={t:.6g}")
    if amax * integ.dt > integ.cfl_guard:
        raise NumericalGuardError(f"CFL guard: max|u|*dt={amax * integ.dt:.3e} at t={t:.6g}")


def _run(U0, z0, rhs, Lsym, grid, integ, to_field, diag, monitor=None, monitor_every=1, on_step=None, symmetry=None):
    """Shared driver: stepping, guards, snapshots, diagnostics, early stop."""
    four = _Fourier(grid)
    four_inv = four.inv
    stepper = _Stepper(Lsym, integ.dt, integ.scheme)
    U, z = U0, np.array(z0, dtype=float)
    n = integ.n_steps
    times, snaps = [0.0], [to_field(four_inv(U), z)]
    dt_list, dvals = [], []
    zs_t, zs = [0.0], [z.copy()]
    extra = [on_step(U, z, 0.0)] if on_step else []

    def record_diag(t, u):
        dt_list.append(t)
        dvals.append(diag(u, z))

    record_diag(0.0, snaps[0])
    stopped, exit_time = False, None
    for i in range(1, n + 1):
        t = i * integ.dt
        U, z = stepper.step(U, z, t - integ.dt, rhs)
        u = four_inv(U)
        if symmetry is not None:
            u = symmetry(u)
            U = four.fwd(u)
        _check_state(u, integ, t)
        last = i == n
        if i % integ.diagnostics_every == 0 or last:
            record_diag(t, to_field(u, z))
        zs_t.append(t)
        zs.append(z.copy())
        if on_step:
            extra.append(on_step(U, z, t))
        stop = monitor is not None and (i % monitor_every == 0 or last) and monitor(t, to_field(u, z), z)
        if i % integ.snapshot_every == 0 or last or stop:
            times.append(t)
            snaps.append(to_field(u, z))
        if stop:
            stopped, exit_time = True, t
            break
    dv = np.array(dvals)
    return dict(
        times=np.array(times),
        snapshots=snaps,
        diag_times=np.array(dt_list),
        M=dv[:, 0],
        E=dv[:, 1],
        S=dv[:, 2],
        z_t=np.array(zs_t),
        z=np.array(zs),
        extra=extra,
        stopped=stopped,
        exit_time=exit_time,
    )


def evolve(
    u0: np.ndarray,
    grid: CylGrid,
    integ: Integrator,
    c_ref: float = 1.0,
    nonlinear: bool = True,
    monitor: Callable | None = None,
    monitor_every: int = 1,
) -> Trajectory:
    """Integrate ``u_t = -d_x(Lap u + u^2)`` (in the frame moving at ``frame_speed``).

    ``monitor(t, u, z)`` is called every ``monitor_every`` steps; a truthy
    return stops the run and records ``exit_time``.
    """
    F = _Fourier(grid, integ.dealias)
    s = integ.frame_speed
    Lsym = F.ikx * (F.k2 + s)
    sign = 1.0 if nonlinear else 0.0

    def rhs(U, z, t):
        u = F.inv(U)
        return -sign * F.dx_product(u * u), z * 0.0

    def diag(u, z):
        return functionals(u, c_ref, grid)

    out = _run(F.fwd(grid.check(u0)), [], rhs, Lsym, grid, integ, lambda u, z: u, diag, monitor, monitor_every)
    return Trajectory(
        grid, out["times"], out["snapshots"], out["diag_times"], out["M"], out["E"], out["S"],
        c_ref, s, "field", {}, out["exit_time"], out["stopped"],
    )


def evolve_perturbation(
    v0: np.ndarray,
    c_star: float,
    grid: CylGrid,
    integ: Integrator,
    monitor: Callable | None = None,
    monitor_every: int = 1,
    y_even: bool = False,
) -> Trajectory:
    """ZK flow of ``u = Q_{c*} + v`` in the frame moving at ``c*``.

    Integrates ``v_t = d_x(-Lap v + c* v - 2 Q* v - v^2)``, the same equation
    as :func:`evolve` written around the exact travelling wave. Rounding
    errors then scale with ``|v|`` rather than ``|u|``, which matters when a
    trajectory must shadow the soliton for many e-folding times. Diagnostics
    refer to the full field ``Q* + v``; snapshots hold ``v``.

    With ``y_even`` the state is re-symmetrised under ``y -> -y`` after every
    step. The flow preserves that subspace; enforcing it keeps rounding from
    seeding the odd unstable directions.
    """
    F = _Fourier(grid, integ.dealias)
    Q = line_soliton(c_star, grid)
    Lsym = F.ikx * (F.k2 + c_star)

    def rhs(U, z, t):
        v = F.inv(U)
        return -F.dx_product(2.0 * Q * v + v * v), z * 0.0

    def diag(v, z):
        return functionals(Q + v, c_star, grid)

    sym = None
    if y_even:
        refl = (grid.ny - np.arange(grid.ny)) % grid.ny
        v0 = 0.5 * (v0 + v0[:, refl])

        def sym(v):
            return 0.5 * (v + v[:, refl])

    out = _run(
        F.fwd(grid.check(v0)), [], rhs, Lsym, grid, integ, lambda v, z: v, diag, monitor, monitor_every, symmetry=sym
    )
    return Trajectory(
        grid, out["times"], out["snapshots"], out["diag_times"], out["M"], out["E"], out["S"],
        c_star, c_star, "perturbation", {}, out["exit_time"], out["stopped"],
    )


# ---------------------------------------------------------------------------
# localised modulation system


def cutoff(r: float) -> float:
    """Smooth ``chi`` with ``chi = 1`` on ``|r| <= 1`` and ``chi = 0`` on ``|r| >= 2``."""
    return 1.0 - float(smooth_plateau(abs(r), 1.0, 2.0))


class _Modulation:
    """Quadratures of the modulation equations at reference speed ``c*``."""

    def __init__(self, c_star: float, grid: CylGrid, F: _Fourier, delta: float):
        self.c_star = c_star
        self.grid = grid
        self.F = F
        self.delta = delta
        self.Q = line_soliton(c_star, grid)
        self.dxQ, self.dcQ = soliton_derivatives(c_star, grid)
        dA = grid.area_element
        self.dA = dA
        self.nxq2 = float(np.sum(self.dxQ**2)) * dA
        # L* d_x^2 Q*, the test function of the linear part of the rho equation
        q2 = grid.derivative(self.Q, "x", 2)
        self.Ldx2Q = -grid.laplacian(q2) + c_star * q2 - 2.0 * self.Q * q2

    def chi(self, v: np.ndarray, c: float) -> float:
        h1sq = self.grid.h1_norm(v) ** 2
        return cutoff((h1sq + (c - self.c_star) ** 2) / self.delta**2)

    def rates(self, v: np.ndarray, vx: np.ndarray, c: float, chi: float):
        """Return ``(rho_dot - c, c_dot)`` keeping both constraints fixed."""
        dA, cs = self.dA, self.c_star
        Qc = line_soliton(c, self.grid)
        dxQc, dcQc = soliton_derivatives(c, self.grid)
        tests = (self.dxQ, self.Q)
        # coefficient of (rho_dot - c) and of c_dot in <v_t, T>
        col_r = self.dxQ + chi * (vx + dxQc - self.dxQ)
        col_c = -(self.dcQ + chi * (dcQc - self.dcQ))
        A = np.array([[np.sum(col_r * T) * dA, np.sum(col_c * T) * dA] for T in tests])
        if abs(A[0, 0]) < 1e-8 or abs(A[1, 1]) < 1e-8:
            raise NumericalGuardError(f"modulation matrix near-singular: {A}")
        # remaining terms: <d_x L* v, T> + chi <d_x((c - c*) v - v^2 + 2 (Q* - Qc) v), T>
        # with <d_x f, T> = -<f, d_x T>
        g = (c - cs) * v - v * v + 2.0 * (self.Q - Qc) * v
        lin0 = -np.sum(v * self.Ldx2Q) * dA
        r0 = lin0 - chi * np.sum(g * self.Ldx_test0) * dA
        r1 = -chi * np.sum(g * self.dxQ) * dA - np.sum(v * self.LdxQ) * dA
        sol = np.linalg.solve(A, -np.array([r0, r1]))
        return float(sol[0]), float(sol[1])

    def prepare(self):
        g = self.grid
        # <d_x L* v, d_x Q*> = -<v, L* d_x^2 Q*>, <d_x f, d_x Q*> = -<f, d_x^2 Q*>
        self.Ldx_test0 = g.derivative(self.Q, "x", 2)
        # <d_x L* v, Q*> = -<v, L* d_x Q*> (zero analytically, kept for consistency)
        self.LdxQ = -g.laplacian(self.dxQ) + self.c_star * self.dxQ - 2.0 * self.Q * self.dxQ
        return self


def localized_evolve(
    v0: np.ndarray,
    c0: float,
    rho0: float,
    c_star: float,
    grid: CylGrid,
    integ: Integrator,
    delta: float = 0.05,
) -> Trajectory:
    """Integrate the localised system for ``(v, c, rho)``.

    ``v_t = d_x L* v + (rho_dot - c) d_x Q* - c_dot d_c Q* + chi N(v, c, rho)``
    with ``(rho_dot - c, c_dot)`` chosen so that ``<v, d_x Q*>`` and
    ``<v, Q*>`` stay constant, and ``chi`` the cutoff on
    ``(||v||_{H^1}^2 + |c - c*|^2) / delta^2``. Snapshots hold ``v``; the
    series ``c``, ``rho``, ``rho_dot`` and ``chi`` are recorded every step.
    """
    F = _Fourier(grid, integ.dealias)
    mod = _Modulation(c_star, grid, F, delta).prepare()
    Lsym = F.ikx * (F.k2 + c_star)
    Qs, dxQs, dcQs = mod.Q, mod.dxQ, mod.dcQ

    def parts(U, z):
        v = F.inv(U)
        vx = F.inv(F.dx(U))
        c = z[0]
        chi = mod.chi(v, c)
        rmc, cdot = mod.rates(v, vx, c, chi)
        return v, vx, c, chi, rmc, cdot

    def rhs(U, z, t):
        v, vx, c, chi, rmc, cdot = parts(U, z)
        Qc = line_soliton(c, grid)
        _, dcQc = soliton_derivatives(c, grid)
        rdot = c + rmc
        # d_x of every product is taken spectrally and dealiased
        prod = -2.0 * Qs * v + chi * (-v * v + 2.0 * (Qs - Qc) * v + rmc * (Qc - Qs))
        phys = rmc * dxQs - cdot * dcQs + chi * ((rdot - c_star) * vx - cdot * (dcQc - dcQs))
        dU = F.dx_product(prod) + F.mask * F.fwd(phys)
        return dU, np.array([cdot, rdot])

    def diag(v, z):
        u = v + line_soliton(z[0], grid)
        return functionals(u, c_star, grid)

    def on_step(U, z, t):
        v, vx, c, chi, rmc, cdot = parts(U, z)
        return (c + rmc, chi)

    out = _run(F.fwd(grid.check(v0)), [c0, rho0], rhs, Lsym, grid, integ, lambda v, z: v, diag, on_step=on_step)
    extra = np.array(out["extra"])
    series = {
        "t": out["z_t"],
        "c": out["z"][:, 0],
        "rho": out["z"][:, 1],
        "rho_dot": extra[:, 0],
        "chi": extra[:, 1],
    }
    return Trajectory(
        grid, out["times"], out["snapshots"], out["diag_times"], out["M"], out["E"], out["S"],
        c_star, 0.0, "localized", series, out["exit_time"], out["stopped"],
    )


# ---------------------------------------------------------------------------
# linearised flow


@dataclass(frozen=True)
class Background:
    """Callable ``t -> (v0, c0, rho_dot0)`` describing a modulated solution."""

    sample: Callable
    t_end: float
    c_star: float

    def __call__(self, t: float):
        if t > self.t_end + 1e-9:
            raise ValueError(f"background horizon exceeded: t={t} > {self.t_end}")
        return self.sample(t)


def static_background(c_star: float, grid: CylGrid, t_end: float = np.inf) -> Background:
    """The soliton itself: ``v0 = 0``, ``c0 = c*``, ``rho0 = c* t``."""
    zero = grid.zeros()
    return Background(lambda t: (zero, c_star, c_star), t_end, c_star)


def background_from_trajectory(traj: Trajectory) -> Background:
    """Interpolate a :func:`localized_evolve` trajectory in time."""
    if traj.kind != "localized":
        raise ValueError("background must come from localized_evolve")
    s = traj.series

    def sample(t):
        return traj.at(t), float(np.interp(t, s["t"], s["c"])), float(np.interp(t, s["t"], s["rho_dot"]))

    return Background(sample, float(traj.times[-1]), traj.c_ref)


def linearized_evolve(eta0: np.ndarray, background, grid: CylGrid, integ: Integrator) -> Trajectory:
    """Integrate ``eta_t = d_x L* eta - 2 d_x((Q_{c0} - Q*) eta) + (rho0' - c*) d_x eta - 2 d_x(v0 eta)``.

    ``background`` is a :class:`Background` or a localised :class:`Trajectory`.
    Diagnostics hold ``(||eta||^2, 0, 0)``.
    """
    if isinstance(background, Trajectory):
        background = background_from_trajectory(background)
    if integ.t_end > background.t_end + 1e-9:
        raise ValueError(f"background horizon exceeded: t_end={integ.t_end} > {background.t_end}")
    cs = background.c_star
    F = _Fourier(grid, integ.dealias)
    Lsym = F.ikx * (F.k2 + cs)

    def rhs(U, z, t):
        eta = F.inv(U)
        v0, c0, rdot = background(t)
        Qc = line_soliton(c0, grid)
        dU = F.dx_product(-2.0 * (Qc + v0) * eta) + (rdot - cs) * F.mask * F.dx(U)
        return dU, z * 0.0

    def diag(eta, z):
        return (grid.inner(eta, eta), 0.0, 0.0)

    out = _run(F.fwd(grid.check(eta0)), [], rhs, Lsym, grid, integ, lambda e, z: e, diag)
    return Trajectory(
        grid, out["times"], out["snapshots"], out["diag_times"], out["M"], out["E"], out["S"],
        cs, 0.0, "linearized", {}, out["exit_time"], out["stopped"],
    )


# ---------------------------------------------------------------------------
# tracking


def modulation_track(traj: Trajectory, c_star: float, tube: float | None = None, family=None) -> Trajectory:
    """Run the orthogonality solve on every snapshot of a field trajectory.

    Snapshots are taken in the frame moving at ``traj.frame_speed``; the
    recorded ``rho`` is the lab-frame position. Leaving the tube ends the
    series and sets ``exit_time``.
    """
    from .decomposition import TubeError, critical_orthogonality_solve, orthogonality_solve
    from .waves import is_critical

    g = traj.grid
    critical = is_critical(c_star, g.L)
    rows = {k: [] for k in ("t", "c", "rho", "v_l2", "v_h1", "a0", "a1", "residual", "tube")}
    exit_time = None
    prev = None
    for t, u in zip(traj.times, traj.snapshots):
        if traj.kind == "perturbation":
            u = u + line_soliton(traj.c_ref, g)
        try:
            if critical:
                st = critical_orthogonality_solve(u, c_star, g, family, tube=tube, initial=prev)
                prev = (st.c, st.rho, st.a[0], st.a[1])
            else:
                st = orthogonality_solve(u, c_star, g, tube=tube)
        except TubeError:
            exit_time = float(t)
            break
        rows["t"].append(float(t))
        rows["c"].append(st.c)
        rows["rho"].append(st.rho + traj.frame_speed * float(t))
        rows["v_l2"].append(g.norm(st.v))
        rows["v_h1"].append(g.h1_norm(st.v))
        rows["a0"].append(st.a[0] if st.a else np.nan)
        rows["a1"].append(st.a[1] if st.a else np.nan)
        rows["residual"].append(float(np.max(np.abs(st.residuals))))
        rows["tube"].append(st.tube_distance)
    series = {k: np.array(v) for k, v in rows.items()}
    n = len(series["t"])
    return Trajectory(
        g, traj.times[:n], traj.snapshots[:n], traj.diag_times, traj.M, traj.E, traj.S,
        traj.c_ref, traj.frame_speed, traj.kind, series, exit_time, exit_time is not None,
    )
