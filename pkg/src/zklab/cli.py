"""
Command-line front end: ``zklab <subcommand> --config run.yaml --out results/``.

Every subcommand reads a :class:`~zklab.config.RunConfig`, validates it,
runs one experiment and writes ``<subcommand>.json`` (summary),
``<subcommand>.csv`` (diagnostics) and, for time-dependent runs, binary
snapshots. Exit statuses: 0 ok, 2 validation, 3 numerical guard, 4 I/O.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .decomposition import TubeError
from .evolution import NumericalGuardError
from .grid import new_grid
from .spectrum import ResolutionError
from .waves import NewtonError

EXIT_OK, EXIT_VALIDATION, EXIT_GUARD, EXIT_IO = 0, 2, 3, 4

# Fixed diagnostics columns; Lambda/mu/a coefficients are appended per run.
CSV_COLUMNS = ["t", "M", "E", "S_c", "c", "rho", "v_norm"]

# Experiment-block parameters understood by each subcommand, with defaults.
EXPERIMENT_DEFAULTS: dict[str, dict] = {
    "simulate": {"u0": "soliton", "c0": None, "shift": 0.0, "eps": 1e-3, "direction": [1, 0, 1], "frame_speed": 0.0},
    "spectrum": {"growth": False, "growth_eps": 1e-3, "kmax": 4, "dt": 0.05},
    "bifurcate": {"amplitudes": [0.02, 0.04, 0.06, 0.08, 0.1], "beta_amplitudes": [0.01, 0.02, 0.03, 0.05]},
    "decompose": {"snapshot": None, "eps": 1e-2, "shift": 0.0, "c0": None},
    "shoot": {"eps": 1e-2, "direction": [1, 0, -1], "tol": 1e-6, "T_target": None, "dt": 0.05, "require_survival": True},
    "quartic": {"amplitudes": [0.02, 0.04, 0.06, 0.08], "c_ratios": [1.0, 0.95]},
    "track": {"u0": "perturbed", "c0": None, "shift": 0.0, "eps": 1e-3, "direction": [1, 0, 1], "frame_speed": None},
}


def experiment_params(cfg: RunConfig, sub: str) -> dict:
    defaults = EXPERIMENT_DEFAULTS[sub]
    extra = set(cfg.experiment) - set(defaults)
    if extra:
        raise ConfigError(f"experiment.{sorted(extra)[0]}", f"not a parameter of '{sub}'")
    params = {**defaults, **cfg.experiment}
    for key in ("eps", "growth_eps", "tol"):
        if key in params and not (isinstance(params[key], (int, float)) and params[key] > 0):
            raise ConfigError(f"experiment.{key}", f"must be positive, got {params[key]!r}")
    if "direction" in params:
        d = params["direction"]
        if not (isinstance(d, (list, tuple)) and len(d) == 3 and d[0] >= 1 and d[1] in (0, 1) and d[2] in (1, -1)):
            raise ConfigError("experiment.direction", f"expected [k>=1, j in {{0,1}}, sign in {{1,-1}}], got {d!r}")
    if sub in ("simulate", "track") and params["u0"] not in ("soliton", "perturbed", "random"):
        raise ConfigError("experiment.u0", f"must be soliton, perturbed or random, got {params['u0']!r}")
    for key in ("c0",):
        if params.get(key) is not None and not params[key] > 0:
            raise ConfigError(f"experiment.{key}", "must be positive")
    return params


def _grid(cfg: RunConfig):
    g = cfg.grid
    return new_grid(g.nx, g.ny, g.X, g.L)


def _integrator(cfg: RunConfig, frame_speed: float = 0.0):
    from .evolution import Integrator

    i = cfg.integrator
    return Integrator(
        scheme=i.scheme, dt=i.dt, t_end=i.t_end, snapshot_every=i.snapshot_every,
        diagnostics_every=i.snapshot_every, frame_speed=frame_speed,
    )


def _initial_field(cfg: RunConfig, p: dict, grid):
    """Soliton ``tau_shift Q_c0``, plus ``eps F_k^{sign,j}`` or a seeded random smooth bump."""
    from .decomposition import random_smooth_field
    from .spectrum import compute_spectrum
    from .waves import line_soliton

    c_star = cfg.physics.c_star
    c0 = p["c0"] or c_star
    u = grid.shift_x(line_soliton(c0, grid), p["shift"])
    if p["u0"] == "perturbed":
        k, j, s = p["direction"]
        spec = compute_spectrum(c_star, grid)
        u = u + p["eps"] * spec.eigenfunction(k, j, s)
    elif p["u0"] == "random":
        rng = np.random.default_rng(cfg.seed)
        f = random_smooth_field(grid, rng)
        u = u + p["eps"] * f / grid.h1_norm(f)
    return u


# ---------------------------------------------------------------------------
# runners: each returns (summary, table or None, snapshots)


def _run_simulate(cfg: RunConfig, p: dict):
    from .evolution import evolve

    grid = _grid(cfg)
    u0 = _initial_field(cfg, p, grid)
    c_ref = p["c0"] or cfg.physics.c_star
    traj = evolve(u0, grid, _integrator(cfg, p["frame_speed"]), c_ref=c_ref)
    rows = [dict(t=t, M=m, E=e, S_c=s) for t, m, e, s in zip(traj.diag_times, traj.M, traj.E, traj.S)]
    summary = {
        "t_end": float(traj.times[-1]),
        "M0": traj.M[0],
        "E0": traj.E[0],
        "mass_drift": abs(traj.M[-1] - traj.M[0]) / abs(traj.M[0]),
        "energy_drift": abs(traj.E[-1] - traj.E[0]) / abs(traj.E[0]),
        "n_snapshots": len(traj.snapshots),
    }
    if p["u0"] == "soliton":
        exact = grid.shift_x(u0, c_ref * traj.times[-1] - p["frame_speed"] * traj.times[-1])
        summary["transport_error"] = grid.norm(traj.final - exact) / grid.norm(exact)
    return summary, (CSV_COLUMNS, rows), list(zip(traj.times, traj.snapshots))


def _run_spectrum(cfg: RunConfig, p: dict):
    from .spectrum import compute_spectrum, count_unstable_modes, kernel_at_critical, linearized_L
    from .waves import critical_index, is_critical

    grid = _grid(cfg)
    c = cfg.physics.c_star
    spec = compute_spectrum(c, grid)
    pairings, cross = [], 0.0
    for pr in spec.pairs:
        for j in (0, 1):
            Lm = linearized_L(spec.eigenfunction(pr.k, j, -1), c, grid)
            pairings.append(grid.inner(spec.eigenfunction(pr.k, j, 1), Lm))
            cross = max(cross, abs(grid.inner(spec.eigenfunction(pr.k, 1 - j, 1), Lm)))
    pairing_ok = bool(all(abs(x - 1.0) <= 1e-6 for x in pairings) and cross <= 1e-8)
    summary = {
        "c_star": c,
        "L": grid.L,
        "n0": spec.n0,
        "codimension": 2 * (spec.n0 - 1) if spec.pairs else 0,
        "unstable_modes": [pr.k for pr in spec.pairs],
        "lambdas": spec.lambdas,
        "kappa_star": spec.kappa_star,
        "kappa_sup": spec.kappa_sup,
        "pairings": pairings,
        "max_cross_pairing": cross,
        "pairing_check": pairing_ok,
        "unstable_modes_scan": count_unstable_modes(c, grid, int(p["kmax"])),
        "is_critical": is_critical(c, grid.L),
    }
    if summary["is_critical"]:
        summary["kernel_residual"] = kernel_at_critical(c, critical_index(c, grid.L), grid)
    rows = [dict(k=pr.k, lam=pr.lam, lam_box=pr.lam_box) for pr in spec.pairs]
    columns = ["k", "lam", "lam_box"]
    if p["growth"] and spec.pairs:
        from .manifold import growth_rate

        fits = []
        for pr in spec.pairs:
            for sign in (1, -1):
                f = growth_rate(c, (pr.k, 0, sign), p["growth_eps"], grid=grid, spectrum=spec, dt=p["dt"])
                fits.append(dict(k=pr.k, sign=sign, lambda_fit=f.lambda_fit, lambda_eig=f.lambda_eig, rel_dev=f.rel_dev))
        summary["growth"] = fits
    return summary, (columns, rows), []


def _run_bifurcate(cfg: RunConfig, p: dict):
    from .waves import FamilyCache, beta, bifurcation_coefficients, c2_identity, is_critical, line_soliton, theta

    grid = _grid(cfg)
    c = cfg.physics.c_star
    if not is_critical(c, grid.L):
        raise ConfigError("physics.c_star", f"{c} is not a critical speed 4n^2/(5L^2) with n > 1")
    cache = FamilyCache(c, grid)
    C_star, C2 = bifurcation_coefficients(c, grid, p["amplitudes"], cache=cache)
    ident = c2_identity(c, C_star, grid)
    Q = line_soliton(c, grid)
    mq = grid.inner(Q, Q)
    rows = []
    for a in p["beta_amplitudes"]:
        b = beta((a, 0.0), c, c, grid, cache)
        th = theta((a, 0.0), b, c, grid, cache)
        pred = c - c * C2 * a**2 / (3.0 * mq)
        rows.append(dict(a=a, beta=b, beta_pred=pred, mass_mismatch=abs(grid.inner(th, th) - mq) / mq,
                         rel_dev=abs((b - c) - (pred - c)) / abs(pred - c)))
    summary = {
        "c_star": c,
        "C_star": C_star,
        "C2": C2,
        "C2_identity": ident,
        "rel_dev": abs(C2 - ident) / abs(ident),
        "beta": rows,
    }
    return summary, (["a", "beta", "beta_pred", "mass_mismatch", "rel_dev"], rows), []


def _run_decompose(cfg: RunConfig, p: dict):
    from .decomposition import Decomposition, critical_orthogonality_solve, orthogonality_solve, random_smooth_field
    from .spectrum import compute_spectrum
    from .storage import load_snapshot
    from .waves import is_critical, line_soliton

    grid = _grid(cfg)
    ph = cfg.physics
    if p["snapshot"]:
        u, header = load_snapshot(p["snapshot"])
        if (header["nx"], header["ny"], header["X"], header["L"]) != (grid.nx, grid.ny, grid.X, grid.L):
            raise ConfigError("experiment.snapshot", "snapshot grid does not match the grid block")
    else:
        rng = np.random.default_rng(cfg.seed)
        f = random_smooth_field(grid, rng)
        u = grid.shift_x(line_soliton(p["c0"] or ph.c_star, grid), p["shift"]) + p["eps"] * f / grid.h1_norm(f)
    spec = compute_spectrum(ph.c_star, grid)
    dec = Decomposition(spec, ph.kappa, ph.delta)
    if is_critical(ph.c_star, grid.L):
        st = critical_orthogonality_solve(u, ph.c_star, grid)
    else:
        st = orthogonality_solve(u, ph.c_star, grid)
    comp = dec.project(st.v)
    summary = {
        "c": st.c,
        "rho": st.rho,
        "a": list(st.a) if st.a else None,
        "residuals": st.residuals,
        "v_norm": grid.norm(st.v),
        "v_h1": grid.h1_norm(st.v),
        "tube_distance": st.tube_distance,
        "Lambda_plus": comp.Lambda_plus,
        "Lambda_minus": comp.Lambda_minus,
        "mu1": comp.mu1,
        "mu2": comp.mu2,
        "e_kappa_norm": dec.e_kappa_norm(comp),
    }
    labels = _coefficient_labels(dec)
    row = dict(zip(labels, comp.coefficient_vector()))
    row.update(c=st.c, rho=st.rho, v_norm=grid.norm(st.v))
    return summary, (CSV_COLUMNS + labels, [row]), []


def _run_shoot(cfg: RunConfig, p: dict):
    from .manifold import _Lab, _exit_run, shoot_graph

    grid = _grid(cfg)
    ph = cfg.physics
    lab = _Lab(ph.c_star, grid, dt=p["dt"])
    k, j, s = p["direction"]
    F = lab.spectrum.eigenfunction(k, j, s)
    w = p["eps"] * F / grid.h1_norm(F)
    res = shoot_graph(
        w, ph.c_star, ph.eps_tube, p["T_target"], p["tol"], grid, lab.spectrum,
        dt=p["dt"], require_survival=bool(p["require_survival"]),
    )
    T = p["T_target"] or 30.0 / lab.lam
    raw = _exit_run(lab, w, ph.eps_tube, T, 10, j == 0)
    rows = [dict(coord=e["coord"], b=float(np.linalg.norm(e["b"])), exit_time=e["exit_time"], sign=e["sign"]) for e in res.exit_log]
    summary = {
        "b_star": res.b_star,
        "bracket_width": res.bracket_width,
        "converged": res.converged,
        "survived": res.survived,
        "t_stay": res.t_stay,
        "T_target": T,
        "uncorrected_exit": raw.time,
        "trials": len(res.exit_log),
    }
    return summary, (["coord", "b", "exit_time", "sign"], rows), []


def _run_quartic(cfg: RunConfig, p: dict):
    from .manifold import lyapunov_quartic_check

    grid = _grid(cfg)
    c = cfg.physics.c_star
    fits = lyapunov_quartic_check(c, p["amplitudes"], [r * c for r in p["c_ratios"]], grid)
    rows, summary = [], {"c_star": c, "fits": []}
    for f in fits:
        summary["fits"].append(dict(c=f.c, coef_fit=f.coef_fit, coef_paper=f.coef_formula, rel_dev=f.rel_dev,
                                    quartic_residual=f.quartic_residual, transverse_rel_dev=f.transverse_rel_dev))
        for a, d, tr, r in zip(f.amplitudes, f.dS, f.transverse, f.transverse_ratio):
            rows.append(dict(c=f.c, a=a, dS=d, transverse=tr, transverse_ratio=r))
    f0 = fits[0]
    summary.update(coef_fit=f0.coef_fit, coef_paper=f0.coef_formula, rel_dev=f0.rel_dev)
    return summary, (["c", "a", "dS", "transverse", "transverse_ratio"], rows), []


def _coefficient_labels(dec) -> list[str]:
    labels = []
    for sign in ("plus", "minus"):
        for pr in dec.spectrum.pairs:
            labels += [f"Lambda_{sign}_{pr.k}_0", f"Lambda_{sign}_{pr.k}_1"]
    labels += ["mu1", "mu2"] + (["a0", "a1"] if dec.is_critical else [])
    return labels


def _run_track(cfg: RunConfig, p: dict):
    from .decomposition import Decomposition
    from .evolution import evolve, modulation_track
    from .spectrum import compute_spectrum
    from .waves import line_soliton

    grid = _grid(cfg)
    ph = cfg.physics
    u0 = _initial_field(cfg, p, grid)
    speed = ph.c_star if p["frame_speed"] is None else p["frame_speed"]
    traj = evolve(u0, grid, _integrator(cfg, speed), c_ref=ph.c_star)
    tr = modulation_track(traj, ph.c_star)
    dec = Decomposition(compute_spectrum(ph.c_star, grid), ph.kappa, ph.delta)
    labels = _coefficient_labels(dec)
    s = tr.series
    rows = []
    diag = {float(t): (m, e, sc) for t, m, e, sc in zip(traj.diag_times, traj.M, traj.E, traj.S)}
    for i, t in enumerate(s["t"]):
        m, e, sc = diag.get(float(t), (None, None, None))
        row = dict(t=t, M=m, E=e, S_c=sc, c=s["c"][i], rho=s["rho"][i], v_norm=s["v_l2"][i])
        u = tr.snapshots[i]
        if not dec.is_critical:
            # u is stored in the moving frame; rho is the lab-frame position
            v = grid.shift_x(u, -(s["rho"][i] - speed * t)) - line_soliton(s["c"][i], grid)
            row.update(zip(labels, dec.coefficients(v)))
        rows.append(row)
    summary = {
        "t_end": float(traj.times[-1]),
        "exit_time": tr.exit_time,
        "c_final": s["c"][-1] if len(s["c"]) else None,
        "rho_final": s["rho"][-1] if len(s["rho"]) else None,
        "max_residual": float(np.max(s["residual"])) if len(s["residual"]) else None,
        "mass_drift": abs(traj.M[-1] - traj.M[0]) / abs(traj.M[0]),
    }
    return summary, (CSV_COLUMNS + labels, rows), list(zip(traj.times, traj.snapshots))


RUNNERS = {
    "simulate": _run_simulate,
    "spectrum": _run_spectrum,
    "bifurcate": _run_bifurcate,
    "decompose": _run_decompose,
    "shoot": _run_shoot,
    "quartic": _run_quartic,
    "track": _run_track,
}


def plan(sub: str, cfg: RunConfig) -> str:
    """Human-readable resolved plan (printed by ``--dry-run``)."""
    params = experiment_params(cfg, sub)
    lines = [f"subcommand: {sub}", f"config_hash: {cfg.hash()}", "resolved config:"]
    lines += ["  " + s for s in cfgmod.dumps(cfg).splitlines()]
    lines.append("experiment parameters:")
    lines += [f"  {k}: {v!r}" for k, v in sorted(params.items())]
    if sub in ("simulate", "track"):
        i = cfg.integrator
        lines.append(f"steps: {int(round(i.t_end / i.dt))}, snapshots every {i.snapshot_every}")
    return "\n".join(lines)


def run(sub: str, cfg: RunConfig, out: str | Path, dry_run: bool = False) -> int:
    """Validate, dispatch and write artifacts; returns the exit status."""
    from .storage import emit_report, save_snapshot

    try:
        cfgmod.validate(cfg, sub)
        params = experiment_params(cfg, sub)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if dry_run:
        print(plan(sub, cfg))
        return EXIT_OK
    try:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        summary, table, snaps = RUNNERS[sub](cfg, params)
        h = cfg.hash()
        grid = _grid(cfg)
        if snaps:
            sd = out / "snapshots"
            sd.mkdir(exist_ok=True)
            for n, (t, f) in enumerate(snaps):
                save_snapshot(sd / f"{sub}_{n:05d}.bin", f, grid, t, sub, h)
        paths = emit_report(summary, out, sub, h, table)
        cfgmod.save(cfg, out / f"{sub}.config.yaml")
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalGuardError, ResolutionError, NewtonError, TubeError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # module preconditions not caught by config validation
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zklab", description=__doc__.strip().splitlines()[0])
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name in cfgmod.SUBCOMMANDS:
        sp = subs.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", type=Path, help="YAML run configuration (defaults if omitted)")
        sp.add_argument("--out", type=Path, default=Path("results"), help="output directory")
        sp.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
        sp.add_argument("--seed", type=int, help="override the config seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return run(args.subcommand, cfg, args.out, args.dry_run)


if __name__ == "__main__":
    sys.exit(main())
