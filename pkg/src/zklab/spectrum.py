"""
Transverse-mode reduction of the linearised flow around the line soliton.

On ``f(x) cos(k y / L)`` the operator ``d_x (-Lap + c - 2 Q_c)`` acts as the
1D operator ``A_k = D (-D^2 + c + k^2/L^2 - 2 Q_c)``. Unstable eigenvalues are
located on the exponentially weighted operator ``e^{a x} A_k e^{-a x}``,
which pushes the continuous spectrum into the left half-plane so eigenvalues
near the instability threshold are not lost to the box. Profiles used for
projections and initial data come from the unweighted box operator, which is
what the time integrators actually propagate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grid import CylGrid
from .waves import line_soliton, soliton_profile

UNSTABLE_THRESHOLD = 1e-6
REAL_TOL = 1e-8


class ResolutionError(RuntimeError):
    """An eigenpair expected from theory was not resolved on the grid."""


def n0(c: float, L: float) -> int:
    """Mode bound with ``2(n0-1)/sqrt(5c) < L <= 2 n0/sqrt(5c)``, ``n0 >= 2``.

    Raises ``ValueError`` for ``c <= 4/(5 L^2)`` (no unstable modes).
    """
    if not (c > 0 and L > 0):
        raise ValueError("c and L must be positive")
    if c <= 4.0 / (5.0 * L**2):
        raise ValueError(f"subcritical: c={c} <= 4/(5L^2)={4.0 / (5.0 * L**2)}")
    r = L * np.sqrt(5.0 * c) / 2.0
    n = int(np.ceil(r - 1e-12))
    return max(n, 2)


@dataclass
class ModeOperator:
    k: int
    c: float
    matrix: np.ndarray = field(repr=False)
    hamiltonian: np.ndarray = field(repr=False)


def _mode_matrices(c: float, k: int, grid: CylGrid, weight: float = 0.0):
    D = grid.x_diff_matrix(1)
    if weight:
        D = D - weight * np.eye(grid.nx)
        D2 = D @ D
    else:
        D2 = grid.x_diff_matrix(2)
    H = -D2 + np.diag(c + k**2 / grid.L**2 - 2.0 * soliton_profile(c, grid.x))
    return D @ H, H


def mode_operator(c: float, k: int, grid: CylGrid) -> ModeOperator:
    """Dense ``A_k`` on the x grid (``hamiltonian`` is the symmetric factor)."""
    if k < 0:
        raise ValueError("k must be non-negative")
    A, H = _mode_matrices(c, k, grid)
    return ModeOperator(k, float(c), A, H)


def default_weight(c: float) -> float:
    return float(np.sqrt(c) / 3.0)


def leading_eigenvalue(c: float, k: int, grid: CylGrid, weight: float | None = None) -> complex:
    """Eigenvalue of largest real part of the weighted ``A_k``."""
    a = default_weight(c) if weight is None else weight
    A, _ = _mode_matrices(c, k, grid, a)
    w = np.linalg.eigvals(A)
    return complex(w[np.argmax(w.real)])


@dataclass
class UnstablePair:
    k: int
    lam: float
    lam_box: float | None
    profile: np.ndarray | None = field(repr=False)
    scale: float = 1.0


@dataclass
class UnstableSpectrum:
    """Unstable eigenvalues ``lambda_k`` (k = 1..n0-1) with box profiles ``f_k``.

    After :func:`normalize_pairs` the 2D eigenfunctions
    ``F_k^{+,j} = f_k(x) trig_j(k y/L)`` and
    ``F_k^{-,j} = minus_sign * f_k(-x) trig_j(k y/L)`` pair to one under ``L_c``.
    """

    c_star: float
    L: float
    n0: int
    pairs: list[UnstablePair]
    grid: CylGrid = field(repr=False)
    normalized: bool = False
    minus_sign: float = -1.0

    @property
    def kappa_star(self) -> float | None:
        return min(p.lam for p in self.pairs) if self.pairs else None

    @property
    def kappa_sup(self) -> float | None:
        return max(p.lam for p in self.pairs) if self.pairs else None

    @property
    def lambdas(self) -> list[float]:
        return [p.lam for p in self.pairs]

    def pair(self, k: int) -> UnstablePair:
        for p in self.pairs:
            if p.k == k:
                return p
        raise KeyError(f"no unstable pair for k={k}")

    def eigenfunction(self, k: int, j: int, sign: int) -> np.ndarray:
        """``F_k^{sign,j}`` on the grid (``sign`` is +1 or -1, ``j`` 0=cos, 1=sin)."""
        p = self.pair(k)
        if p.profile is None:
            raise ResolutionError(f"mode k={k} has no resolved box profile")
        g = self.grid
        trig = g.mode_cos(k) if j == 0 else g.mode_sin(k)
        if sign > 0:
            prof = p.profile
        else:
            prof = self.minus_sign * p.profile[reflection_index(g.nx)]
        return np.outer(prof, trig)

    def indices(self):
        """All ``(k, j)`` labels in storage order."""
        return [(p.k, j) for p in self.pairs for j in (0, 1)]


def reflection_index(nx: int) -> np.ndarray:
    """Index map of ``x -> -x`` on the periodic grid ``x_j = -X + j dx``."""
    return (nx - np.arange(nx)) % nx


def linearized_L(u: np.ndarray, c: float, grid: CylGrid, Q: np.ndarray | None = None) -> np.ndarray:
    """``L_c u = -Lap u + c u - 2 Q_c u``."""
    if Q is None:
        Q = line_soliton(c, grid)
    return -grid.laplacian(u) + c * u - 2.0 * Q * u


def _box_eigenpair(c: float, k: int, grid: CylGrid):
    A, _ = _mode_matrices(c, k, grid)
    w, V = np.linalg.eig(A)
    i = int(np.argmax(w.real))
    lam = w[i]
    if lam.real <= UNSTABLE_THRESHOLD or abs(lam.imag) > REAL_TOL * abs(lam):
        return None, None
    f = V[:, i]
    # rotate to a real vector
    f = f * np.exp(-1j * np.angle(f[np.argmax(np.abs(f))]))
    return float(lam.real), f.real.copy()


def unstable_spectrum(c_star: float, grid: CylGrid, weight: float | None = None) -> UnstableSpectrum:
    """Unstable eigenpairs for every transverse mode ``k = 1..n0-1``.

    Subcritical speeds return an empty spectrum with ``n0 = 1``.
    """
    L = grid.L
    if c_star <= 4.0 / (5.0 * L**2):
        return UnstableSpectrum(float(c_star), L, 1, [], grid)
    nmax = n0(c_star, L)
    if nmax - 1 >= grid.ny // 2:
        raise ResolutionError(f"ny={grid.ny} cannot represent transverse mode {nmax - 1}")
    pairs = []
    for k in range(1, nmax):
        lam = leading_eigenvalue(c_star, k, grid, weight)
        if lam.real <= UNSTABLE_THRESHOLD:
            raise ResolutionError(f"no unstable eigenvalue resolved for k={k} at c={c_star}")
        if abs(lam.imag) > REAL_TOL * abs(lam):
            raise ResolutionError(f"unstable eigenvalue for k={k} is not real: {lam}")
        lam_box, prof = _box_eigenpair(c_star, k, grid)
        pairs.append(UnstablePair(k, float(lam.real), lam_box, prof))
    return UnstableSpectrum(float(c_star), L, nmax, pairs, grid)


def count_unstable_modes(c: float, grid: CylGrid, kmax: int, weight: float | None = None) -> list[int]:
    """Transverse modes ``1..kmax`` whose weighted operator has ``Re lambda > 1e-6``."""
    return [k for k in range(1, kmax + 1) if leading_eigenvalue(c, k, grid, weight).real > UNSTABLE_THRESHOLD]


def _raw_pairing(spec: UnstableSpectrum, p: UnstablePair, sign: float) -> float:
    g = spec.grid
    _, H = _mode_matrices(spec.c_star, p.k, g)
    fm = sign * p.profile[reflection_index(g.nx)]
    # the y integral of cos^2 or sin^2 over one period is pi L
    return float(p.profile @ (H @ fm) * g.dx * np.pi * g.L)


def normalize_pairs(spec: UnstableSpectrum) -> UnstableSpectrum:
    """Rescale profiles so that ``<F_k^{+,j}, L F_k^{-,j}> = 1``.

    ``F^-`` is built from ``F^+`` by reflection with a minus sign; if the raw
    pairing comes out negative the sign convention is flipped instead.
    """
    if not spec.pairs:
        return replace(spec, normalized=True)
    raw = []
    for p in spec.pairs:
        if p.profile is None:
            raise ResolutionError(
                f"mode k={p.k}: box operator has no unstable eigenvalue; enlarge X"
            )
        raw.append(_raw_pairing(spec, p, -1.0))
    raw = np.array(raw)
    if np.any(np.abs(raw) < 1e-10):
        raise ValueError("degenerate eigenfunction pairing")
    signs = np.sign(raw)
    if np.any(signs != signs[0]):
        raise ValueError("pairing signs differ across modes")
    minus_sign = -1.0 if signs[0] > 0 else 1.0
    new_pairs = []
    for p, r in zip(spec.pairs, raw):
        s = 1.0 / np.sqrt(abs(r))
        new_pairs.append(UnstablePair(p.k, p.lam, p.lam_box, p.profile * s, p.scale * s))
    return replace(spec, pairs=new_pairs, normalized=True, minus_sign=minus_sign)


def compute_spectrum(c_star: float, grid: CylGrid, weight: float | None = None) -> UnstableSpectrum:
    """:func:`unstable_spectrum` followed by :func:`normalize_pairs`."""
    return normalize_pairs(unstable_spectrum(c_star, grid, weight))


def kernel_at_critical(c: float, n: int, grid: CylGrid) -> float:
    """Relative residual of ``Q^{3/2}`` under ``-d_x^2 + c + n^2/L^2 - 2 Q_c``.

    Vanishes exactly when ``c = 4 n^2 / (5 L^2)``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    q = soliton_profile(c, grid.x)
    f = q**1.5
    fxx = np.fft.ifft(-(grid.xi**2) * np.fft.fft(f)).real
    r = -fxx + (c + n**2 / grid.L**2 - 2.0 * q) * f
    return float(np.linalg.norm(r) / np.linalg.norm(f))
