"""
Pseudospectral backbone on the truncated cylinder [-X, X) x [0, 2*pi*L).

Fields are plain ``(nx, ny)`` float arrays with axis 0 along x. Spectral
coefficients use numpy's FFT ordering, normalised so that

    f(x_j, y_l) = sum_{m,n} F[m, n] exp(i (xi_m (x_j + X) + eta_n y_l)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CylGrid:
    """Uniform periodic grid on the truncated cylinder.

    Parameters
    ----------
    nx, ny : int
        Points along x and y; both even and at least 8.
    X : float
        Half-width of the x box.
    L : float
        Transverse period parameter; y has period ``2*pi*L``.
    """

    nx: int
    ny: int
    X: float
    L: float
    x: np.ndarray = field(init=False, repr=False, compare=False)
    y: np.ndarray = field(init=False, repr=False, compare=False)
    xi: np.ndarray = field(init=False, repr=False, compare=False)
    eta: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 8, got {n}")
        if not (self.X > 0 and np.isfinite(self.X)):
            raise ValueError(f"X must be positive, got {self.X}")
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ValueError(f"L must be positive, got {self.L}")
        dx = 2.0 * self.X / self.nx
        dy = 2.0 * np.pi * self.L / self.ny
        x = -self.X + dx * np.arange(self.nx)
        y = dy * np.arange(self.ny)
        # xi_m = pi m / X, eta_n = n / L in FFT order
        xi = 2.0 * np.pi * np.fft.fftfreq(self.nx, d=dx)
        eta = 2.0 * np.pi * np.fft.fftfreq(self.ny, d=dy)
        for name, val in (("x", x), ("y", y), ("xi", xi), ("eta", eta)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    # -- geometry -----------------------------------------------------------
    @property
    def dx(self) -> float:
        return 2.0 * self.X / self.nx

    @property
    def dy(self) -> float:
        return 2.0 * np.pi * self.L / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def area_element(self) -> float:
        return self.dx * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` coordinate arrays of shape ``(nx, ny)``."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def from_profile(self, profile: np.ndarray) -> np.ndarray:
        """Broadcast a 1D x-profile to a y-independent field."""
        profile = np.asarray(profile, dtype=float)
        if profile.shape != (self.nx,):
            raise ValueError(f"profile must have shape ({self.nx},), got {profile.shape}")
        return np.repeat(profile[:, None], self.ny, axis=1)

    def check(self, f: np.ndarray, name: str = "field") -> np.ndarray:
        f = np.asarray(f)
        if f.shape != self.shape:
            raise ValueError(f"{name} has shape {f.shape}, grid expects {self.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError(f"{name} contains non-finite values")
        return f

    # -- transforms ---------------------------------------------------------
    def to_spectral(self, f: np.ndarray) -> np.ndarray:
        f = self.check(f)
        return np.fft.fft2(f) / (self.nx * self.ny)

    def from_spectral(self, F: np.ndarray) -> np.ndarray:
        F = self.check(F, "coefficients")
        return np.fft.ifft2(F).real * (self.nx * self.ny)

    def _symbol(self, axis: str, order: int) -> np.ndarray:
        if order not in (1, 2, 3):
            raise ValueError(f"derivative order must be 1, 2 or 3, got {order}")
        if axis == "x":
            k, n = self.xi.copy(), self.nx
        elif axis == "y":
            k, n = self.eta.copy(), self.ny
        else:
            raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
        sym = (1j * k) ** order
        if order % 2:
            # odd derivatives of the Nyquist mode are not real-representable
            sym[n // 2] = 0.0
        return sym[:, None] if axis == "x" else sym[None, :]

    def derivative(self, f: np.ndarray, axis: str = "x", order: int = 1) -> np.ndarray:
        """Spectral derivative of ``f`` along ``axis``."""
        sym = self._symbol(axis, order)
        if axis == "x":
            out = np.fft.ifft(np.fft.fft(self.check(f), axis=0) * sym, axis=0)
        else:
            out = np.fft.ifft(np.fft.fft(self.check(f), axis=1) * sym, axis=1)
        return out.real

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        F = np.fft.fft2(self.check(f))
        k2 = self.xi[:, None] ** 2 + self.eta[None, :] ** 2
        return np.fft.ifft2(-k2 * F).real

    def gradient_sq(self, f: np.ndarray) -> np.ndarray:
        """Pointwise ``|grad f|^2``."""
        return self.derivative(f, "x") ** 2 + self.derivative(f, "y") ** 2

    def shift_x(self, f: np.ndarray, q: float) -> np.ndarray:
        """Translation ``(tau_q f)(x, y) = f(x - q, y)`` by spectral phase."""
        phase = np.exp(-1j * self.xi * q)
        phase[self.nx // 2] = np.cos(self.xi[self.nx // 2] * q)
        F = np.fft.fft(self.check(f), axis=0)
        return np.fft.ifft(F * phase[:, None], axis=0).real

    def shift_y(self, f: np.ndarray, s: float) -> np.ndarray:
        """Translation ``f(x, y - s)`` by spectral phase."""
        phase = np.exp(-1j * self.eta * s)
        phase[self.ny // 2] = np.cos(self.eta[self.ny // 2] * s)
        F = np.fft.fft(self.check(f), axis=1)
        return np.fft.ifft(F * phase[None, :], axis=1).real

    def dilate_x(self, f: np.ndarray, s: float) -> np.ndarray:
        """Resample ``f(s * x, y)`` by evaluating the x-Fourier series.

        The Nyquist mode enters as a cosine so the interpolant stays real.
        """
        if not s > 0:
            raise ValueError(f"dilation factor must be positive, got {s}")
        F = np.fft.fft(self.check(f), axis=0) / self.nx
        # evaluation points relative to the left edge, wrapped into the box
        pts = np.mod(s * self.x + self.X, 2.0 * self.X)
        E = np.exp(1j * np.outer(pts, self.xi))
        E[:, self.nx // 2] = np.cos(np.pi * self.nx / (2.0 * self.X) * pts)
        out = E @ F
        return out.real

    # -- quadrature ---------------------------------------------------------
    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """L2 inner product ``sum f g dx dy``."""
        f = self.check(f)
        g = self.check(g, "second field")
        return float(np.sum(f * g) * self.area_element)

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.inner(f, f)))

    def h1_norm(self, f: np.ndarray) -> float:
        """``(||f||^2 + ||grad f||^2)^(1/2)`` with spectral derivatives."""
        F = np.fft.fft2(self.check(f))
        k2 = self.xi[:, None] ** 2 + self.eta[None, :] ** 2
        s = np.sum((1.0 + k2) * np.abs(F) ** 2) / (self.nx * self.ny)
        return float(np.sqrt(s * self.area_element))

    def parseval_weight(self) -> float:
        """Weight ``w`` with ``inner(f, f) = w * sum |to_spectral(f)|^2``."""
        return 4.0 * np.pi * self.X * self.L

    # -- dealiasing ---------------------------------------------------------
    def dealias_mask(self) -> np.ndarray:
        m = np.fft.fftfreq(self.nx, d=1.0 / self.nx)
        n = np.fft.fftfreq(self.ny, d=1.0 / self.ny)
        return (np.abs(m)[:, None] <= self.nx / 3.0) & (np.abs(n)[None, :] <= self.ny / 3.0)

    def dealias(self, F: np.ndarray) -> np.ndarray:
        """Two-thirds rule on spectral coefficients."""
        return np.where(self.dealias_mask(), self.check(F, "coefficients"), 0.0)

    def dealias_field(self, f: np.ndarray) -> np.ndarray:
        return self.from_spectral(self.dealias(self.to_spectral(f)))

    # -- 1D operators used by the mode reduction -----------------------------
    def x_diff_matrix(self, order: int = 1) -> np.ndarray:
        """Dense Fourier differentiation matrix on the x grid."""
        sym = self._symbol("x", order)[:, 0]
        eye = np.eye(self.nx)
        return np.fft.ifft(np.fft.fft(eye, axis=0) * sym[:, None], axis=0).real

    def y_diff_matrix(self, order: int = 1) -> np.ndarray:
        sym = self._symbol("y", order)[0]
        eye = np.eye(self.ny)
        return np.fft.ifft(np.fft.fft(eye, axis=0) * sym[:, None], axis=0).real

    def mode_cos(self, n: int) -> np.ndarray:
        return np.cos(n * self.y / self.L)

    def mode_sin(self, n: int) -> np.ndarray:
        return np.sin(n * self.y / self.L)


def new_grid(nx: int, ny: int, X: float, L: float) -> CylGrid:
    """Build a :class:`CylGrid`; raises ``ValueError`` on bad dimensions."""
    return CylGrid(nx, ny, float(X), float(L))
