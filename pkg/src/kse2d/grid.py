"""
Periodic-torus grid and pseudo-spectral primitives.

Real fields are n x n float64 arrays indexed ``f[i1, i2]`` with
``x1 = i1 * dx`` along axis 0 and ``x2 = i2 * dx`` along axis 1.  Spectral
fields use the ``rfft2`` half layout, shape ``(n, n // 2 + 1)``, normalised
as Fourier-series coefficients::

    f(x) = sum_k  fhat_k exp(i k . x),      fhat = rfft2(f) / n**2

so a single cosine ``cos(2 pi x1 / L)`` has coefficient 1/2 at frequencies
+1 and -1 along axis 0.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft

_WORKERS = 1


def set_workers(n: int) -> None:
    """Set the FFT thread count; ``0`` means one per available CPU."""
    global _WORKERS
    _WORKERS = n if n > 0 else (os.cpu_count() or 1)


def get_workers() -> int:
    return _WORKERS


class NonFiniteFieldError(ValueError):
    """Raised when a transform receives NaN or Inf samples."""


@dataclass(frozen=True)
class Grid:
    """Uniform n x n grid on the torus [0, L)^2."""

    n: int
    L: float = 2 * np.pi

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise ValueError(f"grid size n must be a power of two >= 8, got {n!r}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"period L must be positive and finite, got {self.L!r}")

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def area(self) -> float:
        return self.L * self.L

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.n, self.n // 2 + 1)

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.x, self.x, indexing="ij"))

    # -- integer frequencies and wavenumbers ---------------------------------

    @cached_property
    def freq1(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(int)[:, None]

    @cached_property
    def freq2(self) -> np.ndarray:
        return np.arange(self.n // 2 + 1)[None, :]

    @cached_property
    def k1(self) -> np.ndarray:
        return (2 * np.pi / self.L) * self.freq1.astype(float)

    @cached_property
    def k2(self) -> np.ndarray:
        return (2 * np.pi / self.L) * self.freq2.astype(float)

    @cached_property
    def ksq(self) -> np.ndarray:
        return self.k1**2 + self.k2**2

    @cached_property
    def nyquist(self) -> np.ndarray:
        """Boolean mask of modes on the Nyquist row or column."""
        h = self.n // 2
        return (np.abs(self.freq1) == h) | (self.freq2 == h)

    @cached_property
    def ik1(self) -> np.ndarray:
        k = 1j * self.k1
        k[np.abs(self.freq1[:, 0]) == self.n // 2] = 0.0
        return k

    @cached_property
    def ik2(self) -> np.ndarray:
        k = 1j * self.k2
        k[:, self.freq2[0] == self.n // 2] = 0.0
        return k

    @cached_property
    def inv_ksq(self) -> np.ndarray:
        """1/|k|^2 with the mean and Nyquist modes set to zero."""
        with np.errstate(divide="ignore"):
            out = 1.0 / self.ksq
        out[0, 0] = 0.0
        out[self.nyquist] = 0.0
        return out

    @cached_property
    def weights(self) -> np.ndarray:
        """Multiplicity of each half-layout mode in the full spectrum."""
        w = np.full(self.spectral_shape, 2.0)
        w[:, 0] = 1.0
        if self.n % 2 == 0:
            w[:, -1] = 1.0
        return w

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cut = self.n / 3.0
        return (np.abs(self.freq1) <= cut) & (self.freq2 <= cut)

    @cached_property
    def radial_tail(self) -> np.ndarray:
        """Modes with |k| above two thirds of the Nyquist wavenumber."""
        kcut = (2.0 / 3.0) * (self.n / 2) * (2 * np.pi / self.L)
        return np.sqrt(self.ksq) > kcut

    # -- transforms ------------------------------------------------------------

    def forward(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-2:] != self.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.shape}")
        if not np.all(np.isfinite(f)):
            raise NonFiniteFieldError("forward transform received non-finite samples")
        return sfft.rfft2(f, workers=_WORKERS) / (self.n * self.n)

    def inverse(self, F: np.ndarray) -> np.ndarray:
        return sfft.irfft2(F * (self.n * self.n), s=self.shape, workers=_WORKERS)

    def _fwd(self, f: np.ndarray) -> np.ndarray:
        # unchecked variant for the hot loop
        return sfft.rfft2(f, workers=_WORKERS) * (1.0 / (self.n * self.n))

    def _inv(self, F: np.ndarray) -> np.ndarray:
        return sfft.irfft2(F * float(self.n * self.n), s=self.shape, workers=_WORKERS)

    # -- spectral operators ----------------------------------------------------

    def derivative(self, F: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
        """Multiply by (i k_axis)^order; first derivatives drop the Nyquist mode."""
        if axis not in (0, 1):
            raise ValueError("axis must be 0 or 1")
        if order == 1:
            return (self.ik1 if axis == 0 else self.ik2) * F
        if order == 2:
            return -((self.k1 if axis == 0 else self.k2) ** 2) * F
        raise ValueError("order must be 1 or 2")

    def laplacian(self, F: np.ndarray) -> np.ndarray:
        return -self.ksq * F

    def gradient(self, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.ik1 * F, self.ik2 * F

    def divergence(self, F1: np.ndarray, F2: np.ndarray) -> np.ndarray:
        return self.ik1 * F1 + self.ik2 * F2

    def biot_savart(self, omega_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Velocity u = grad^perp psi with Laplacian(psi) = omega, zero mean.

        grad^perp psi = (-d2 psi, d1 psi), so d1 u2 - d2 u1 = omega and
        div u = 0.  The mean and Nyquist modes of omega are discarded.
        """
        psi = -omega_hat * self.inv_ksq
        return -1j * self.k2 * psi, 1j * self.k1 * psi

    def dealias(self, F: np.ndarray) -> np.ndarray:
        return np.where(self.dealias_mask, F, 0.0)

    def heat_propagate(self, F: np.ndarray, nu: float, t: float) -> np.ndarray:
        if nu < 0 or t < 0:
            raise ValueError("diffusivity and duration must be non-negative")
        if nu == 0 or t == 0:
            return F.copy()
        return np.exp(-nu * t * self.ksq) * F

    # -- norms -----------------------------------------------------------------

    def spectral_l2_sq(self, F: np.ndarray) -> float:
        """Squared L2 norm from coefficients (Parseval)."""
        return self.area * float(np.sum(self.weights * np.abs(F) ** 2))

    def sobolev_norm(self, F: np.ndarray | Sequence[np.ndarray], s: float) -> float:
        """H^s norm using the multiplier (1 + |k|^2)^s on squared coefficients.

        A sequence of coefficient arrays is treated as a vector field.
        """
        comps = [F] if isinstance(F, np.ndarray) else list(F)
        mult = self.weights * (1.0 + self.ksq) ** s
        total = sum(float(np.sum(mult * np.abs(G) ** 2)) for G in comps)
        return float(np.sqrt(self.area * total))

    def lq_norm(self, f: np.ndarray | Sequence[np.ndarray], q: float) -> float:
        """Grid-quadrature L^q norm; sequences are combined pointwise in l2."""
        a = pointwise_magnitude(f)
        if np.isinf(q):
            return float(np.max(a))
        if q < 1:
            raise ValueError(f"exponent q must lie in [1, inf], got {q}")
        if q == 2:
            return float(np.sqrt(self.dx**2 * np.sum(a * a)))
        m = float(np.max(a))
        if m == 0.0:
            return 0.0
        # scale before powering to keep large q well inside float range
        return m * float((self.dx**2 * np.sum((a / m) ** q)) ** (1.0 / q))

    def mean(self, f: np.ndarray) -> float:
        return float(np.mean(f))

    def integral(self, f: np.ndarray) -> float:
        return float(np.sum(f)) * self.dx**2


def pointwise_magnitude(f: np.ndarray | Sequence[np.ndarray]) -> np.ndarray:
    if isinstance(f, np.ndarray) and f.ndim == 2:
        return np.abs(f)
    comps = list(f)
    return np.sqrt(sum(c * c for c in comps))
