"""Forward-model building blocks.

Linear pieces (DFT, bandlimiting, finite differences, Haar wavelets, blur,
block averaging) and the componentwise nonlinear distortions (clipping,
arctan saturation). All functions are pure and return new arrays.

Conventions
-----------
* The DFT is unitary (``1/sqrt(N)`` per axis), so ``dft`` is an isometry
  and ``bandlimit`` is an orthogonal projection.
* Blur uses periodic boundaries so that it is self-adjoint.
* The Haar transform is orthonormal and runs to full depth.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Spectrum:
    """Complex DFT coefficients held as a pair of real arrays."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        if np.shape(self.re) != np.shape(self.im):
            raise ValueError(
                f"re/im shapes differ: {np.shape(self.re)} vs {np.shape(self.im)}"
            )

    @classmethod
    def from_complex(cls, c: np.ndarray) -> Spectrum:
        return cls(np.ascontiguousarray(c.real), np.ascontiguousarray(c.imag))

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    @property
    def shape(self):
        return np.shape(self.re)

    def is_conjugate_symmetric(self, atol: float = 1e-10) -> bool:
        c = self.to_complex()
        # index k <-> (-k) mod N along every axis
        mirrored = np.conj(np.roll(np.flip(c), 1, axis=tuple(range(c.ndim))))
        return bool(np.allclose(c, mirrored, rtol=0.0, atol=atol))


def dft(x: np.ndarray) -> Spectrum:
    """Unitary DFT of a 1D signal or 2D image."""
    x = np.asarray(x, dtype=np.float64)
    return Spectrum.from_complex(np.fft.fftn(x, norm="ortho"))


def idft(s: Spectrum) -> np.ndarray:
    """Inverse unitary DFT; the imaginary residue is discarded."""
    return np.fft.ifftn(s.to_complex(), norm="ortho").real


def _band_mask(n: int, count: int) -> np.ndarray:
    if count < 1 or count > n:
        raise ValueError(f"band count must lie in [1, {n}], got {count}")
    if count == n:
        return np.ones(n, dtype=bool)
    if count % 2 == 0:
        raise ValueError("band count must be odd (DC plus symmetric frequency pairs)")
    half = (count - 1) // 2
    mask = np.zeros(n, dtype=bool)
    mask[: half + 1] = True
    if half:
        mask[n - half:] = True
    return mask


def bandlimit(x: np.ndarray, count: int) -> np.ndarray:
    """Keep the DC bin and the ``(count - 1) / 2`` lowest frequency pairs.

    ``count == len(x)`` keeps the full band regardless of parity.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("bandlimit expects a 1D signal")
    mask = _band_mask(x.size, int(count))
    c = np.fft.fft(x, norm="ortho")
    c[~mask] = 0.0
    return np.fft.ifft(c, norm="ortho").real


def finite_diff(x: np.ndarray) -> np.ndarray:
    """``(x[i+1] - x[i])`` for ``i = 0..N-2``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("finite differences need a 1D signal of length >= 2")
    return np.diff(x)


def finite_diff_adjoint(u: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`finite_diff`; maps length N-1 back to length N."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1 or u.size < 1:
        raise ValueError("adjoint input must be a nonempty 1D array")
    out = np.zeros(u.size + 1)
    out[:-1] -= u
    out[1:] += u
    return out


def clip(x: np.ndarray, gamma: float) -> np.ndarray:
    """Componentwise projection onto ``[-gamma, gamma]``."""
    if not gamma > 0:
        raise ValueError("clip level must be positive")
    return np.clip(x, -gamma, gamma)


def arctan_distort(x: np.ndarray, gamma: float) -> np.ndarray:
    """Saturating sensor nonlinearity ``(2/pi) * arctan(gamma * x)``."""
    if not gamma > 0:
        raise ValueError("arctan gain must be positive")
    return (2.0 / np.pi) * np.arctan(gamma * np.asarray(x, dtype=np.float64))


def _check_dyadic_square(x: np.ndarray) -> int:
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"expected a square image, got shape {x.shape}")
    n = x.shape[0]
    if n < 1 or n & (n - 1):
        raise ValueError(f"image side must be a power of 2, got {n}")
    return n


def haar2d(x: np.ndarray) -> np.ndarray:
    """Orthonormal full-depth 2D Haar transform (Mallat pyramid layout).

    The coarsest scaling coefficient ends up at ``[0, 0]``; detail bands of
    level ``s`` occupy the quadrants of the leading ``2s x 2s`` block.
    """
    w = np.array(x, dtype=np.float64)
    n = _check_dyadic_square(w)
    while n > 1:
        b = w[:n, :n]
        b = np.hstack(((b[:, 0::2] + b[:, 1::2]) / _SQRT2, (b[:, 0::2] - b[:, 1::2]) / _SQRT2))
        b = np.vstack(((b[0::2] + b[1::2]) / _SQRT2, (b[0::2] - b[1::2]) / _SQRT2))
        w[:n, :n] = b
        n //= 2
    return w


def haar2d_inv(w: np.ndarray) -> np.ndarray:
    """Inverse of :func:`haar2d`."""
    x = np.array(w, dtype=np.float64)
    size = _check_dyadic_square(x)
    n = 2
    while n <= size:
        h = n // 2
        b = x[:n, :n].copy()
        a, d = b[:h], b[h:]
        rows = np.empty_like(b)
        rows[0::2] = (a + d) / _SQRT2
        rows[1::2] = (a - d) / _SQRT2
        a, d = rows[:, :h], rows[:, h:]
        b[:, 0::2] = (a + d) / _SQRT2
        b[:, 1::2] = (a - d) / _SQRT2
        x[:n, :n] = b
        n *= 2
    return x


def gaussian_kernel_1d(size: int = 5, variance: float = 1.0) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ValueError("kernel size must be a positive odd integer")
    if not variance > 0:
        raise ValueError("kernel variance must be positive")
    r = np.arange(size) - size // 2
    g = np.exp(-(r ** 2) / (2.0 * variance))
    return g / g.sum()


def gaussian_kernel(size: int = 5, variance: float = 1.0) -> np.ndarray:
    """Normalized ``size x size`` kernel ``exp(-(i^2 + j^2) / (2 variance))``."""
    g = gaussian_kernel_1d(size, variance)
    return np.outer(g, g)


def gaussian_blur(x: np.ndarray, size: int = 5, variance: float = 1.0) -> np.ndarray:
    """Circular convolution with :func:`gaussian_kernel`."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("gaussian_blur expects a 2D image")
    # the kernel is separable
    g = gaussian_kernel_1d(size, variance)
    out = ndimage.convolve1d(x, g, axis=0, mode="wrap")
    return ndimage.convolve1d(out, g, axis=1, mode="wrap")


def block_average(x: np.ndarray, b: int) -> np.ndarray:
    """Mean of each disjoint ``b x b`` block."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or b < 1 or x.shape[0] % b or x.shape[1] % b:
        raise ValueError(f"image shape {x.shape} is not divisible into {b}x{b} blocks")
    r, c = x.shape[0] // b, x.shape[1] // b
    return x.reshape(r, b, c, b).mean(axis=(1, 3))


def block_replicate(y: np.ndarray, b: int) -> np.ndarray:
    """Repeat each pixel of ``y`` over a ``b x b`` block."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or b < 1:
        raise ValueError("block_replicate expects a 2D image and a positive block size")
    return np.repeat(np.repeat(y, b, axis=0), b, axis=1)


def block_project(x: np.ndarray, b: int) -> np.ndarray:
    """Orthogonal projection onto the ``b x b`` block-constant images."""
    return block_replicate(block_average(x, b), b)
