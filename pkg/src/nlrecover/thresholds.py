"""Scalar thresholders, vectorized over numpy arrays.

All functions accept scalars or arrays and return the same kind. At the
boundary ``|x| == level`` every thresholder returns 0.
"""
from __future__ import annotations

import numpy as np


def _level(value: float, name: str) -> float:
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return float(value)


def _out(x, arr):
    return float(arr) if np.ndim(x) == 0 else arr


def q_threshold(x, gamma: float):
    """``sign(x) * sqrt(x**2 - gamma**2)`` above the threshold, 0 otherwise."""
    gamma = _level(gamma, "gamma")
    a = np.asarray(x, dtype=np.float64)
    keep = np.abs(a) > gamma
    out = np.zeros_like(a)
    ak = a[keep]
    out[keep] = np.sign(ak) * np.sqrt((ak - gamma) * (ak + gamma))
    return _out(x, out)


def soft_threshold(x, gamma: float):
    """Shrink toward zero by ``gamma``: ``sign(x) * max(|x| - gamma, 0)``."""
    gamma = _level(gamma, "gamma")
    a = np.asarray(x, dtype=np.float64)
    return _out(x, np.sign(a) * np.maximum(np.abs(a) - gamma, 0.0))


def soft_from_q(q, gamma: float):
    """Recover the soft-thresholded value from a ``q_threshold`` output.

    ``soft_threshold(x) == soft_from_q(q_threshold(x))``; this is also the
    map that turns a measured ``q`` value into the data-operator target.
    Uses ``sign(0) = 0``.
    """
    gamma = _level(gamma, "gamma")
    a = np.asarray(q, dtype=np.float64)
    # sqrt(q^2 + g^2) - g written without cancellation
    mag = a * a / (np.sqrt(a * a + gamma * gamma) + gamma)
    return _out(q, np.sign(a) * mag)


def hard_threshold(x, rho: float):
    """Keep ``x`` where ``|x| > rho``, zero elsewhere."""
    rho = _level(rho, "rho")
    a = np.asarray(x, dtype=np.float64)
    return _out(x, np.where(np.abs(a) > rho, a, 0.0))


def hard_to_soft_correction(eta, rho: float):
    """Offset turning a hard-thresholded value into the soft-thresholded one.

    Returns ``-rho`` for ``eta > rho``, ``+rho`` for ``eta < -rho`` and 0 in
    between, so that ``hard(x) + correction(hard(x)) == soft(x)``.
    """
    rho = float(rho)
    a = np.asarray(eta, dtype=np.float64)
    out = np.where(a > rho, -rho, np.where(a < -rho, rho, 0.0))
    return _out(eta, out)
