"""End-to-end recovery experiments.

Each builder synthesizes a ground truth from a seed, simulates the
nonlinear observations, and packages the matching fixed point problem:

``distortion``
    1D signal seen through clipping and through an arctan-saturated
    low-pass version, under a bound on the energy of its differences.
``thresholded_products``
    1D signal seen through thresholded scalar products with random unit
    vectors, processed in cyclic blocks.
``image``
    Image with known Fourier phase, pixel range and total variation bound,
    seen through hard-thresholded Haar coefficients and a blurred,
    block-averaged thumbnail.
``youla``
    Vector in a subspace known through its projection onto another
    subspace (all linear).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import thresholds as th
from . import transforms as tf
from .core import Problem, gaussian_unit_vector, make_rng
from .operators import (
    FixedPointOp,
    box_projector,
    data_operator,
    energy_bound_oracle,
    fourier_phase_projector,
    projector,
    subgradient_projector,
    subspace_projector,
    total_variation,
    tv_oracle,
)
from .solver import ControlPolicy, RelaxationPolicy, SolverConfig


@dataclass
class Scenario:
    """A built experiment: truth, observations, problem and solver settings.

    ``metrics`` maps names to residual functions of a candidate solution;
    those prefixed ``orig_`` evaluate the original nonlinear measurement
    equations rather than the fixed point reformulation.
    """

    name: str
    ground_truth: np.ndarray
    observations: dict
    problem: Problem
    config: SolverConfig
    params: dict
    metrics: dict = field(default_factory=dict)

    def displacement_norms(self, x: np.ndarray) -> dict:
        return {op.id: op.residual(x) for op in self.problem.ops}

    def evaluate(self, x: np.ndarray) -> dict:
        return {name: float(fn(x)) for name, fn in self.metrics.items()}


def relative_error(x: np.ndarray, ref: np.ndarray) -> float:
    """``||x - ref|| / ||ref||``."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    nref = np.linalg.norm(ref)
    if nref == 0:
        raise ValueError("reference is zero")
    return float(np.linalg.norm(x - ref) / nref)


def _full_config(tol, max_iters) -> SolverConfig:
    return SolverConfig(ControlPolicy.full_parallel(), RelaxationPolicy.emopsp(),
                        tol=tol, max_iters=max_iters)


# -- ground truth synthesizers ----------------------------------------------

def synthetic_signal(rng: np.random.Generator, n: int) -> np.ndarray:
    """Piecewise-smooth signal: Gaussian bumps, a ramp and a step, in [-1, 1]."""
    t = np.arange(n) / n
    x = np.zeros(n)
    for _ in range(4):
        c, w, a = rng.uniform(0.1, 0.9), rng.uniform(0.02, 0.08), rng.uniform(-1, 1)
        x += a * np.exp(-0.5 * ((t - c) / w) ** 2)
    a, b = np.sort(rng.uniform(0.05, 0.95, 2))
    ramp = np.clip((t - a) / max(b - a, 1e-3), 0, 1)
    x += rng.uniform(-0.5, 0.5) * ramp
    s = rng.uniform(0.2, 0.8)
    x += rng.uniform(-0.4, 0.4) * (t >= s)
    x -= x.mean()
    return x / np.abs(x).max()


def synthetic_image(rng: np.random.Generator, n: int) -> np.ndarray:
    """Smooth blobs plus rectangles, rounded to integers in [0, 255]."""
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    img = np.full((n, n), 0.25)
    for _ in range(5):
        ci, cj = rng.uniform(0, n, 2)
        s = rng.uniform(0.05, 0.2) * n
        img += rng.uniform(-0.4, 0.6) * np.exp(-((i - ci) ** 2 + (j - cj) ** 2) / (2 * s * s))
    for _ in range(4):
        r0, c0 = rng.integers(0, n - n // 8, 2)
        h, w = rng.integers(n // 8, n // 2, 2)
        img[r0:r0 + h, c0:c0 + w] += rng.uniform(-0.3, 0.4)
    img -= img.min()
    img /= img.max()
    return np.round(255.0 * img)


# -- distortion (1D) -----------------------------------------------------------

def build_distortion_scenario(N: int = 2048, gamma1: float = 1.17, gamma2: float = 0.1,
                              band_count: int = 83, gamma3: float = 10.0, seed: int = 0,
                              energy_margin: float = 1.17, tol: float = 1e-9,
                              max_iters: int = 50_000) -> Scenario:
    """Clipped signal plus arctan-distorted low-pass signal, energy bound.

    The synthetic truth is rescaled so that ``gamma1 = energy_margin *
    ||D x_true||``; the bound itself keeps the value it is given.
    """
    if band_count % 2 == 0 and band_count != N:
        raise ValueError("band_count must be odd")
    if band_count > N or band_count < 1:
        raise ValueError(f"band_count must lie in [1, N={N}]")
    if energy_margin < 1:
        raise ValueError("energy_margin below 1 makes the truth violate the bound")
    rng = make_rng(seed)
    x = synthetic_signal(rng, N)
    x *= (gamma1 / energy_margin) / np.linalg.norm(tf.finite_diff(x))

    r2 = tf.clip(x, gamma2)
    r3 = tf.arctan_distort(tf.bandlimit(x, band_count), gamma3)

    def lowpass(v):
        return tf.bandlimit(v, band_count)

    def F3(v):
        return lowpass(tf.arctan_distort(lowpass(v), gamma3)) / gamma3

    p3 = lowpass(r3) / gamma3
    f1 = energy_bound_oracle(gamma1)
    problem = Problem(
        (N,),
        constraints=[subgradient_projector(f1, id=1)],
        data=[
            data_operator(lambda v: tf.clip(v, gamma2), r2, id=2, name="clip"),
            data_operator(F3, p3, id=3, name="lowpass-arctan"),
        ],
    )
    metrics = {
        "f1": f1.value,
        "clip_residual_inf": lambda v: np.abs(tf.clip(v, gamma2) - r2).max(),
        "S3R3_residual": lambda v: np.linalg.norm(F3(v) - p3),
        "orig_R3_residual_inf": lambda v: np.abs(tf.arctan_distort(lowpass(v), gamma3) - r3).max(),
    }
    params = dict(N=N, gamma1=gamma1, gamma2=gamma2, band_count=band_count, gamma3=gamma3,
                  seed=seed, energy_margin=energy_margin)
    return Scenario("distortion", x, {2: r2, 3: r3}, problem, _full_config(tol, max_iters),
                    params, metrics)


# -- thresholded scalar products (1D) -----------------------------------------

def _products_op(k: int, e: np.ndarray, target: float, gamma: float) -> FixedPointOp:
    p = target * e

    def F(v):
        return th.soft_threshold(float(np.dot(v, e)), gamma) * e

    return data_operator(F, p, id=k, name=f"product[{k}]")


def build_thresholded_products_scenario(N: int = 1024, m: int = 1200, gamma: float = 0.05,
                                        block: int = 100, M: int | None = None, seed: int = 0,
                                        tol: float = 1e-9, max_iters: int = 100_000) -> Scenario:
    """Signal measured through ``q_threshold(<x, e_k>)`` for ``k = 1..m``.

    Operators are swept cyclically in ``m / block`` blocks of consecutive
    indices with uniform weights ``1 / block``.
    """
    if block < 1 or m % block:
        raise ValueError(f"block={block} does not divide m={m}")
    if M is not None and M != m // block:
        raise ValueError(f"M={M} is inconsistent with m/block={m // block}")
    rng = make_rng(seed)
    x = synthetic_signal(rng, N)
    E = np.stack([gaussian_unit_vector(rng, N) for _ in range(m)])
    r = th.q_threshold(E @ x, gamma)
    targets = th.soft_from_q(r, gamma)

    ops = [_products_op(k + 1, E[k], float(targets[k]), gamma) for k in range(m)]
    blocks = [list(range(b * block + 1, (b + 1) * block + 1)) for b in range(m // block)]
    config = SolverConfig(ControlPolicy.cyclic_blocks(blocks), RelaxationPolicy.emopsp(),
                          tol=tol, max_iters=max_iters)
    metrics = {
        "orig_R_residual_inf": lambda v: np.abs(th.q_threshold(E @ v, gamma) - r).max(),
        "S_residual_inf": lambda v: np.abs(th.soft_threshold(E @ v, gamma) - targets).max(),
    }
    params = dict(N=N, m=m, gamma=gamma, block=block, M=m // block, seed=seed)
    obs = {"r": r, "vectors": E}
    return Scenario("thresholded_products", x, obs, Problem((N,), data=ops), config,
                    params, metrics)


# -- image ---------------------------------------------------------------------

def gap_threshold(magnitudes: np.ndarray, keep_fraction: float) -> float:
    """Threshold keeping about ``keep_fraction`` of ``magnitudes``.

    The value is the midpoint of the gap between two consecutive distinct
    magnitudes nearest the requested rank, so no coefficient sits on it.
    """
    if not 0 < keep_fraction < 1:
        raise ValueError("keep_fraction must lie in (0, 1)")
    a = np.unique(np.asarray(magnitudes, dtype=np.float64).ravel())[::-1]
    if a.size < 2:
        raise ValueError("need at least two distinct magnitudes")
    full = np.sort(np.asarray(magnitudes).ravel())[::-1]
    target = full[min(max(int(round(keep_fraction * full.size)), 1), full.size - 1)]
    k = int(np.searchsorted(-a, -target))
    k = min(max(k, 1), a.size - 1)
    return float(0.5 * (a[k - 1] + a[k]))


def build_image_scenario(N: int = 256, tv_factor: float = 1.2, rho: float | None = 325.0,
                         blur_size: int = 5, block: int = 32, seed: int = 0,
                         keep_fraction: float = 0.1, tol: float = 1e-7,
                         max_iters: int = 50_000) -> Scenario:
    """Image from Fourier phase, range, TV bound, Haar and thumbnail data.

    ``rho=None`` sets the hard threshold so that about ``keep_fraction`` of
    the Haar coefficients of the truth survive.
    """
    if N < 2 or N & (N - 1):
        raise ValueError(f"N={N} must be a power of 2")
    if block < 1 or N % block:
        raise ValueError(f"block={block} does not divide N={N}")
    if not tv_factor >= 1:
        raise ValueError("tv_factor below 1 makes the truth violate the TV bound")
    rng = make_rng(seed)
    x = synthetic_image(rng, N)
    wx = tf.haar2d(x)
    if rho is None:
        rho = gap_threshold(np.abs(wx), keep_fraction)
    if not rho > 0:
        raise ValueError("rho must be positive")

    def blur(v):
        return tf.gaussian_blur(v, blur_size, 1.0)

    r4 = th.hard_threshold(wx, rho)
    r5 = tf.block_average(blur(x), block)
    tv_bound = tv_factor * total_variation(x)

    def F4(v):
        return tf.haar2d_inv(th.soft_threshold(tf.haar2d(v), rho))

    def F5(v):
        return blur(tf.block_project(blur(v), block))

    p4 = tf.haar2d_inv(r4 + th.hard_to_soft_correction(r4, rho))
    p5 = blur(tf.block_replicate(r5, block))
    problem = Problem(
        (N, N),
        constraints=[
            fourier_phase_projector(x, id=1),
            box_projector(0.0, 255.0, id=2),
            subgradient_projector(tv_oracle(tv_bound), id=3),
        ],
        data=[
            data_operator(F4, p4, id=4, name="haar-soft"),
            data_operator(F5, p5, id=5, name="blur-block"),
        ],
    )
    metrics = {
        "tv_excess": lambda v: total_variation(v) - tv_bound,
        "orig_R4_residual_inf": lambda v: np.abs(th.hard_threshold(tf.haar2d(v), rho) - r4).max(),
        "orig_R5_residual_inf": lambda v: np.abs(tf.block_average(blur(v), block) - r5).max(),
    }
    params = dict(N=N, tv_factor=tv_factor, rho=rho, blur_size=blur_size, block=block,
                  seed=seed, keep_fraction=float(np.mean(np.abs(wx) > rho)))
    return Scenario("image", x, {4: r4, 5: r5}, problem, _full_config(tol, max_iters),
                    params, metrics)


# -- Youla ---------------------------------------------------------------------

def random_subspace(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Orthonormal basis (columns) of a random ``dim``-dimensional subspace."""
    q, _ = np.linalg.qr(rng.standard_normal((n, dim)))
    return q


def build_youla_scenario(n: int = 32, dim_v1: int = 8, dim_v2: int = 16, seed: int = 0,
                         tol: float = 1e-12, max_iters: int = 100_000) -> Scenario:
    """Find ``x`` in ``V1`` with ``proj_V2 x = r``; ``dim_v1 = n`` means ``V1 = R^n``."""
    if not (1 <= dim_v1 <= n and 1 <= dim_v2 <= n):
        raise ValueError(f"subspace dimensions must lie in [1, {n}]")
    if dim_v2 == n:
        raise ValueError("V2 = R^n makes the data determine x completely")
    rng = make_rng(seed)
    q1 = random_subspace(rng, n, dim_v1)
    q2 = random_subspace(rng, n, dim_v2)
    x = q1 @ rng.standard_normal(dim_v1)

    def p2(v):
        return q2 @ (q2.T @ v)

    r2 = p2(x)
    if dim_v1 == n:
        c1 = projector(lambda v: np.array(v, dtype=np.float64), id=1, name="whole-space")
    else:
        c1 = subspace_projector(q1, id=1, name="V1")
    problem = Problem((n,), constraints=[c1], data=[data_operator(p2, r2, id=2, name="proj-V2")])
    metrics = {
        "V1_residual": lambda v: np.linalg.norm(c1.displacement(v)),
        "orig_R2_residual": lambda v: np.linalg.norm(p2(v) - r2),
    }
    params = dict(n=n, dim_v1=dim_v1, dim_v2=dim_v2, seed=seed)
    sc = Scenario("youla", x, {2: r2}, problem, _full_config(tol, max_iters), params, metrics)
    sc.bases = (q1, q2)
    return sc


def alternating_projections(q1: np.ndarray, q2: np.ndarray, r2: np.ndarray,
                            x0: np.ndarray | None = None, max_iters: int = 100_000,
                            tol: float = 1e-15) -> np.ndarray:
    """Alternate between ``V1`` and the affine set ``{x : proj_V2 x = r2}``."""
    x = np.zeros(q1.shape[0]) if x0 is None else np.array(x0, dtype=np.float64)
    for _ in range(max_iters):
        v = q1 @ (q1.T @ x)
        x_new = v - q2 @ (q2.T @ v) + r2
        if np.linalg.norm(x_new - x) <= tol * max(1.0, np.linalg.norm(x)):
            return x_new
        x = x_new
    return x


# -- registry ------------------------------------------------------------------

BUILDERS: dict[str, Callable[..., Scenario]] = {
    "distortion": build_distortion_scenario,
    "thresholded_products": build_thresholded_products_scenario,
    "image": build_image_scenario,
    "youla": build_youla_scenario,
}

PRESETS: dict[str, dict[str, dict]] = {
    "distortion": {
        "full": dict(N=2048, gamma1=1.17, gamma2=0.1, band_count=83, gamma3=10.0),
        "desk": dict(N=256, gamma1=1.17, gamma2=0.1, band_count=11, gamma3=10.0),
    },
    "thresholded_products": {
        "full": dict(N=1024, m=1200, gamma=0.05, block=100),
        "desk": dict(N=128, m=300, gamma=0.05, block=25),
    },
    "image": {
        "full": dict(N=256, tv_factor=1.2, rho=325.0, block=32),
        "desk": dict(N=64, tv_factor=1.2, rho=None, block=8, keep_fraction=0.1, seed=1, tol=1e-5),
    },
    "youla": {
        "full": dict(n=32, dim_v1=8, dim_v2=16),
        "desk": dict(n=32, dim_v1=8, dim_v2=16),
    },
}


def desk_band_count(N: int, full_N: int = 2048, full_count: int = 83) -> int:
    """Scale the full-size band count to length ``N`` and round up to odd."""
    c = math.ceil(full_count * N / full_N)
    return c if c % 2 else c + 1


def build(name: str, preset: str = "desk", **overrides) -> Scenario:
    """Build scenario ``name`` from a preset with keyword overrides."""
    if name not in BUILDERS:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(BUILDERS)}")
    if preset not in PRESETS[name]:
        raise KeyError(f"unknown preset {preset!r} for {name}")
    kwargs = dict(PRESETS[name][preset])
    kwargs.update(overrides)
    return BUILDERS[name](**kwargs)
