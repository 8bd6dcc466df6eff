"""Numerical certification of the operator catalog.

Runs the firm-nonexpansiveness check on every operator the experiments
build, the firm-quasinonexpansiveness check on the subgradient projectors,
and the pointwise thresholder identities.
"""
from __future__ import annotations

import numpy as np

from . import thresholds as th
from . import transforms as tf
from .core import gaussian_unit_vector, make_rng
from .operators import (
    CertificationReport,
    box_projector,
    certify_firmly_nonexpansive,
    certify_firmly_quasinonexpansive,
    energy_bound_oracle,
    fourier_phase_projector,
    subgradient_projector,
    total_variation,
    tv_oracle,
)


def fne_catalog(rng: np.random.Generator, n: int = 128, side: int = 32):
    """``(name, F, shape, scale)`` for each firmly nonexpansive map."""
    gamma, gamma3, band, rho, block = 0.05, 10.0, 11, 1.0, 8
    e = gaussian_unit_vector(rng, n)
    phase = fourier_phase_projector(rng.standard_normal((side, side)))
    box = box_projector(0.0, 255.0)
    return [
        ("clip", lambda x: tf.clip(x, 0.1), (n,), 0.1),
        ("bandlimit", lambda x: tf.bandlimit(x, band), (n,), 1.0),
        ("box projector [0,255]", box, (side, side), 200.0),
        ("fourier-phase projector", phase, (side, side), 1.0),
        ("soft-threshold lift", lambda x: th.soft_threshold(x, gamma), (n,), 0.1),
        ("haar-inv o soft o haar", lambda x: tf.haar2d_inv(th.soft_threshold(tf.haar2d(x), rho)),
         (side, side), 1.0),
        ("blur o block-proj o blur",
         lambda x: tf.gaussian_blur(tf.block_project(tf.gaussian_blur(x), block)),
         (side, side), 1.0),
        ("lowpass o arctan o lowpass / gain",
         lambda x: tf.bandlimit(tf.arctan_distort(tf.bandlimit(x, band), gamma3), band) / gamma3,
         (n,), 1.0),
        ("soft(<x,e>) e", lambda x: th.soft_threshold(float(np.dot(x, e)), gamma) * e, (n,), 0.1),
    ]


def _energy_case(n):
    gamma1 = 1.17
    op = subgradient_projector(energy_bound_oracle(gamma1))

    def feasible(rng):
        y = rng.standard_normal(n)
        return y * (gamma1 * rng.uniform(0, 1) / np.linalg.norm(np.diff(y)))

    return "subgradient projector (diff energy)", op, (n,), feasible, 1.0


def _tv_case(side):
    bound = 50.0
    op = subgradient_projector(tv_oracle(bound))

    def feasible(rng):
        y = rng.standard_normal((side, side))
        return y * (bound * rng.uniform(0, 1) / total_variation(y))

    return "subgradient projector (tv)", op, (side, side), feasible, 1.0


def identity_reports(points: int = 10_000, gamma: float = 0.05, rho: float = 325.0):
    """Pointwise checks of the two soft-thresholder identities."""
    g = np.linspace(-3 * gamma, 3 * gamma, points)
    err_q = np.abs(th.soft_from_q(th.q_threshold(g, gamma), gamma) - th.soft_threshold(g, gamma)).max()
    r = np.linspace(-3 * rho, 3 * rho, points)
    h = th.hard_threshold(r, rho)
    err_hard = np.abs(h + th.hard_to_soft_correction(h, rho) - th.soft_threshold(r, rho)).max()
    return [
        CertificationReport("soft = S(Q(x)) identity", "pointwise identity", points, float(err_q), 1e-12),
        CertificationReport("soft = hard + correction", "pointwise identity", points, float(err_hard), 1e-12),
    ]


def run_catalog(seed: int = 0, trials: int = 1000, extra=None) -> list[CertificationReport]:
    """Certify the whole catalog; ``extra`` appends ``(name, F, shape, scale)`` cases."""
    rng = make_rng(seed)
    reports = []
    for name, F, shape, scale in fne_catalog(rng) + list(extra or []):
        reports.append(certify_firmly_nonexpansive(F, rng, trials, shape, scale=scale, name=name))
    for name, op, shape, feasible, scale in (_energy_case(128), _tv_case(16)):
        reports.append(certify_firmly_quasinonexpansive(op, rng, trials, shape, feasible,
                                                        scale=scale, name=name))
    reports.extend(identity_reports())
    return reports
