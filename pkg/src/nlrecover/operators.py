"""Fixed point operator catalog.

Every operator the solver consumes is a :class:`FixedPointOp`: it exposes
its displacement ``x -> T x - x``. Three kinds exist:

``projector``
    ``T`` is the exact projection onto a closed convex set.
``subgradient_projector``
    ``T`` is the subgradient projection onto a sublevel set ``{f <= 0}``.
``data_op``
    ``T = p + Id - F`` with ``F`` firmly nonexpansive, so that
    ``Fix T = {x : F x = p}``.

The module also carries the numerical certification tools used by the test
suite and the ``certify`` command.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import transforms

KINDS = ("projector", "subgradient_projector", "data_op")


class InfeasibleProblemError(ValueError):
    """A convex constraint cannot be met: ``f(x) > 0`` with a zero subgradient."""


@dataclass(frozen=True)
class ConvexFunctionOracle:
    """A convex function with a deterministic subgradient selection."""

    value: Callable[[np.ndarray], float]
    subgradient: Callable[[np.ndarray], np.ndarray]
    name: str = "f"


class FixedPointOp:
    """Operator ``T`` seen through its displacement ``T x - x``.

    Parameters
    ----------
    id : hashable
        Index of the operator inside a :class:`~nlrecover.core.Problem`.
    kind : str
        One of ``projector``, ``subgradient_projector``, ``data_op``.
    displacement : callable
        ``x -> T x - x``.
    name : str, optional
        Human readable label used in reports.
    """

    def __init__(self, id, kind: str, displacement: Callable, name: str | None = None, **attrs):
        if kind not in KINDS:
            raise ValueError(f"unknown operator kind {kind!r}")
        self.id = id
        self.kind = kind
        self._displacement = displacement
        self.name = name or f"{kind}[{id}]"
        # construction details (projection map, oracle, F and p), used by
        # residual checks and the relaxed solver
        for key, val in attrs.items():
            setattr(self, key, val)

    def displacement(self, x: np.ndarray) -> np.ndarray:
        return self._displacement(x)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x + self._displacement(x)

    def residual(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self._displacement(x)))

    def with_id(self, id) -> FixedPointOp:
        extra = {k: v for k, v in vars(self).items() if k not in ("id", "kind", "_displacement", "name")}
        return FixedPointOp(id, self.kind, self._displacement, self.name, **extra)

    def __repr__(self):
        return f"FixedPointOp(id={self.id!r}, kind={self.kind!r}, name={self.name!r})"


# -- projectors --------------------------------------------------------------

def projector(proj: Callable[[np.ndarray], np.ndarray], id=0, name: str | None = None) -> FixedPointOp:
    """Wrap an exact convex projection ``proj``."""
    return FixedPointOp(id, "projector", lambda x: proj(x) - x, name, proj=proj)


def box_projector(lo: float, hi: float, id=0) -> FixedPointOp:
    """Projection onto the box ``[lo, hi]^N``."""
    if not lo < hi:
        raise ValueError(f"empty box: lo={lo} must be < hi={hi}")
    return projector(lambda x: np.clip(x, lo, hi), id, f"box[{lo:g},{hi:g}]")


def subspace_projector(basis: np.ndarray, id=0, name: str | None = None) -> FixedPointOp:
    """Projection onto the span of the orthonormal columns of ``basis``."""
    q = np.asarray(basis, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] < 1:
        raise ValueError("basis must be a 2D array with at least one column")
    if not np.allclose(q.T @ q, np.eye(q.shape[1]), atol=1e-10):
        raise ValueError("basis columns must be orthonormal")
    return projector(lambda x: q @ (q.T @ x), id, name or f"span[{q.shape[1]}]")


def hyperplane_projector(a: np.ndarray, b: float, id=0) -> FixedPointOp:
    """Projection onto ``{x : <a, x> = b}``."""
    a = np.asarray(a, dtype=np.float64)
    aa = float(np.dot(a.ravel(), a.ravel()))
    if aa == 0:
        raise ValueError("hyperplane normal must be nonzero")
    return projector(lambda x: x - ((np.vdot(a, x) - b) / aa) * a, id, "hyperplane")


def fourier_phase_projector(reference: np.ndarray, id=0, rtol: float = 1e-13) -> FixedPointOp:
    """Projection onto the images sharing the Fourier phase of ``reference``.

    In each DFT bin with unit phase vector ``p`` the coefficient ``c`` is
    replaced by ``max(Re(c * conj(p)), 0) * p``. Bins where the reference
    coefficient vanishes carry no phase and are left untouched.
    """
    ref = np.asarray(reference, dtype=np.float64)
    c_ref = np.fft.fftn(ref, norm="ortho")
    mag = np.abs(c_ref)
    free = mag <= rtol * max(mag.max(), np.finfo(float).tiny)
    phase = np.where(free, 0.0, c_ref / np.where(free, 1.0, mag))

    def proj(x):
        c = np.fft.fftn(x, norm="ortho")
        t = np.maximum((c * np.conj(phase)).real, 0.0)
        return np.fft.ifftn(np.where(free, c, t * phase), norm="ortho").real

    return projector(proj, id, "fourier-phase")


# -- subgradient projectors --------------------------------------------------

def subgradient_projection(f: ConvexFunctionOracle, x: np.ndarray) -> np.ndarray:
    """Displacement of the subgradient projector onto ``{f <= 0}`` at ``x``."""
    fx = f.value(x)
    if fx <= 0:
        return np.zeros_like(x, dtype=np.float64)
    u = f.subgradient(x)
    uu = float(np.vdot(u, u))
    if uu == 0:
        raise InfeasibleProblemError(
            f"{f.name}(x) = {fx:.3e} > 0 with zero subgradient: the constraint set is empty"
        )
    return (-fx / uu) * u


def subgradient_projector(f: ConvexFunctionOracle, id=0) -> FixedPointOp:
    """Firmly quasinonexpansive operator with fixed point set ``{f <= 0}``."""
    return FixedPointOp(
        id, "subgradient_projector", lambda x: subgradient_projection(f, x),
        f"subgrad[{f.name}]", oracle=f,
    )


def affine_oracle(a: np.ndarray, b: float) -> ConvexFunctionOracle:
    """``f(x) = <a, x> - b``; its subgradient projector is the exact projector."""
    a = np.asarray(a, dtype=np.float64)
    return ConvexFunctionOracle(lambda x: float(np.vdot(a, x)) - b, lambda x: a.copy(), "affine")


def energy_bound_oracle(gamma: float) -> ConvexFunctionOracle:
    """``f(x) = ||D x|| - gamma`` with ``D`` the forward difference."""
    if not gamma > 0:
        raise ValueError("energy bound must be positive")

    def value(x):
        return float(np.linalg.norm(transforms.finite_diff(x))) - gamma

    def subgradient(x):
        dx = transforms.finite_diff(x)
        n = np.linalg.norm(dx)
        if n == 0:
            return np.zeros_like(x, dtype=np.float64)
        return transforms.finite_diff_adjoint(dx / n)

    return ConvexFunctionOracle(value, subgradient, "diff-energy")


def image_gradient(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences with zero last column/row (Neumann boundary)."""
    gh = np.zeros_like(x, dtype=np.float64)
    gv = np.zeros_like(x, dtype=np.float64)
    gh[:, :-1] = x[:, 1:] - x[:, :-1]
    gv[:-1, :] = x[1:, :] - x[:-1, :]
    return gh, gv


def image_gradient_adjoint(gh: np.ndarray, gv: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`image_gradient` (minus the discrete divergence)."""
    out = np.zeros_like(gh)
    out[:, :-1] -= gh[:, :-1]
    out[:, 1:] += gh[:, :-1]
    out[:-1, :] -= gv[:-1, :]
    out[1:, :] += gv[:-1, :]
    return out


def total_variation(x: np.ndarray) -> float:
    """Isotropic discrete total variation."""
    gh, gv = image_gradient(np.asarray(x, dtype=np.float64))
    return float(np.sum(np.hypot(gh, gv)))


def tv_oracle(gamma: float) -> ConvexFunctionOracle:
    """``f(x) = tv(x) - gamma`` with the normalized-gradient subgradient."""
    if not gamma > 0:
        raise ValueError("total variation bound must be positive")

    def subgradient(x):
        gh, gv = image_gradient(np.asarray(x, dtype=np.float64))
        mag = np.hypot(gh, gv)
        nz = mag > 0
        scale = np.zeros_like(mag)
        scale[nz] = 1.0 / mag[nz]
        return image_gradient_adjoint(gh * scale, gv * scale)

    return ConvexFunctionOracle(lambda x: total_variation(x) - gamma, subgradient, "tv")


# -- data operators ----------------------------------------------------------

def data_operator(F: Callable[[np.ndarray], np.ndarray], p: np.ndarray, id=0,
                  name: str | None = None) -> FixedPointOp:
    """Operator ``T = p + Id - F`` whose fixed points solve ``F x = p``."""
    p = np.array(p, dtype=np.float64)
    p.flags.writeable = False

    def displacement(x):
        fx = F(x)
        if fx.shape != p.shape:
            raise ValueError(f"F maps to shape {fx.shape}, target has shape {p.shape}")
        return p - fx

    return FixedPointOp(id, "data_op", displacement, name or f"data[{id}]", F=F, p=p)


# -- certification -----------------------------------------------------------

@dataclass
class CertificationReport:
    name: str
    property: str
    trials: int
    max_violation: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.max_violation <= self.tol)

    def row(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<34s} {self.property:<22s} trials={self.trials:<5d} max_violation={self.max_violation:.3e}"


def _sample_pair(rng, shape, scale):
    x = scale * rng.standard_normal(shape)
    if rng.random() < 0.25:
        y = scale * rng.standard_normal(shape)
    else:
        # nearby pairs probe the local behaviour, spread over five decades
        y = x + scale * 10.0 ** rng.uniform(-4, 1) * rng.standard_normal(shape)
    return x, y


def fne_slack(F, x, y) -> float:
    """``||Fx - Fy||^2 + ||(x - Fx) - (y - Fy)||^2 - ||x - y||^2`` (<= 0 when FNE)."""
    fx, fy = F(x), F(y)
    d = fx - fy
    r = (x - fx) - (y - fy)
    return float(np.vdot(d, d) + np.vdot(r, r) - np.vdot(x - y, x - y))


def certify_firmly_nonexpansive(F, rng: np.random.Generator, trials: int, shape,
                                scale: float = 1.0, tol: float = 1e-9,
                                name: str = "F") -> CertificationReport:
    """Sample pairs and measure the worst firm-nonexpansiveness violation.

    The violation of a pair is its slack divided by ``max(1, ||x - y||^2)``:
    absolute for short pairs, relative for long ones where the three squared
    norms carry rounding error proportional to their size.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    worst = -np.inf
    for _ in range(trials):
        x, y = _sample_pair(rng, shape, scale)
        dd = float(np.vdot(x - y, x - y))
        worst = max(worst, fne_slack(F, x, y) / max(1.0, dd))
    return CertificationReport(name, "firmly nonexpansive", trials, max(worst, 0.0), tol)


def certify_firmly_quasinonexpansive(T, rng: np.random.Generator, trials: int, shape,
                                     feasible: Callable[[np.random.Generator], np.ndarray],
                                     scale: float = 1.0, tol: float = 1e-9,
                                     name: str = "T") -> CertificationReport:
    """Check ``<y - Tx, x - Tx> <= 0`` for sampled ``x`` and fixed points ``y``.

    ``feasible(rng)`` must return a point of ``Fix T``. Violations are
    normalized as in :func:`certify_firmly_nonexpansive`.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    worst = -np.inf
    for _ in range(trials):
        x = scale * 10.0 ** rng.uniform(-1, 1) * rng.standard_normal(shape)
        y = feasible(rng)
        tx = T(x)
        slack = float(np.vdot(y - tx, x - tx))
        worst = max(worst, slack / max(1.0, float(np.vdot(x - y, x - y))))
    return CertificationReport(name, "firmly quasinonexpansive", trials, max(worst, 0.0), tol)
