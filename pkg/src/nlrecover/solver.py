"""Extrapolated block-iterative fixed point solver and its relaxed variant.

:func:`solve` runs the extrapolated parallel scheme: at iteration ``n`` a
block ``I_n`` of operators is activated, their displacements ``y_i`` are
averaged with weights ``w_i`` into ``y``, and the iterate moves along ``y``
by ``lambda_n``, a relaxation of the extrapolation parameter

    Lambda_n = sum_i w_i ||y_i||^2 / ||y||^2  (>= 1).

:func:`solve_relaxed` finds a zero of the averaged displacement field, which
is the least-squares surrogate of the feasibility problem when the latter
has no solution.
"""
from __future__ import annotations

import csv
import io
import math
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Problem
from .operators import InfeasibleProblemError

TRACE_COLUMNS = ("n", "nu_n", "ynorm", "Lambda_n", "lambda_n", "residual", "err_ref")


# -- control -----------------------------------------------------------------

@dataclass
class ControlPolicy:
    """Which operators are active at each iteration.

    Build with :meth:`full_parallel`, :meth:`cyclic_blocks` or
    :meth:`custom`. ``M`` is the window length within which every operator
    must be activated at least once.
    """

    mode: str
    M: int = 1
    blocks: list | None = None
    schedule: Callable[[int], Sequence] | None = None
    period: int | None = None

    @classmethod
    def full_parallel(cls) -> ControlPolicy:
        return cls("full_parallel", M=1, period=1)

    @classmethod
    def cyclic_blocks(cls, blocks: Sequence[Sequence]) -> ControlPolicy:
        blocks = [list(b) for b in blocks]
        if not blocks:
            raise ValueError("cyclic control needs at least one block")
        return cls("cyclic_blocks", M=len(blocks), blocks=blocks, period=len(blocks))

    @classmethod
    def custom(cls, schedule: Callable[[int], Sequence], M: int,
               period: int | None = None) -> ControlPolicy:
        if M < 1:
            raise ValueError("M must be positive")
        return cls("custom", M=M, schedule=schedule, period=period)

    def active(self, n: int, ids: Sequence) -> list:
        if self.mode == "full_parallel":
            return list(ids)
        if self.mode == "cyclic_blocks":
            return self.blocks[n % len(self.blocks)]
        return list(self.schedule(n))

    @property
    def stop_window(self) -> int:
        """Iterations over which the stopping test takes its supremum."""
        return self.period or self.M


@dataclass
class ControlCheck:
    ok: bool
    message: str = ""
    missing_id: object = None
    window: tuple | None = None

    def __bool__(self):
        return self.ok


def validate_control(policy: ControlPolicy, ids: Sequence, horizon: int | None = None) -> ControlCheck:
    """Check that every window of ``policy.M`` iterations activates all ``ids``.

    Periodic policies are checked over one period; others over ``horizon``
    iterations (default ``10 * M``).
    """
    ids = list(ids)
    known = set(ids)
    if policy.mode == "full_parallel":
        if not ids:
            return ControlCheck(False, "no operators to activate")
        return ControlCheck(True, "full parallel control activates every operator")
    starts = policy.period if policy.period else (horizon or 10 * policy.M)
    span = starts + policy.M
    sets = []
    for n in range(span):
        act = policy.active(n, ids)
        if not act:
            return ControlCheck(False, f"empty active set at iteration {n}", window=(n, n))
        stray = [i for i in act if i not in known]
        if stray:
            return ControlCheck(False, f"unknown operator id {stray[0]!r} at iteration {n}",
                                missing_id=stray[0], window=(n, n))
        sets.append(set(act))
    for n in range(starts):
        covered = set().union(*sets[n:n + policy.M])
        missing = [i for i in ids if i not in covered]
        if missing:
            win = (n, n + policy.M - 1)
            return ControlCheck(
                False,
                f"operator {missing[0]!r} is not activated in iterations {win[0]}..{win[1]}",
                missing_id=missing[0], window=win,
            )
    return ControlCheck(True, f"every operator is activated within any {policy.M} consecutive iterations")


# -- relaxation --------------------------------------------------------------

def emopsp_lambda(n: int, Lambda: float) -> float:
    """Alternate a half step with two near-maximal extrapolated steps."""
    return Lambda / 2.0 if n % 3 == 0 else 1.99 * Lambda


@dataclass
class RelaxationPolicy:
    """Rule producing ``lambda_n`` from ``(n, Lambda_n)``."""

    mode: str = "emopsp_schedule"
    value: float = 1.0
    rule: Callable[[int, float], float] | None = None

    @classmethod
    def emopsp(cls) -> RelaxationPolicy:
        return cls("emopsp_schedule")

    @classmethod
    def constant(cls, value: float) -> RelaxationPolicy:
        return cls("constant", value=float(value))

    @classmethod
    def custom(cls, rule: Callable[[int, float], float]) -> RelaxationPolicy:
        return cls("custom", rule=rule)

    def __call__(self, n: int, Lambda: float, eps: float) -> float:
        if self.mode == "emopsp_schedule":
            lam = emopsp_lambda(n, Lambda)
        elif self.mode == "constant":
            lam = self.value
        elif self.mode == "custom":
            lam = float(self.rule(n, Lambda))
        else:
            raise ValueError(f"unknown relaxation mode {self.mode!r}")
        if not eps <= lam <= (2.0 - eps) * Lambda:
            raise ValueError(
                f"relaxation {lam:.6g} at iteration {n} outside [{eps:.3g}, {(2 - eps) * Lambda:.6g}]"
            )
        return lam


# -- configuration and trace -------------------------------------------------

def default_eps(count: int) -> float:
    return min(1e-2, 1.0 / (2.0 * count))


def uniform_weights(n: int, active: Sequence) -> np.ndarray:
    return np.full(len(active), 1.0 / len(active))


@dataclass
class SolverConfig:
    """Parameters of :func:`solve`.

    ``weights(n, active)`` returns one weight per active id (in order);
    ``eps=None`` picks ``min(1e-2, 1 / (2 card(J u K)))``; ``x0=None``
    starts from zero. ``threads`` > 1 evaluates displacements concurrently
    (the reduction order stays fixed); ``None`` reads ``RECOVER_THREADS``.
    """

    control: ControlPolicy = field(default_factory=ControlPolicy.full_parallel)
    relaxation: RelaxationPolicy = field(default_factory=RelaxationPolicy.emopsp)
    weights: Callable[[int, Sequence], Sequence[float]] = uniform_weights
    eps: float | None = None
    tol: float = 1e-8
    max_iters: int = 100_000
    x0: np.ndarray | None = None
    threads: int | None = None


@dataclass
class Trace:
    """Per-iteration diagnostics.

    ``Lambda`` and ``lam`` are NaN on iterations where every active
    displacement vanished; ``err_ref`` is NaN without a reference.
    """

    active: list = field(default_factory=list)
    nu: list = field(default_factory=list)
    ynorm: list = field(default_factory=list)
    Lambda: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    err_ref: list = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.nu)

    @property
    def iterations(self) -> int:
        return len(self.nu)

    def append(self, active, nu, ynorm, Lambda, lam, residual, err_ref):
        self.active.append(tuple(active))
        self.nu.append(nu)
        self.ynorm.append(ynorm)
        self.Lambda.append(Lambda)
        self.lam.append(lam)
        self.residual.append(residual)
        self.err_ref.append(err_ref)

    def rows(self):
        for n in range(len(self)):
            yield (n, self.nu[n], self.ynorm[n], self.Lambda[n], self.lam[n],
                   self.residual[n], self.err_ref[n])

    def to_csv(self, path=None) -> str:
        """Write ``n,nu_n,ynorm,Lambda_n,lambda_n,residual,err_ref`` rows.

        Reals use 17 significant digits; NaN entries are left empty. Returns
        the text and writes it to ``path`` when given.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in self.rows():
            w.writerow([row[0]] + ["" if math.isnan(v) else format(v, ".17g") for v in row[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def first_below(self, tol: float) -> int | None:
        """First iteration whose residual is <= ``tol``."""
        for n, r in enumerate(self.residual):
            if r <= tol:
                return n
        return None


def _thread_count(cfg_threads):
    if cfg_threads is not None:
        return int(cfg_threads)
    raw = os.environ.get("RECOVER_THREADS", "").strip()
    return int(raw) if raw else 1


def solve(problem: Problem, config: SolverConfig | None = None,
          reference: np.ndarray | None = None) -> tuple[np.ndarray, Trace]:
    """Run the extrapolated block-iterative method on ``problem``.

    Stops when, over the last full control period, every activated
    displacement had norm at most ``config.tol``, or after
    ``config.max_iters`` iterations.

    Parameters
    ----------
    problem : Problem
    config : SolverConfig, optional
    reference : ndarray, optional
        Known solution; ``||x_n - reference||`` is recorded in the trace.

    Returns
    -------
    x : ndarray
        Last iterate.
    trace : Trace
    """
    cfg = config or SolverConfig()
    ids = problem.ids
    if not ids:
        raise ValueError("problem has no operators")
    ops = {op.id: op for op in problem.ops}
    eps = default_eps(len(ids)) if cfg.eps is None else float(cfg.eps)
    if not 0 < eps < 1.0 / len(ids):
        raise ValueError(f"eps={eps} must lie in (0, 1/{len(ids)})")
    check = validate_control(cfg.control, ids)
    if not check:
        raise ValueError(f"control policy rejected: {check.message}")

    x = np.zeros(problem.shape) if cfg.x0 is None else np.array(cfg.x0, dtype=np.float64)
    if x.shape != problem.shape:
        raise ValueError(f"x0 has shape {x.shape}, problem expects {problem.shape}")
    ref = None if reference is None else np.asarray(reference, dtype=np.float64)

    threads = _thread_count(cfg.threads)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    window = deque(maxlen=cfg.control.stop_window)
    trace = Trace()
    try:
        for n in range(cfg.max_iters):
            active = cfg.control.active(n, ids)
            w = np.asarray(cfg.weights(n, active), dtype=np.float64)
            if w.shape != (len(active),):
                raise ValueError(f"iteration {n}: got {w.size} weights for {len(active)} operators")
            if np.any(w < eps) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"iteration {n}: weights must lie in [eps, 1] and sum to 1")

            if pool is None:
                ys = [ops[i].displacement(x) for i in active]
            else:
                ys = list(pool.map(lambda i: ops[i].displacement(x), active))
            sq = np.array([float(np.vdot(y, y)) for y in ys])
            nu = float(np.dot(w, sq))
            if not math.isfinite(nu):
                raise FloatingPointError(f"non-finite displacement at iteration {n}")
            residual = float(np.sqrt(sq.max()))
            err = float(np.linalg.norm(x - ref)) if ref is not None else math.nan

            window.append(residual)
            if len(window) == window.maxlen and max(window) <= cfg.tol:
                trace.append(active, nu, math.nan, math.nan, math.nan, residual, err)
                trace.converged = True
                break

            if nu == 0.0:
                trace.append(active, nu, 0.0, math.nan, math.nan, residual, err)
                continue
            y = w[0] * ys[0]
            for wi, yi in zip(w[1:], ys[1:]):
                y = y + wi * yi
            yy = float(np.vdot(y, y))
            if yy == 0.0:
                raise InfeasibleProblemError(
                    f"iteration {n}: displacements cancel while nu_n = {nu:.3e} > 0; "
                    "the operators have no common fixed point"
                )
            Lambda = nu / yy
            lam = cfg.relaxation(n, Lambda, eps)
            x = x + lam * y
            if not np.all(np.isfinite(x)):
                raise FloatingPointError(f"non-finite iterate produced at iteration {n}")
            trace.append(active, nu, math.sqrt(yy), Lambda, lam, residual, err)
    finally:
        if pool is not None:
            pool.shutdown()
    return x, trace


def solve_relaxed(problem: Problem, weights: dict | None = None, lam: float = 1.0,
                  tol: float = 1e-8, max_iters: int = 100_000, x0: np.ndarray | None = None,
                  reference: np.ndarray | None = None) -> tuple[np.ndarray, Trace]:
    """Find a zero of the weighted displacement field.

    Solves ``sum_j w_j (x - P_j x) + sum_k w_k (F_k x - p_k) = 0`` with the
    damped iteration ``x <- x - lam * Phi(x)``. The averaged operator
    ``Id - Phi`` is firmly nonexpansive, so any ``lam`` in ``(0, 2)``
    converges whenever a zero exists. Constraints must be exact projectors.

    ``weights`` maps operator ids to positive weights summing to 1; uniform
    when omitted.
    """
    ids = problem.ids
    if not ids:
        raise ValueError("problem has no operators")
    for op in problem.constraints:
        if op.kind != "projector":
            raise ValueError(f"relaxed mode needs exact projectors; operator {op.id} is a {op.kind}")
    if weights is None:
        w = np.full(len(ids), 1.0 / len(ids))
    else:
        if set(weights) != set(ids):
            raise ValueError("weights must be given for exactly the problem's operator ids")
        w = np.array([float(weights[i]) for i in ids])
    if np.any(w <= 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("relaxed weights must lie in (0, 1] and sum to 1")
    if not 0 < lam < 2:
        raise ValueError("relaxation must lie in (0, 2)")

    ops = problem.ops
    x = np.zeros(problem.shape) if x0 is None else np.array(x0, dtype=np.float64)
    ref = None if reference is None else np.asarray(reference, dtype=np.float64)
    trace = Trace()
    for n in range(max_iters):
        ys = [op.displacement(x) for op in ops]
        y = w[0] * ys[0]
        for wi, yi in zip(w[1:], ys[1:]):
            y = y + wi * yi
        nu = float(sum(wi * float(np.vdot(yi, yi)) for wi, yi in zip(w, ys)))
        phi = float(np.linalg.norm(y))
        err = float(np.linalg.norm(x - ref)) if ref is not None else math.nan
        if phi <= tol:
            trace.append(ids, nu, phi, math.nan, math.nan, phi, err)
            trace.converged = True
            break
        x = x + lam * y
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite iterate produced at iteration {n}")
        trace.append(ids, nu, phi, nu / phi ** 2, lam, phi, err)
    return x, trace
