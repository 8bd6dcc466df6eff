"""Shared containers: tensors, recovery problems and seeded randomness.

Signals are 1D ``float64`` arrays, images are square 2D ``float64`` arrays.
Everything downstream works on plain :class:`numpy.ndarray` objects; the
helpers here only enforce the construction invariants.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterator, Sequence

import numpy as np

if TYPE_CHECKING:
    from .operators import FixedPointOp


def tensor_new(shape: Sequence[int], data) -> np.ndarray:
    """Build an immutable real tensor of the given shape from flat data.

    ``data`` is read in row-major order. A 1D signal may be given either as
    ``(n,)`` or ``(n, 1)``.

    Raises
    ------
    ValueError
        If the number of entries does not match ``shape`` or an entry is
        NaN or infinite.
    """
    shape = tuple(int(s) for s in shape)
    if not 1 <= len(shape) <= 2 or any(s < 1 for s in shape):
        raise ValueError(f"unsupported tensor shape {shape}")
    flat = np.array(data, dtype=np.float64).ravel()
    if flat.size != int(np.prod(shape)):
        raise ValueError(
            f"data has {flat.size} entries, shape {shape} needs {int(np.prod(shape))}"
        )
    if not np.all(np.isfinite(flat)):
        raise ValueError("tensor entries must be finite")
    out = flat.reshape(shape)
    out.flags.writeable = False
    return out


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator (PCG64); streams are identical across platforms."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def gaussian_unit_vector(rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw i.i.d. standard normal entries and normalize to unit length."""
    if n < 1:
        raise ValueError("n must be at least 1")
    while True:
        e = rng.standard_normal(n)
        nrm = np.linalg.norm(e)
        if nrm > 0:
            return e / nrm


def inner(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.vdot(x, y))


def norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(np.ravel(x)))


@dataclass
class Problem:
    """Common fixed point problem.

    ``constraints`` holds the operators indexed by J (projectors and
    subgradient projectors), ``data`` those indexed by K (data operators).
    Every operator maps arrays of ``shape`` to arrays of ``shape``.
    """

    shape: tuple
    constraints: list = field(default_factory=list)
    data: list = field(default_factory=list)

    def __post_init__(self):
        self.shape = tuple(self.shape)
        ids = [op.id for op in self.ops]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"operator ids must be unique across J and K, repeated: {dup}")
        for op in self.constraints:
            if op.kind == "data_op":
                raise ValueError(f"operator {op.id} is a data operator listed as a constraint")
        for op in self.data:
            if op.kind != "data_op":
                raise ValueError(f"operator {op.id} of kind {op.kind} listed as a data operator")

    @property
    def ops(self) -> list[FixedPointOp]:
        return list(self.constraints) + list(self.data)

    @property
    def ids(self) -> list:
        return [op.id for op in self.ops]

    @property
    def dimension(self) -> int:
        return int(np.prod(self.shape))

    def __iter__(self) -> Iterator[FixedPointOp]:
        return iter(self.ops)

    def __len__(self) -> int:
        return len(self.constraints) + len(self.data)

    def op(self, i) -> FixedPointOp:
        for op in self.ops:
            if op.id == i:
                return op
        raise KeyError(i)

    def check_shapes(self, x: np.ndarray) -> None:
        """Evaluate every displacement at ``x`` and check it preserves shape."""
        for op in self.ops:
            y = op.displacement(x)
            if y.shape != self.shape:
                raise ValueError(f"operator {op.id} maps {self.shape} to {y.shape}")
