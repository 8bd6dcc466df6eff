"""File formats: signal/image CSV, ASCII PGM and trace CSV.

Reals are written with 17 significant digits, which round-trips IEEE
doubles exactly.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .solver import TRACE_COLUMNS


class FormatError(ValueError):
    """Malformed input file; the message carries the offending line number."""


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_signal_csv(path, x: np.ndarray) -> None:
    """One value per line, ``\\n`` terminated."""
    x = np.asarray(x, dtype=np.float64).ravel()
    with open(path, "w", newline="") as fh:
        fh.write("".join(_fmt(v) + "\n" for v in x))


def read_signal_csv(path) -> np.ndarray:
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            try:
                values.append(float(s))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: not a real number: {s!r}") from None
    return np.array(values)


def write_image_csv(path, img: np.ndarray) -> None:
    """One image row per line, comma separated."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("write_image_csv expects a 2D array")
    with open(path, "w", newline="") as fh:
        for row in img:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_image_csv(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            try:
                row = [float(t) for t in s.split(",")]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: malformed row") from None
            if rows and len(row) != len(rows[0]):
                raise FormatError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        raise FormatError(f"{path}: empty image file")
    return np.array(rows)


def pgm_bytes(img: np.ndarray, rescale: bool = False) -> bytes:
    """ASCII (P2) PGM encoding of ``img``.

    By default values are clipped to [0, 255] and rounded; with ``rescale``
    the range [min, max] is mapped linearly onto [0, 255]. The header comment
    records which mapping was applied.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM needs a 2D image")
    if rescale:
        lo, hi = float(img.min()), float(img.max())
        scaled = (img - lo) * (255.0 / (hi - lo)) if hi > lo else np.zeros_like(img)
        note = f"# rescaled linearly from [{_fmt(lo)}, {_fmt(hi)}] to [0, 255]"
    else:
        scaled = img
        note = "# values clipped to [0, 255] and rounded"
    q = np.rint(np.clip(scaled, 0, 255)).astype(int)
    h, w = q.shape
    lines = ["P2", note, f"{w} {h}", "255"]
    lines += [" ".join(str(v) for v in row) for row in q]
    return ("\n".join(lines) + "\n").encode("ascii")


def write_pgm(path, img: np.ndarray, rescale: bool = False) -> None:
    Path(path).write_bytes(pgm_bytes(img, rescale))


def read_pgm(path) -> np.ndarray:
    """Read an ASCII (P2) PGM into an integer array."""
    tokens = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.split("#", 1)[0]
            tokens.extend((t, lineno) for t in s.split())
    if not tokens or tokens[0][0] != "P2":
        raise FormatError(f"{path}:1: not an ASCII PGM (missing P2 magic)")
    try:
        w, h, maxval = (int(t) for t, _ in tokens[1:4])
    except ValueError:
        raise FormatError(f"{path}:{tokens[min(3, len(tokens) - 1)][1]}: malformed header") from None
    body = tokens[4:]
    if len(body) != w * h:
        last = body[-1][1] if body else tokens[-1][1]
        raise FormatError(f"{path}:{last}: expected {w * h} pixels, found {len(body)}")
    vals = []
    for t, lineno in body:
        try:
            v = int(t)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad pixel value {t!r}") from None
        if not 0 <= v <= maxval:
            raise FormatError(f"{path}:{lineno}: pixel {v} outside [0, {maxval}]")
        vals.append(v)
    return np.array(vals, dtype=int).reshape(h, w)


def write_tensor(path_stem, x: np.ndarray) -> list[Path]:
    """Dump a signal as ``.csv``, an image as ``.csv`` plus ``.pgm``."""
    stem = Path(path_stem)
    x = np.asarray(x)
    if x.ndim == 1:
        p = stem.with_suffix(".csv")
        write_signal_csv(p, x)
        return [p]
    p_csv, p_pgm = stem.with_suffix(".csv"), stem.with_suffix(".pgm")
    write_image_csv(p_csv, x)
    write_pgm(p_pgm, x)
    return [p_csv, p_pgm]


def read_trace_csv(path) -> dict[str, np.ndarray]:
    """Columns of a trace CSV as float arrays (empty cells become NaN)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_COLUMNS:
            raise FormatError(f"{path}:1: trace header must be {','.join(TRACE_COLUMNS)}")
        cols = {c: [] for c in TRACE_COLUMNS}
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(TRACE_COLUMNS):
                raise FormatError(f"{path}:{lineno}: expected {len(TRACE_COLUMNS)} fields")
            try:
                for c, v in zip(TRACE_COLUMNS, row):
                    cols[c].append(float(v) if v else float("nan"))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric field") from None
    return {c: np.array(v) for c, v in cols.items()}
