"""Plain-text formats for matrices, vectors, instance bundles and sparse diagonals.

Matrix:  first line ``n d``, then ``n`` lines of ``d`` whitespace-separated decimals.
Vector:  first line ``n``, then ``n`` lines.
Bundle:  directory with ``A.mat``, ``b.vec``, ``w.vec``, ``meta`` (key=value) and
         optionally ``xstar.vec``.
Sparse diagonal: first line ``n nnz``, then ``nnz`` lines ``index weight``.

Floats are written with 17 significant digits so files round-trip exactly.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .problem import ProblemInstance
from .sketch import SparseDiagonal


class FormatError(ValueError):
    def __init__(self, path, msg: str):
        self.path = str(path)
        super().__init__(f"{path}: {msg}")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _read_lines(path) -> list[str]:
    with open(path) as fh:
        return [ln for ln in (s.strip() for s in fh) if ln]


def write_matrix(path, A: np.ndarray) -> None:
    A = np.asarray(A, dtype=float)
    n, d = A.shape
    with open(path, "w") as fh:
        fh.write(f"{n} {d}\n")
        for row in A:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def read_matrix(path) -> np.ndarray:
    lines = _read_lines(path)
    if not lines:
        raise FormatError(path, "empty matrix file")
    try:
        n, d = (int(t) for t in lines[0].split())
        rows = [[float(t) for t in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise FormatError(path, f"malformed matrix file ({exc})") from None
    if len(rows) != n or any(len(r) != d for r in rows):
        raise FormatError(path, f"expected {n} rows of {d} values")
    return np.array(rows, dtype=float).reshape(n, d)


def write_vector(path, v: np.ndarray) -> None:
    v = np.asarray(v, dtype=float).ravel()
    with open(path, "w") as fh:
        fh.write(f"{v.size}\n")
        for x in v:
            fh.write(_fmt(x) + "\n")


def read_vector(path) -> np.ndarray:
    lines = _read_lines(path)
    if not lines:
        raise FormatError(path, "empty vector file")
    try:
        n = int(lines[0])
        vals = [float(t) for t in lines[1:]]
    except ValueError as exc:
        raise FormatError(path, f"malformed vector file ({exc})") from None
    if len(vals) != n:
        raise FormatError(path, f"expected {n} values, found {len(vals)}")
    return np.array(vals, dtype=float)


def read_keyvalue(path) -> dict[str, str]:
    out = {}
    for ln in _read_lines(path):
        if ln.startswith("#"):
            continue
        if "=" not in ln:
            raise FormatError(path, f"expected key=value, got {ln!r}")
        k, v = ln.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def write_keyvalue(path, data: dict) -> None:
    with open(path, "w") as fh:
        for k, v in data.items():
            fh.write(f"{k}={_fmt(v) if isinstance(v, float) else v}\n")


_META_FLOATS = {"l", "R", "target_radius", "oracle_grad_norm"}
_META_INTS = {"seed", "oracle_iters"}


def write_bundle(directory, inst: ProblemInstance, x_star: np.ndarray | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "A.mat", inst.A)
    write_vector(d / "b.vec", inst.b)
    write_vector(d / "w.vec", inst.w)
    write_keyvalue(d / "meta", inst.meta)
    if x_star is not None:
        write_vector(d / "xstar.vec", x_star)
    return d


def read_bundle(directory) -> tuple[ProblemInstance, np.ndarray | None]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"bundle directory not found: {d}")
    for name in ("A.mat", "b.vec", "w.vec"):
        if not (d / name).is_file():
            raise FileNotFoundError(f"missing bundle file: {d / name}")
    meta: dict = {}
    if (d / "meta").is_file():
        for k, v in read_keyvalue(d / "meta").items():
            if k in _META_FLOATS:
                meta[k] = float(v)
            elif k in _META_INTS:
                meta[k] = int(v)
            else:
                meta[k] = v
    inst = ProblemInstance(read_matrix(d / "A.mat"), read_vector(d / "b.vec"),
                           read_vector(d / "w.vec"), meta)
    xs = read_vector(d / "xstar.vec") if (d / "xstar.vec").is_file() else None
    return inst, xs


def write_sparse_diagonal(path, Dt: SparseDiagonal) -> None:
    with open(path, "w") as fh:
        fh.write(f"{Dt.n} {Dt.nnz}\n")
        for i, v in zip(Dt.indices, Dt.weights):
            fh.write(f"{int(i)} {_fmt(v)}\n")


def read_sparse_diagonal(path) -> SparseDiagonal:
    lines = _read_lines(path)
    if not lines:
        raise FormatError(path, "empty sparse diagonal file")
    try:
        n, nnz = (int(t) for t in lines[0].split())
        pairs = [ln.split() for ln in lines[1:]]
        idx = [int(p[0]) for p in pairs]
        wts = [float(p[1]) for p in pairs]
    except (ValueError, IndexError) as exc:
        raise FormatError(path, f"malformed sparse diagonal ({exc})") from None
    if len(idx) != nnz:
        raise FormatError(path, f"expected {nnz} entries, found {len(idx)}")
    return SparseDiagonal(np.array(idx, dtype=np.int64), np.array(wts), n)
