"""Linear matrix structures and their constraint / recovery encodings.

A structure maps a parameter vector y to an M x N matrix Q(y) by writing
y[k] at every position in the k-th support (disjoint supports, optional
forced-zero positions).  From the supports we derive a sparse constraint
matrix B with ``B @ vec(X) == 0`` exactly on structured matrices, and a
recovery matrix C with ``C @ vec(Q(y)) == y``.  All vectorization is plain
column-major over the full matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .linalg import SparseMatrix, unvec, vec


class RecoveryMode(Enum):
    """How C reads parameters back off a structured matrix."""

    PROJECTION = "projection"  # averages every occurrence; C @ vec realizes a projection
    SPARSE = "sparse"          # picks the first occurrence only


@dataclass(frozen=True, eq=False)
class StructureSpec:
    """Supports of a linear structure on an M x N matrix.

    ``supports[k]`` lists the column-major positions carrying parameter k,
    sorted ascending.  Positions in ``zero_positions`` are forced to zero.
    Supports and zero positions must be disjoint; each support is non-empty.
    """

    rows: int
    cols: int
    supports: tuple
    zero_positions: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        object.__setattr__(
            self,
            "supports",
            tuple(np.asarray(s, dtype=np.int64) for s in self.supports),
        )
        object.__setattr__(
            self, "zero_positions", np.asarray(self.zero_positions, dtype=np.int64)
        )
        self.validate()

    def validate(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("structure needs positive dimensions")
        size = self.rows * self.cols
        for k, s in enumerate(self.supports):
            if s.size == 0:
                raise ValueError(f"support {k} is empty")
            if np.any(np.diff(s) <= 0):
                raise ValueError(f"support {k} is not sorted strictly ascending")
        chunks = list(self.supports) + [self.zero_positions]
        all_pos = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
        if all_pos.size:
            if all_pos.min() < 0 or all_pos.max() >= size:
                raise ValueError("position out of range")
            if np.unique(all_pos).size != all_pos.size:
                raise ValueError("supports / zero positions overlap")

    @property
    def n_params(self):
        return len(self.supports)

    @property
    def shape(self):
        return (self.rows, self.cols)


def _spec_from_param_grid(param_of_position, rows, cols, n_params):
    """Group the column-major positions of an M x N grid by parameter id.

    ``param_of_position`` is an M x N integer array; every value in
    ``range(n_params)`` must occur at least once.
    """
    flat = param_of_position.ravel(order="F")
    order = np.argsort(flat, kind="stable")  # stable keeps positions ascending per group
    counts = np.bincount(flat, minlength=n_params)
    if np.any(counts == 0):
        raise ValueError("every parameter must appear in the grid")
    supports = np.split(order, np.cumsum(counts)[:-1])
    return StructureSpec(rows, cols, tuple(supports))


def hankel_spec(j, k):
    """Hankel structure: Q(y) is j x k with Q[r, c] = y[r + c]."""
    if j <= 0 or k <= 0:
        raise ValueError("hankel_spec needs positive dimensions")
    r = np.arange(j)[:, None]
    c = np.arange(k)[None, :]
    return _spec_from_param_grid(r + c, j, k, j + k - 1)


def block_hankel_spec(m, n, j, k):
    """Block-Hankel structure with j x k blocks of size m x n.

    Parameters are the scalars of the j+k-1 distinct blocks, flattened
    block-wise (column-major inside each block):
    ``p = t*m*n + b*m + a`` for entry (a, b) of block t.
    """
    if min(m, n, j, k) <= 0:
        raise ValueError("block_hankel_spec needs positive dimensions")
    rows, cols = m * j, n * k
    r = np.arange(rows)[:, None]
    c = np.arange(cols)[None, :]
    t = r // m + c // n
    a = r % m
    b = c % n
    grid = t * (m * n) + b * m + a
    return _spec_from_param_grid(grid, rows, cols, m * n * (j + k - 1))


def two_fold_hankel_spec(n1, n2, k1, k2):
    """Two-fold Hankel structure of an n1 x n2 parameter grid Y.

    The structured matrix is block-Hankel in the rows of Y with k1 block
    rows, and each block is the k2 x (n2-k2+1) Hankel matrix of one row.
    Parameter (l, t) of Y sits at flat index ``t*n1 + l`` (column-major).
    """
    if min(n1, n2, k1, k2) <= 0:
        raise ValueError("two_fold_hankel_spec needs positive dimensions")
    if k1 > n1 or k2 > n2:
        raise ValueError("window exceeds grid dimensions")
    rows = k1 * k2
    cols = (n1 - k1 + 1) * (n2 - k2 + 1)
    w2 = n2 - k2 + 1
    r = np.arange(rows)[:, None]
    c = np.arange(cols)[None, :]
    l = r // k2 + c // w2
    t = r % k2 + c % w2
    grid = t * n1 + l
    return _spec_from_param_grid(grid, rows, cols, n1 * n2)


def build_B(spec: StructureSpec) -> SparseMatrix:
    """Sparse constraint matrix with kernel equal to the structured image.

    One +1/-1 row per consecutive pair within a support (rows ordered by
    parameter then pair), then one single-entry row per forced-zero
    position.
    """
    size = spec.rows * spec.cols
    heads = []
    tails = []
    for s in spec.supports:
        if s.size > 1:
            heads.append(s[:-1])
            tails.append(s[1:])
    n_pairs = sum(h.size for h in heads)
    n_rows = n_pairs + spec.zero_positions.size
    if n_rows == 0:
        return SparseMatrix(0, size, np.zeros(1, dtype=np.int64),
                            np.empty(0, dtype=np.int64), np.empty(0))
    rows_idx = []
    cols_idx = []
    vals = []
    if n_pairs:
        h = np.concatenate(heads)
        t = np.concatenate(tails)
        rr = np.arange(n_pairs, dtype=np.int64)
        rows_idx.append(np.repeat(rr, 2))
        cols_idx.append(np.stack([h, t], axis=1).ravel())
        vals.append(np.tile([1.0, -1.0], n_pairs))
    if spec.zero_positions.size:
        zr = n_pairs + np.arange(spec.zero_positions.size, dtype=np.int64)
        rows_idx.append(zr)
        cols_idx.append(spec.zero_positions)
        vals.append(np.ones(spec.zero_positions.size))
    return SparseMatrix.from_coo(
        np.concatenate(rows_idx), np.concatenate(cols_idx), np.concatenate(vals),
        (n_rows, size),
    )


def build_C(spec: StructureSpec, mode: RecoveryMode = RecoveryMode.PROJECTION) -> SparseMatrix:
    """Sparse recovery matrix with ``C @ vec(Q(y)) == y``.

    Projection mode averages all occurrences of a parameter, so applying
    Q after C orthogonally projects onto the structured image; sparse mode
    reads the first occurrence only.
    """
    size = spec.rows * spec.cols
    if mode is RecoveryMode.PROJECTION:
        cols_idx = np.concatenate(spec.supports) if spec.supports else np.empty(0, dtype=np.int64)
        counts = np.array([s.size for s in spec.supports], dtype=np.int64)
        rows_idx = np.repeat(np.arange(spec.n_params, dtype=np.int64), counts)
        vals = np.repeat(1.0 / counts, counts)
    elif mode is RecoveryMode.SPARSE:
        cols_idx = np.array([s[0] for s in spec.supports], dtype=np.int64)
        rows_idx = np.arange(spec.n_params, dtype=np.int64)
        vals = np.ones(spec.n_params)
    else:
        raise ValueError(f"unknown recovery mode: {mode!r}")
    return SparseMatrix.from_coo(rows_idx, cols_idx, vals, (spec.n_params, size))


def apply_structure(spec: StructureSpec, y) -> np.ndarray:
    """Materialize Q(y) as a dense M x N matrix."""
    y = np.asarray(y, dtype=float)
    if y.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters, got shape {y.shape}")
    flat = np.zeros(spec.rows * spec.cols)
    counts = np.array([s.size for s in spec.supports], dtype=np.int64)
    if counts.size:
        flat[np.concatenate(spec.supports)] = np.repeat(y, counts)
    return unvec(flat, spec.rows, spec.cols)


def read_parameters(spec: StructureSpec, x) -> np.ndarray:
    """Average of vec(X) over each support; equals ``C_proj @ vec(X)``."""
    xf = vec(x) if np.ndim(x) == 2 else np.asarray(x, dtype=float)
    if xf.size != spec.rows * spec.cols:
        raise ValueError("size mismatch")
    idx = np.concatenate(spec.supports)
    counts = np.array([s.size for s in spec.supports], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    sums = np.add.reduceat(xf[idx], offsets)
    return sums / counts


def project_to_image(spec: StructureSpec, x) -> np.ndarray:
    """Orthogonal projection of a dense matrix onto the structured image."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.rows, spec.cols):
        raise ValueError(f"expected shape {(spec.rows, spec.cols)}, got {x.shape}")
    return apply_structure(spec, read_parameters(spec, x))


def to_json(spec: StructureSpec) -> str:
    doc = {
        "rows": spec.rows,
        "cols": spec.cols,
        "supports": [s.tolist() for s in spec.supports],
        "zero_positions": spec.zero_positions.tolist(),
    }
    return json.dumps(doc)


def from_json(text: str) -> StructureSpec:
    doc = json.loads(text)
    try:
        return StructureSpec(
            int(doc["rows"]),
            int(doc["cols"]),
            tuple(doc["supports"]),
            np.asarray(doc.get("zero_positions", []), dtype=np.int64),
        )
    except KeyError as exc:
        raise ValueError(f"missing field in structure document: {exc}") from exc
