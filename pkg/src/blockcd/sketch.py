"""Count sketch construction and application.

The d-by-m sketching matrix is never materialized: it is fully described by
a bucket map h (one bucket per input row) and a sign per input row, so it
applies to a vector in one O(m) pass and to a sparse matrix in one pass over
the stored entries.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .matrix import DenseMatrix, Matrix, SparseMatrixCSC
from .problems import ProblemInstance

__all__ = [
    "CountSketch",
    "build_count_sketch",
    "sketch_apply_vector",
    "sketch_apply_matrix",
    "cs_prepare",
]


@dataclass(frozen=True)
class CountSketch:
    """Bucket map and sign diagonal defining the sketch.

    Buckets are 0-based: row i of the input adds signs[i] times itself to
    output row h[i].
    """

    d: int
    m: int
    h: np.ndarray
    signs: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if not 1 <= self.d <= self.m:
            raise ValueError(f"need 1 <= d <= m, got d={self.d}, m={self.m}")
        if self.h.shape != (self.m,) or self.signs.shape != (self.m,):
            raise ValueError("bucket map and signs must have one entry per input row")
        if self.h.min() < 0 or self.h.max() >= self.d:
            raise ValueError(f"bucket values must lie in [0, {self.d})")
        if not np.all(np.abs(self.signs) == 1.0):
            raise ValueError("signs must be +1 or -1")

    @classmethod
    def identity(cls, m: int) -> "CountSketch":
        """The d=m sketch with trivial buckets and +1 signs (test hook)."""
        return cls(d=m, m=m, h=np.arange(m, dtype=np.int64), signs=np.ones(m))


def build_count_sketch(d: int, m: int, seed: int) -> CountSketch:
    """Draw a sketch with buckets uniform over [0, d) and independent signs.

    Fully determined by `seed`: the bucket and sign streams are the first
    two children of ``numpy.random.SeedSequence(seed)``, in that order.
    """
    if d > m:
        raise ValueError(f"sketch would not compress: d={d} > m={m}")
    if d < 1:
        raise ValueError(f"need at least one output row, got d={d}")
    ss_h, ss_signs = np.random.SeedSequence(seed).spawn(2)
    h = np.random.default_rng(ss_h).integers(0, d, size=m, dtype=np.int64)
    signs = np.where(np.random.default_rng(ss_signs).random(m) < 0.5, -1.0, 1.0)
    return CountSketch(d=d, m=m, h=h, signs=signs, seed=seed)


def sketch_apply_vector(sketch: CountSketch, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (sketch.m,):
        raise ValueError(
            f"sketch_apply_vector: expected vector of length {sketch.m}, got shape {v.shape}"
        )
    return np.bincount(sketch.h, weights=sketch.signs * v, minlength=sketch.d)


def sketch_apply_matrix(sketch: CountSketch, A: Matrix) -> Matrix:
    """Sketch every column; sparse input stays sparse.

    Entries colliding in a bucket are summed; exact cancellations are
    dropped from sparse output during assembly.
    """
    if A.rows != sketch.m:
        raise ValueError(
            f"sketch_apply_matrix: sketch expects {sketch.m} input rows, matrix has {A.rows}"
        )
    if isinstance(A, SparseMatrixCSC):
        return SparseMatrixCSC.from_coo(
            sketch.d,
            A.cols,
            sketch.h[A.row_indices],
            A.entry_columns,
            A.values * sketch.signs[A.row_indices],
        )
    dense = A.to_dense()
    out = np.empty((sketch.d, A.cols), order="F")
    for j in range(A.cols):
        out[:, j] = np.bincount(
            sketch.h, weights=sketch.signs * dense[:, j], minlength=sketch.d
        )
    return DenseMatrix(out)


def cs_prepare(problem, d: int, seed: int):
    """Compress (A, b) to (SA, Sb), returning the new instance and prep seconds.

    The reference solution is carried over unchanged: iterates of the
    sketched run live in the original coefficient space, and for a consistent
    system the sketched system stays consistent with the same solution.
    """
    A: Matrix = problem.A
    if d >= A.rows:
        raise ValueError(f"sketch would not compress: d={d} >= m={A.rows}")
    if d < A.cols:
        raise ValueError(
            f"sketch dimension d={d} below the column count {A.cols} cannot "
            "preserve full column rank"
        )
    if not problem.consistent:
        warnings.warn(
            "count-sketch preprocessing of an inconsistent system: the sketched "
            "least-squares solution only approximates the original one",
            stacklevel=2,
        )
    t0 = time.perf_counter()
    sketch = build_count_sketch(d, A.rows, seed)
    a_sk = sketch_apply_matrix(sketch, A)
    b_sk = sketch_apply_vector(sketch, problem.b)
    prep_seconds = time.perf_counter() - t0
    provenance = dict(problem.provenance)
    provenance.update({"sketch_d": d, "sketch_seed": seed})
    sketched = ProblemInstance(
        A=a_sk,
        b=b_sk,
        x_star=problem.x_star,
        label=f"{problem.label}+cs{d}",
        provenance=provenance,
        consistent=problem.consistent,
    )
    return sketched, prep_seconds
