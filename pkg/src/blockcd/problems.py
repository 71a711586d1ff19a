"""Problem generation and on-disk exchange.

Generators cover dense Gaussian, sparse Gaussian and a synthetic
parallel-beam travel-time tomography (a deliberately simplified stand-in for
the usual tomography toolbox generators: qualitative behaviour matches,
bit-level output does not).  Real matrices are ingested from Matrix Market
coordinate files.

All generators are pure functions of their parameters and seed.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .matrix import DenseMatrix, Matrix, SparseMatrixCSC

__all__ = [
    "ProblemInstance",
    "TomoGeometry",
    "MatrixMarketError",
    "gen_gaussian_dense",
    "gen_sparse_gaussian",
    "gen_tomography",
    "default_tomo_geometry",
    "trace_ray",
    "make_consistent_problem",
    "read_matrix_market",
    "write_matrix_market",
    "read_problem_bundle",
    "write_problem_bundle",
]

CONSISTENCY_RTOL = 1e-10


@dataclass
class ProblemInstance:
    """A least-squares instance: coefficients, right-hand side, optional truth."""

    A: Matrix
    b: np.ndarray
    x_star: np.ndarray | None = None
    label: str = ""
    provenance: dict = field(default_factory=dict)
    consistent: bool = False

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.A.rows < self.A.cols:
            raise ValueError(
                f"matrix is wider than tall ({self.A.rows}x{self.A.cols}); the "
                "solvers need m >= n - transpose wide storage on ingestion"
            )
        if self.b.shape != (self.A.rows,):
            raise ValueError(
                f"right-hand side must have length {self.A.rows}, got shape {self.b.shape}"
            )
        norms = self.A.column_norms()
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ValueError(f"matrix has a zero column at index {zero[0]}")
        if self.x_star is not None:
            self.x_star = np.asarray(self.x_star, dtype=np.float64)
            if self.x_star.shape != (self.A.cols,):
                raise ValueError(
                    f"reference solution must have length {self.A.cols}, "
                    f"got shape {self.x_star.shape}"
                )
        if self.consistent:
            if self.x_star is None:
                raise ValueError("a consistent-flagged instance needs x_star")
            resid = float(np.linalg.norm(self.b - self.A.matvec(self.x_star)))
            if resid > CONSISTENCY_RTOL * max(float(np.linalg.norm(self.b)), 1e-300):
                raise ValueError(
                    f"instance flagged consistent but ||b - A x_star|| = {resid:.3e} "
                    "exceeds the tolerance"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


def gen_gaussian_dense(m: int, n: int, seed: int) -> DenseMatrix:
    """i.i.d. standard-normal dense matrix (ziggurat draws from a seeded PCG64)."""
    if m < n:
        raise ValueError(f"overdetermined contract requires m >= n, got {m} < {n}")
    if n < 1:
        raise ValueError("need at least one column")
    rng = np.random.default_rng(seed)
    return DenseMatrix(rng.standard_normal((m, n)))


def gen_sparse_gaussian(m: int, n: int, density: float, seed: int) -> SparseMatrixCSC:
    """Sparse matrix with Bernoulli(density) pattern and standard-normal values.

    A column that comes out empty is repaired with one normal entry at a
    seeded random row, so the no-zero-column invariant always holds.
    """
    if not 0.0 < density <= 1.0:
        raise ValueError(f"density must lie in (0, 1], got {density}")
    if m < n:
        raise ValueError(f"overdetermined contract requires m >= n, got {m} < {n}")
    rng = np.random.default_rng(seed)
    col_rows: list[np.ndarray] = []
    col_vals: list[np.ndarray] = []
    for _ in range(n):
        rows = np.flatnonzero(rng.random(m) < density)
        if rows.size == 0:
            rows = np.array([rng.integers(m)], dtype=np.int64)
        vals = rng.standard_normal(rows.size)
        keep = vals != 0.0  # exact-zero draws would violate CSC storage
        col_rows.append(rows[keep])
        col_vals.append(vals[keep])
    lengths = np.array([r.size for r in col_rows], dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lengths, out=indptr[1:])
    return SparseMatrixCSC(
        m, n, indptr, np.concatenate(col_rows), np.concatenate(col_vals)
    )


def make_consistent_problem(A: Matrix, seed: int, label: str = "") -> ProblemInstance:
    """Draw x_star ~ N(0, I) and set b = A x_star."""
    rng = np.random.default_rng(seed)
    x_star = rng.standard_normal(A.cols)
    return ProblemInstance(
        A=A,
        b=A.matvec(x_star),
        x_star=x_star,
        label=label,
        provenance={"rhs": "consistent", "rhs_seed": seed},
        consistent=True,
    )


# ---------------------------------------------------------------------------
# synthetic tomography
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TomoGeometry:
    """Parallel-beam scan of an N-by-N unit-pixel grid.

    For each angle, `n_detectors` parallel rays cross the grid, offset along
    the perpendicular detector axis by `detector_spacing` and centered on the
    grid center.
    """

    grid_side: int
    angles: np.ndarray
    n_detectors: int
    detector_spacing: float = 1.0

    def __post_init__(self):
        if self.grid_side < 4:
            raise ValueError(f"grid side must be >= 4, got {self.grid_side}")
        if self.n_detectors < 1 or self.detector_spacing <= 0.0:
            raise ValueError("need at least one detector with positive spacing")
        object.__setattr__(
            self, "angles", np.asarray(self.angles, dtype=np.float64).ravel()
        )
        if self.angles.size == 0:
            raise ValueError("need at least one projection angle")

    @property
    def ray_count(self) -> int:
        return len(self.angles) * self.n_detectors


def default_tomo_geometry(grid_side: int, n_angles: int | None = None,
                          n_detectors: int | None = None,
                          detector_spacing: float = 1.0) -> TomoGeometry:
    """Angles spread over [0, pi), enough detectors to span the grid diagonal."""
    if n_angles is None:
        n_angles = 2 * grid_side
    if n_detectors is None:
        n_detectors = math.ceil(1.5 * grid_side / detector_spacing)
    angles = np.arange(n_angles) * math.pi / n_angles
    return TomoGeometry(grid_side, angles, n_detectors, detector_spacing)


def trace_ray(origin, direction, grid_side: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel indices and intersection lengths of one ray through the grid.

    The grid occupies [0, grid_side]^2 with unit pixels; pixel (ix, iy) maps
    to flat index iy * grid_side + ix.  The ray is the full line through
    `origin` along `direction`.  Returns empty arrays when the line misses
    the grid.
    """
    n = grid_side
    p = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    nrm = float(np.linalg.norm(d))
    if nrm == 0.0:
        raise ValueError("ray direction must be nonzero")
    d = d / nrm

    empty = (np.empty(0, dtype=np.int64), np.empty(0))
    tmin, tmax = -math.inf, math.inf
    for axis in (0, 1):
        if abs(d[axis]) < 1e-14:
            if not 0.0 < p[axis] < n:
                return empty
        else:
            t1 = (0.0 - p[axis]) / d[axis]
            t2 = (n - p[axis]) / d[axis]
            tmin = max(tmin, min(t1, t2))
            tmax = min(tmax, max(t1, t2))
    if not tmax - tmin > 1e-12:
        return empty

    ts = [np.array([tmin, tmax])]
    for axis in (0, 1):
        if abs(d[axis]) >= 1e-14:
            lo = p[axis] + tmin * d[axis]
            hi = p[axis] + tmax * d[axis]
            lo, hi = min(lo, hi), max(lo, hi)
            planes = np.arange(math.ceil(lo), math.floor(hi) + 1, dtype=np.float64)
            ts.append((planes - p[axis]) / d[axis])
    t = np.unique(np.concatenate(ts))
    t = t[(t >= tmin - 1e-12) & (t <= tmax + 1e-12)]
    seg = np.diff(t)
    keep = seg > 1e-12
    if not np.any(keep):
        return empty
    mids = (t[:-1] + t[1:])[keep] / 2.0
    px = p[0] + mids * d[0]
    py = p[1] + mids * d[1]
    ix = np.clip(np.floor(px).astype(np.int64), 0, n - 1)
    iy = np.clip(np.floor(py).astype(np.int64), 0, n - 1)
    return iy * n + ix, seg[keep]


_SHEPP_LOGAN_ELLIPSES = [
    # (intensity, semi-axis a, semi-axis b, x0, y0, rotation degrees)
    (2.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.98, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.02, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.02, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.01, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.01, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.01, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.01, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.01, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.01, 0.0230, 0.0460, 0.06, -0.605, 0.0),
]


def _shepp_logan_phantom(n: int) -> np.ndarray:
    c = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    x, y = np.meshgrid(c, c)  # y runs over rows (iy), x over columns (ix)
    img = np.zeros((n, n))
    for val, a, b, x0, y0, deg in _SHEPP_LOGAN_ELLIPSES:
        phi = math.radians(deg)
        xr = (x - x0) * math.cos(phi) + (y - y0) * math.sin(phi)
        yr = -(x - x0) * math.sin(phi) + (y - y0) * math.cos(phi)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += val
    return img.ravel()


def _blocks_phantom(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    img = np.zeros((n, n))
    for _ in range(4):
        h = int(rng.integers(n // 4, max(n // 2, n // 4 + 1)))
        w = int(rng.integers(n // 4, max(n // 2, n // 4 + 1)))
        top = int(rng.integers(0, n - h + 1))
        left = int(rng.integers(0, n - w + 1))
        img[top : top + h, left : left + w] += float(rng.uniform(0.5, 2.0))
    return img.ravel()


def gen_tomography(geom: TomoGeometry, phantom: str = "shepp-logan-like",
                   seed: int = 0) -> ProblemInstance:
    """Assemble the ray-pixel intersection system and project the phantom.

    Rays that miss the grid are dropped (with a warning carrying the count).
    The instance is consistent by construction: b = A x_star with x_star the
    rasterized phantom.
    """
    if phantom not in ("shepp-logan-like", "blocks"):
        raise ValueError(f"unknown phantom {phantom!r}")
    n = geom.grid_side
    rows_idx: list[np.ndarray] = []
    cols_idx: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    row = 0
    dropped = 0
    offsets = (np.arange(geom.n_detectors) - (geom.n_detectors - 1) / 2.0)
    offsets = offsets * geom.detector_spacing
    center = n / 2.0
    for theta in geom.angles:
        d = np.array([math.cos(theta), math.sin(theta)])
        perp = np.array([-math.sin(theta), math.cos(theta)])
        for off in offsets:
            origin = np.array([center, center]) + off * perp
            cols, lens = trace_ray(origin, d, n)
            if cols.size == 0:
                dropped += 1
                continue
            rows_idx.append(np.full(cols.size, row, dtype=np.int64))
            cols_idx.append(cols)
            vals.append(lens)
            row += 1
    if dropped:
        warnings.warn(f"{dropped} rays missed the grid and were dropped", stacklevel=2)
    if row <= n * n:
        raise ValueError(
            f"geometry yields only {row} usable rays for {n * n} pixels; "
            "the system must be overdetermined"
        )
    A = SparseMatrixCSC.from_coo(
        row, n * n, np.concatenate(rows_idx), np.concatenate(cols_idx),
        np.concatenate(vals),
    )
    if phantom == "shepp-logan-like":
        x_star = _shepp_logan_phantom(n)
    else:
        x_star = _blocks_phantom(n, seed)
    return ProblemInstance(
        A=A,
        b=A.matvec(x_star),
        x_star=x_star,
        label=f"tomo{n}x{n}-{phantom}",
        provenance={
            "generator": "tomography",
            "grid_side": n,
            "n_angles": len(geom.angles),
            "n_detectors": geom.n_detectors,
            "detector_spacing": geom.detector_spacing,
            "phantom": phantom,
            "seed": seed,
            "dropped_rays": dropped,
        },
        consistent=True,
    )


# ---------------------------------------------------------------------------
# Matrix Market exchange
# ---------------------------------------------------------------------------


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input, with the offending line number."""

    def __init__(self, path, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


def read_matrix_market(path, transpose: bool = False) -> SparseMatrixCSC:
    """Parse a coordinate Matrix Market file into CSC storage.

    Supports real/integer/pattern fields (pattern entries become 1.0) and
    general/symmetric symmetry (symmetric storage is expanded to full).
    1-based file indices become 0-based; duplicate entries are summed.  With
    `transpose`, the transposed matrix is returned, mirroring the common
    trick of solving with A^T when the stored matrix is wide.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixMarketError(path, 1, "empty file")
    banner = lines[0].split()
    if len(banner) != 5 or banner[0].lower() != "%%matrixmarket":
        raise MatrixMarketError(path, 1, "missing %%MatrixMarket banner")
    obj, fmt, fld, sym = (w.lower() for w in banner[1:])
    if obj != "matrix":
        raise MatrixMarketError(path, 1, f"unsupported object {obj!r}")
    if fmt != "coordinate":
        raise MatrixMarketError(path, 1, f"unsupported format {fmt!r} (need coordinate)")
    if fld == "complex":
        raise MatrixMarketError(path, 1, "complex field is not supported")
    if fld not in ("real", "integer", "pattern"):
        raise MatrixMarketError(path, 1, f"unsupported field {fld!r}")
    if sym not in ("general", "symmetric"):
        raise MatrixMarketError(path, 1, f"unsupported symmetry {sym!r}")

    ln = 1
    size = None
    for ln in range(2, len(lines) + 1):
        text = lines[ln - 1].strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise MatrixMarketError(path, ln, "size line must be 'rows cols nnz'")
        try:
            size = tuple(int(p) for p in parts)
        except ValueError:
            raise MatrixMarketError(path, ln, f"bad size line {text!r}") from None
        break
    if size is None:
        raise MatrixMarketError(path, len(lines), "missing size line")
    m, n, nnz = size
    if m < 1 or n < 1 or nnz < 0:
        raise MatrixMarketError(path, ln, f"invalid dimensions {size}")

    ri = np.empty(nnz, dtype=np.int64)
    ci = np.empty(nnz, dtype=np.int64)
    vv = np.empty(nnz)
    want = 2 if fld == "pattern" else 3
    count = 0
    for ln in range(ln + 1, len(lines) + 1):
        text = lines[ln - 1].strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if len(parts) != want:
            raise MatrixMarketError(
                path, ln, f"expected {want} tokens per entry, got {len(parts)}"
            )
        if count >= nnz:
            raise MatrixMarketError(path, ln, f"more than the declared {nnz} entries")
        try:
            i = int(parts[0])
            j = int(parts[1])
            v = 1.0 if fld == "pattern" else float(parts[2])
        except ValueError:
            raise MatrixMarketError(path, ln, f"bad entry {text!r}") from None
        if not (1 <= i <= m and 1 <= j <= n):
            raise MatrixMarketError(
                path, ln, f"index ({i}, {j}) out of bounds for {m}x{n}"
            )
        ri[count] = i - 1
        ci[count] = j - 1
        vv[count] = v
        count += 1
    if count != nnz:
        raise MatrixMarketError(
            path, len(lines), f"declared {nnz} entries but found {count}"
        )

    if sym == "symmetric":
        if m != n:
            raise MatrixMarketError(path, 1, "symmetric matrices must be square")
        off = ri != ci
        ri, ci, vv = (
            np.concatenate([ri, ci[off]]),
            np.concatenate([ci, ri[off]]),
            np.concatenate([vv, vv[off]]),
        )
    if transpose:
        ri, ci = ci, ri
        m, n = n, m
    return SparseMatrixCSC.from_coo(m, n, ri, ci, vv)


def write_matrix_market(path, A: Matrix) -> None:
    """Emit coordinate real general with full-precision values."""
    if isinstance(A, DenseMatrix):
        A = SparseMatrixCSC.from_dense(A.to_dense())
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.rows} {A.cols} {A.nnz}\n")
        cols = A.entry_columns
        for p in range(A.nnz):
            # repr of a Python float is the shortest exact round-trip form
            fh.write(f"{A.row_indices[p] + 1} {cols[p] + 1} {float(A.values[p])!r}\n")


def write_problem_bundle(directory, problem: ProblemInstance) -> None:
    """Write A.mtx, b.txt (one float per line) and optionally x_star.txt."""
    os.makedirs(directory, exist_ok=True)
    write_matrix_market(os.path.join(directory, "A.mtx"), problem.A)
    with open(os.path.join(directory, "b.txt"), "w", encoding="ascii") as fh:
        fh.writelines(f"{float(v)!r}\n" for v in problem.b)
    if problem.x_star is not None:
        with open(os.path.join(directory, "x_star.txt"), "w", encoding="ascii") as fh:
            fh.writelines(f"{float(v)!r}\n" for v in problem.x_star)


def read_problem_bundle(directory) -> ProblemInstance:
    """Load a problem bundle; consistency is inferred from the residual."""
    A = read_matrix_market(os.path.join(directory, "A.mtx"))
    b = np.loadtxt(os.path.join(directory, "b.txt"), ndmin=1)
    x_path = os.path.join(directory, "x_star.txt")
    x_star = np.loadtxt(x_path, ndmin=1) if os.path.exists(x_path) else None
    consistent = False
    if x_star is not None and x_star.shape == (A.cols,) and b.shape == (A.rows,):
        resid = float(np.linalg.norm(b - A.matvec(x_star)))
        consistent = resid <= CONSISTENCY_RTOL * max(float(np.linalg.norm(b)), 1e-300)
    return ProblemInstance(
        A=A,
        b=b,
        x_star=x_star,
        label=os.path.basename(os.path.normpath(str(directory))),
        provenance={"source": str(directory)},
        consistent=consistent,
    )
