"""Independent reference machinery for checking solver runs.

Everything here is deliberately self-contained (hand-rolled Householder QR
and cyclic Jacobi) so it forms an independent route against the iterative
solvers: the solvers are never allowed to verify themselves.

Intended for desk-scale audits (n up to a few hundred); the Gram-matrix
Jacobi route squares the condition number, which is acceptable in 64-bit
arithmetic at these sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matrix import Matrix

__all__ = [
    "RankDeficiencyError",
    "ContractionBounds",
    "SketchedContractionBounds",
    "householder_lstsq",
    "reference_lsq_solve",
    "gram_extremal_singular_values",
    "q_from_recurrence",
    "beta_feasible_max",
    "contraction_bounds",
    "sketched_contraction_bounds",
    "run_contraction_bounds",
    "contraction_audit",
]


class RankDeficiencyError(ValueError):
    """Numerical rank deficiency detected during a factorization."""

    def __init__(self, column: int, magnitude: float, message: str | None = None):
        self.column = column
        self.magnitude = magnitude
        super().__init__(
            message
            or f"numerical rank deficiency at column {column}: |R_jj|={magnitude:.3e}"
        )


def _as_dense(A) -> np.ndarray:
    if isinstance(A, Matrix):
        return A.to_dense()
    return np.asarray(A, dtype=np.float64)


def householder_lstsq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimize ||b - a x||_2 by Householder QR on a dense m>=n matrix.

    Raises RankDeficiencyError when a diagonal of R falls below
    1e-12 * ||a||_F, naming the offending column.
    """
    a = np.array(a, dtype=np.float64)  # working copy, overwritten by R
    y = np.array(b, dtype=np.float64)
    m, n = a.shape
    if m < n:
        raise ValueError(f"need m >= n for a full-column-rank solve, got {a.shape}")
    if y.shape != (m,):
        raise ValueError(f"rhs must have length {m}, got shape {y.shape}")
    frob = np.linalg.norm(a)
    tol = 1e-12 * frob
    for j in range(n):
        x = a[j:, j]
        normx = np.linalg.norm(x)
        if normx > 0.0:
            v = x.copy()
            v[0] += math.copysign(normx, x[0]) if x[0] != 0.0 else normx
            vnorm = np.linalg.norm(v)
            if vnorm > 0.0:
                v /= vnorm
                a[j:, j:] -= 2.0 * np.outer(v, v @ a[j:, j:])
                y[j:] -= 2.0 * v * (v @ y[j:])
        if abs(a[j, j]) <= tol:
            raise RankDeficiencyError(j, abs(a[j, j]))
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - a[i, i + 1 :] @ x[i + 1 :]) / a[i, i]
    return x


def reference_lsq_solve(A, b: np.ndarray) -> np.ndarray:
    """Ground-truth least-squares minimizer via dense Householder QR."""
    return householder_lstsq(_as_dense(A), b)


def _jacobi_eigenvalues(g: np.ndarray, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    g = np.array(g, dtype=np.float64)
    n = g.shape[0]
    if n == 1:
        return g.ravel().copy()
    tol = 1e-12 * np.linalg.norm(g)

    def off_norm() -> float:
        # summed entrywise: the difference-of-squares form cancels catastrophically
        off = g - np.diag(np.diag(g))
        return float(np.linalg.norm(off))

    for _ in range(max_sweeps):
        if off_norm() <= tol:
            return np.diag(g).copy()
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = g[p, q]
                # entries this small cannot lift the off-norm above tol, and
                # skipping them keeps theta far from overflow
                if abs(apq) <= tol / (2.0 * n):
                    continue
                theta = (g[q, q] - g[p, p]) / (2.0 * apq)
                # hypot keeps the tangent formula finite for huge theta
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                gp = g[:, p].copy()
                gq = g[:, q].copy()
                g[:, p] = c * gp - s * gq
                g[:, q] = s * gp + c * gq
                gp = g[p, :].copy()
                gq = g[q, :].copy()
                g[p, :] = c * gp - s * gq
                g[q, :] = s * gp + c * gq
    if off_norm() > tol:
        raise RuntimeError("Jacobi iteration did not reach the target tolerance")
    return np.diag(g).copy()


def gram_extremal_singular_values(A) -> tuple[float, float]:
    """(sigma_min, sigma_max) of A from Jacobi on the n-by-n Gram matrix."""
    a = _as_dense(A)
    g = a.T @ a
    eigs = _jacobi_eigenvalues(g)
    return math.sqrt(max(float(eigs.min()), 0.0)), math.sqrt(max(float(eigs.max()), 0.0))


def q_from_recurrence(gamma1: float, gamma2: float) -> float:
    """Decay rate q of the two-term recurrence F_{k+1} <= g1 F_k + g2 F_{k-1}.

    Requires g1, g2 >= 0 and g1 + g2 < 1.  The returned q additionally
    satisfies g1 + g2 <= q < 1, and the bound F_{k+1} <= q^k (1 + (q - g1)) F_0
    is re-verified here by iterating the worst-case recurrence 200 steps.
    """
    if gamma1 < 0.0 or gamma2 < 0.0:
        raise ValueError("recurrence coefficients must be nonnegative")
    if gamma1 + gamma2 >= 1.0:
        raise ValueError(
            f"contraction hypothesis violated: gamma1+gamma2={gamma1 + gamma2} >= 1"
        )
    if gamma2 > 0.0:
        q = (gamma1 + math.sqrt(gamma1 * gamma1 + 4.0 * gamma2)) / 2.0
    else:
        q = gamma1
    tau = q - gamma1
    # self-check: the closed form must dominate the recurrence it came from
    f_prev = f_curr = 1.0
    for k in range(1, 201):
        f_next = gamma1 * f_curr + gamma2 * f_prev
        if f_next > (q**k) * (1.0 + tau) * (1.0 + 1e-12) + 1e-300:
            raise RuntimeError(
                f"recurrence bound violated at step {k}: {f_next} > q^k(1+tau)"
            )
        f_prev, f_curr = f_curr, f_next
    return q


def beta_feasible_max(alpha: float) -> float:
    """Largest momentum weight keeping the contraction hypothesis satisfiable.

    Positive root of 4 b^2 + (4 - 3 alpha) b - alpha = 0; below it the
    two-term coefficients satisfy gamma1 + gamma2 < 1, above it they do not.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    lin = 4.0 - 3.0 * alpha
    disc = lin * lin + 16.0 * alpha
    return (-lin + math.sqrt(disc)) / 8.0


def _q_raw(gamma1: float, gamma2: float) -> float:
    if gamma2 > 0.0:
        return (gamma1 + math.sqrt(gamma1 * gamma1 + 4.0 * gamma2)) / 2.0
    return gamma1


@dataclass(frozen=True)
class ContractionBounds:
    """Per-iteration convergence-bound ingredients for a momentum run."""

    alpha: float
    gamma1: float
    gamma2: float
    q: float
    tau: float
    feasible: bool


@dataclass(frozen=True)
class SketchedContractionBounds:
    """Sketched-run analogue of ContractionBounds; collapses to it at eps=0."""

    eps: float
    delta: float | None
    gamma1: float
    gamma2: float
    q: float
    tau: float
    feasible: bool
    d_theory: int | None


def block_contraction_alpha(A, block_indices, n: int | None = None,
                            sigma_min: float | None = None) -> float:
    """alpha = |tau| sigma_min(A)^2 / (n sigma_max(A_tau)^2)."""
    idx = np.asarray(block_indices, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("block index set must be nonempty")
    a = _as_dense(A)
    if n is None:
        n = a.shape[1]
    if sigma_min is None:
        sigma_min = gram_extremal_singular_values(a)[0]
    smax_tau = gram_extremal_singular_values(a[:, idx])[1]
    return len(idx) * sigma_min**2 / (n * smax_tau**2)


def contraction_bounds(A, block_indices, beta: float, n: int | None = None,
                       *, sigma_min: float | None = None) -> ContractionBounds:
    """Convergence-bound coefficients for one momentum iteration.

    gamma1 = 1 + 3 beta + 2 beta^2 - (3 beta + 1) alpha, gamma2 = 2 beta^2 + beta.
    `sigma_min` may be passed to avoid recomputing it across a run's audits.
    """
    alpha = block_contraction_alpha(A, block_indices, n, sigma_min)
    gamma1 = 1.0 + 3.0 * beta + 2.0 * beta * beta - (3.0 * beta + 1.0) * alpha
    gamma2 = 2.0 * beta * beta + beta
    q = _q_raw(gamma1, gamma2)
    return ContractionBounds(
        alpha=alpha,
        gamma1=gamma1,
        gamma2=gamma2,
        q=q,
        tau=q - gamma1,
        feasible=gamma1 + gamma2 < 1.0,
    )


def sketched_contraction_bounds(
    A, block_indices, beta: float, n: int | None = None, eps: float = 0.0,
    *, delta: float | None = None, sigma_min: float | None = None,
) -> SketchedContractionBounds:
    """Sketched-run bound coefficients; the eps-distortion inflates gamma1/gamma2."""
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"embedding distortion eps must lie in [0, 1), got {eps}")
    alpha = block_contraction_alpha(A, block_indices, n, sigma_min)
    ratio = ((1.0 + eps) / (1.0 - eps)) ** 2
    gamma1 = (1.0 + 3.0 * beta + 2.0 * beta * beta) * ratio - (3.0 * beta + 1.0) * alpha
    gamma2 = (2.0 * beta * beta + beta) * ratio
    q = _q_raw(gamma1, gamma2)
    d_theory = None
    if delta is not None:
        if n is None:
            n = _as_dense(A).shape[1]
        d_theory = embedding_dim_theory(n, eps, delta)
    return SketchedContractionBounds(
        eps=eps,
        delta=delta,
        gamma1=gamma1,
        gamma2=gamma2,
        q=q,
        tau=q - gamma1,
        feasible=gamma1 + gamma2 < 1.0,
        d_theory=d_theory,
    )


def embedding_dim_theory(n: int, eps: float, delta: float) -> int:
    """Sketch rows guaranteeing an (eps, delta) subspace embedding: (n^2+n)/(delta eps^2).

    Far larger than the d = O(n) regime that works well in practice; exposed
    for the test suite, never used as a default.
    """
    if not 0.0 < eps < 1.0 or not 0.0 < delta < 1.0:
        raise ValueError("eps and delta must lie in (0, 1)")
    return math.ceil((n * n + n) / (delta * eps * eps))


def run_contraction_bounds(report, A, n: int | None = None) -> list[ContractionBounds]:
    """Bound coefficients for every recorded iteration of a run.

    The run must have been recorded with record_blocks=True; sigma_min(A) is
    computed once and shared across iterations.
    """
    if report.block_history is None:
        raise ValueError("bounds need a run recorded with record_blocks=True")
    a = _as_dense(A)
    if n is None:
        n = a.shape[1]
    sigma_min = gram_extremal_singular_values(a)[0]
    return [
        contraction_bounds(a, idx, report.beta, n, sigma_min=sigma_min)
        for idx in report.block_history
    ]


def contraction_audit(report, A, x_star: np.ndarray, *, slack: float = 1e-9):
    """Check the per-step energy contraction of a momentum-free run.

    Recomputes F_k = ||A (x_k - x_star)||^2 from the recorded iterates and
    asserts F_{k+1} <= (1 - alpha_k) F_k for each step, alpha_k from the
    recorded block.  Returns the list of (k, measured, bound) violations,
    expected empty.
    """
    if report.iterate_history is None or report.block_history is None:
        raise ValueError(
            "contraction audit needs a run recorded with "
            "record_iterates=True and record_blocks=True"
        )
    if report.beta != 0.0:
        raise ValueError("contraction audit applies to beta=0 runs only")
    a = _as_dense(A)
    n = a.shape[1]
    sigma_min = gram_extremal_singular_values(a)[0]
    iterates = report.iterate_history
    blocks = report.block_history
    violations = []
    for k, idx in enumerate(blocks):
        f_k = float(np.sum((a @ (iterates[k] - x_star)) ** 2))
        f_next = float(np.sum((a @ (iterates[k + 1] - x_star)) ** 2))
        alpha = block_contraction_alpha(a, idx, n, sigma_min)
        bound = (1.0 - alpha) * f_k
        if f_next > bound * (1.0 + slack) + 1e-300:
            violations.append((k, f_next, bound))
    return violations
