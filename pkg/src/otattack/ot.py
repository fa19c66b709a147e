"""Entropic optimal transport: cost matrices, Sinkhorn iteration, and an
exact brute-force oracle for small square problems."""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .numerics import DimensionMismatchError, as_matrix

try:  # optional speedup for long scaling runs; semantics identical
    from numba import njit as _njit
except ImportError:  # pragma: no cover
    _njit = None

# Smallest positive normal float64; kernel entries that underflow to exactly
# zero are clamped here so the multiplicative updates stay defined.
_MIN_NORMAL = np.finfo(np.float64).tiny


class SinkhornDivergenceError(FloatingPointError):
    """NaN/Inf or a zero denominator appeared in the Sinkhorn scaling loop."""


@dataclass(frozen=True)
class SinkhornConfig:
    lam: float = 0.05
    thresh: float = 1e-2
    max_iters: int = 100

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.thresh <= 0:
            raise ValueError("threshold must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class GibbsKernel:
    """Elementwise exp(-C / lambda).

    underflow_clamped marks entries that evaluated to exactly zero and were
    lifted to the smallest positive normal float. dead_axis is set when an
    entire row or column underflowed: the clamped values carry no cost
    information and Sinkhorn refuses to scale such a kernel.
    """

    k: np.ndarray
    lam: float
    underflow_clamped: bool = False
    dead_axis: bool = False


@dataclass(frozen=True)
class TransportPlan:
    t: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    marginal_error: float
    converged: bool = True
    iterations: int = 0


def cost_from_similarity(s) -> np.ndarray:
    """Turn a similarity matrix with entries in [-1, 1] into a cost matrix
    1 - S with entries in [0, 2]."""
    s = as_matrix(s)
    if np.any(np.abs(s) > 1.0 + 1e-9) or not np.all(np.isfinite(s)):
        raise ValueError("similarity entries must lie in [-1, 1]; got un-normalized features?")
    return np.clip(1.0 - s, 0.0, 2.0)


def gibbs_kernel(c, lam: float) -> GibbsKernel:
    """Exponentiated negative scaled cost matrix."""
    c = as_matrix(c)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    with np.errstate(under="ignore"):
        k = np.exp(-c / lam)
    zero = k == 0.0
    clamped = bool(zero.any())
    dead = bool(zero.all(axis=1).any() or zero.all(axis=0).any())
    if clamped:
        k = np.maximum(k, _MIN_NORMAL)
    return GibbsKernel(k=k, lam=float(lam), underflow_clamped=clamped, dead_axis=dead)


def uniform_marginals(n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    return np.full(n, 1.0 / n), np.full(m, 1.0 / m)


def _scaling_loop_py(k, u, v, thresh, max_iters):
    """Reference scaling loop; status 0 = ok, 1 = zero denominator,
    2 = non-finite scaling vector."""
    n, m = k.shape
    r = np.ones(n)
    c = np.ones(m)
    converged = False
    iterations = 0
    status = 0
    for i in range(max_iters):
        r0 = r
        kc = k @ c
        if np.any(kc == 0.0):
            return r, c, iterations, converged, 1
        r = u / kc
        ktr = k.T @ r
        if np.any(ktr == 0.0):
            return r, c, iterations, converged, 1
        c = v / ktr
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(c))):
            return r, c, iterations, converged, 2
        iterations = i + 1
        if np.mean(np.abs(r - r0)) < thresh:
            converged = True
            break
    return r, c, iterations, converged, status


if _njit is not None:
    @_njit(cache=True)
    def _scaling_loop_jit(k, u, v, thresh, max_iters):  # pragma: no cover
        n, m = k.shape
        r = np.ones(n)
        c = np.ones(m)
        r0 = np.ones(n)
        converged = False
        iterations = 0
        for it in range(max_iters):
            for i in range(n):
                r0[i] = r[i]
            for i in range(n):
                acc = 0.0
                for j in range(m):
                    acc += k[i, j] * c[j]
                if acc == 0.0:
                    return r, c, iterations, converged, 1
                r[i] = u[i] / acc
            for j in range(m):
                acc = 0.0
                for i in range(n):
                    acc += k[i, j] * r[i]
                if acc == 0.0:
                    return r, c, iterations, converged, 1
                c[j] = v[j] / acc
            for i in range(n):
                if not np.isfinite(r[i]):
                    return r, c, iterations, converged, 2
            for j in range(m):
                if not np.isfinite(c[j]):
                    return r, c, iterations, converged, 2
            iterations = it + 1
            err = 0.0
            for i in range(n):
                err += abs(r[i] - r0[i])
            if err / n < thresh:
                converged = True
                break
        return r, c, iterations, converged, 0

    _scaling_loop = _scaling_loop_jit
else:  # pragma: no cover
    _scaling_loop = _scaling_loop_py


def _round_to_marginals(t: np.ndarray, u, v) -> np.ndarray:
    """Round a nonnegative matrix onto the transport polytope U(u, v).

    Scales rows down so no row exceeds its target mass, then columns
    likewise, then spreads the leftover mass as a rank-one correction
    (Altschuler et al., 2017). The result is exactly feasible up to float
    roundoff, so its linear cost can never undercut the true optimum.
    """
    row = t.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(row > 0.0, np.minimum(1.0, u / row), 0.0)
    t = t * scale[:, None]
    col = t.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(col > 0.0, np.minimum(1.0, v / col), 0.0)
    t = t * scale[None, :]
    err_r = np.maximum(u - t.sum(axis=1), 0.0)
    err_c = np.maximum(v - t.sum(axis=0), 0.0)
    missing = float(err_r.sum())
    if missing > 0.0:
        t = t + np.outer(err_r, err_c) / missing
    return t


def sinkhorn(kernel: GibbsKernel, u, v, cfg: SinkhornConfig = SinkhornConfig()) -> TransportPlan:
    """Alternating row/column scaling of the Gibbs kernel.

    Starts from all-ones scaling vectors, updates r <- u / (K c) and
    c <- v / (K^T r), and stops once the mean absolute change of r drops
    below cfg.thresh. The assembled plan outer(r, c) * K is then rounded
    onto the transport polytope so the returned plan meets the marginals
    exactly. Raises SinkhornDivergenceError the moment a NaN, Inf, or zero
    denominator appears in r, c, or the assembled plan.
    """
    k = kernel.k
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n, m = k.shape
    if u.shape != (n,) or v.shape != (m,):
        raise DimensionMismatchError(f"marginals {u.shape}/{v.shape} do not match kernel {k.shape}")
    if np.any(u <= 0) or np.any(v <= 0):
        raise ValueError("marginals must be strictly positive")
    if kernel.dead_axis:
        raise SinkhornDivergenceError(
            "kernel row/column fully underflowed; scaling would be meaningless")

    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        r, c, iterations, converged, status = _scaling_loop(
            k, u, v, cfg.thresh, cfg.max_iters)
        if status == 1:
            raise SinkhornDivergenceError("zero denominator in scaling update")
        if status == 2:
            raise SinkhornDivergenceError("NaN/Inf in scaling vectors")
        t = np.outer(r, c) * k
    if not np.all(np.isfinite(t)):
        raise SinkhornDivergenceError("NaN/Inf in transport plan")
    t = _round_to_marginals(t, u, v)

    row_dev = float(np.mean(np.abs(t.sum(axis=1) - u)))
    col_dev = float(np.mean(np.abs(t.sum(axis=0) - v)))
    return TransportPlan(
        t=t,
        row_marginal=u,
        col_marginal=v,
        marginal_error=max(row_dev, col_dev),
        converged=converged,
        iterations=iterations,
    )


def ot_loss(plan: TransportPlan, c) -> float:
    """Transport cost sum_ij T_ij C_ij of a plan against a cost matrix."""
    c = as_matrix(c)
    if plan.t.shape != c.shape:
        raise DimensionMismatchError(f"plan {plan.t.shape} vs cost {c.shape}")
    return float(np.sum(plan.t * c))


def ot_loss_grad_wrt_similarity(plan: TransportPlan) -> np.ndarray:
    """Gradient of sum_ij T_ij (1 - S_ij) in S with the plan held constant:
    simply -T."""
    return -plan.t


def entropic_objective(plan: TransportPlan, c, lam: float) -> float:
    """Diagnostic regularized objective sum T*C + lam * sum T (log T - 1),
    with 0 log 0 = 0."""
    t = plan.t
    with np.errstate(divide="ignore", invalid="ignore"):
        tlogt = np.where(t > 0.0, t * (np.log(t) - 1.0), 0.0)
    return ot_loss(plan, c) + lam * float(np.sum(tlogt))


def exact_ot_square(c) -> tuple[TransportPlan, float]:
    """Exact OT with uniform marginals on a small square cost matrix.

    The optimum over the Birkhoff polytope sits at a permutation matrix, so
    all n! permutations are enumerated. Ties pick the lexicographically
    smallest permutation (itertools yields them in lexicographic order).
    """
    c = as_matrix(c)
    n, m = c.shape
    if n != m:
        raise DimensionMismatchError("exact oracle requires a square cost matrix")
    if n > 8:
        raise ValueError("exact oracle limited to n <= 8")
    best_cost = None
    best_perm = None
    rows = np.arange(n)
    for perm in itertools.permutations(range(n)):
        cost = float(c[rows, list(perm)].sum()) / n
        if best_cost is None or cost < best_cost:
            best_cost = cost
            best_perm = perm
    t = np.zeros((n, n))
    t[rows, list(best_perm)] = 1.0 / n
    u = np.full(n, 1.0 / n)
    plan = TransportPlan(t=t, row_marginal=u, col_marginal=u.copy(),
                         marginal_error=0.0, converged=True, iterations=0)
    return plan, best_cost
