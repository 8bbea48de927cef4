"""Design-time numerics: Riccati fixed point, regularized incomplete gamma,
left inverses and kernel bases.

Everything operates on plain float64 numpy arrays. These routines run once
per detector design, never in the per-step loop, so they favor clarity and
verifiable convergence over speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainError,
    EmptyKernel,
    NonConvergence,
    RankDeficient,
    SingularInnovationCovariance,
)

# Relative singular-value cutoff for "full rank" decisions.
RANK_TOL = 1e-10


@dataclass(frozen=True)
class RiccatiSolution:
    """Fixed point of the Riccati recursion plus convergence diagnostics.

    residual_norm is the Frobenius norm of the equation residual at the
    returned P, i.e. how far P is from being an exact fixed point.
    """

    P: np.ndarray
    iterations: int
    residual_norm: float


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _riccati_map(P, A, C, Q, R):
    S = R + C @ P @ C.T
    G = C @ P @ A.T
    return _sym(A @ P @ A.T + Q - G.T @ np.linalg.solve(S, G))


def dare_solve(
    A: np.ndarray,
    C: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> RiccatiSolution:
    """Solve P = A P A' + Q - A P C' (R + C P C')^-1 C P A'.

    Fixed-point iteration of the covariance recursion starting from P = Q,
    symmetrizing every iterate. Converges whenever (A, C) is detectable,
    Q is symmetric PSD and R is symmetric PD; a non-detectable pair shows
    up as NonConvergence.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    m = C.shape[0]
    if A.shape != (n, n) or C.shape != (m, n):
        raise DimensionMismatch(f"A {A.shape} vs C {C.shape}")
    if Q.shape != (n, n) or R.shape != (m, m):
        raise DimensionMismatch(f"Q {Q.shape} vs R {R.shape}")

    P = _sym(Q)
    P_next = _riccati_map(P, A, C, Q, R)
    residual = float(np.linalg.norm(P_next - P, "fro"))
    iterations = 1
    while not residual <= tol:
        if iterations >= max_iter or not np.isfinite(residual):
            raise NonConvergence(
                f"Riccati iteration at residual {residual:.3e} after "
                f"{iterations} steps; is the pair detectable?"
            )
        P = P_next
        P_next = _riccati_map(P, A, C, Q, R)
        residual = float(np.linalg.norm(P_next - P, "fro"))
        iterations += 1
    # residual measures the equation residual at P, the returned iterate
    return RiccatiSolution(P=P, iterations=iterations, residual_norm=residual)


def kalman_gain(A: np.ndarray, C: np.ndarray, P: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Steady-state gain L = A P C' (R + C P C')^-1."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if A.shape[1] != P.shape[0] or C.shape[1] != P.shape[0] or R.shape[0] != C.shape[0]:
        raise DimensionMismatch(
            f"A {A.shape}, C {C.shape}, P {P.shape}, R {R.shape}"
        )
    S = _sym(R + C @ P @ C.T)
    if np.linalg.cond(S) > 1e14:
        raise SingularInnovationCovariance(f"cond(S) = {np.linalg.cond(S):.3e}")
    # L solves L S = A P C'
    return np.linalg.solve(S.T, (A @ P @ C.T).T).T


def _gamma_p_series(a: float, x: float) -> float:
    # lower series: P(a,x) = x^a e^-x / Gamma(a) * sum_n x^n / (a(a+1)..(a+n))
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise NonConvergence(f"gamma series stalled at a={a}, x={x}")


def _gamma_q_contfrac(a: float, x: float) -> float:
    # upper tail Q(a,x) by modified Lentz continued fraction
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0 else 1.0 / tiny
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-17:
            return h * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise NonConvergence(f"gamma continued fraction stalled at a={a}, x={x}")


def gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x), monotone in x, in [0, 1].

    Series expansion below the x = a + 1 crossover, continued fraction for
    the upper tail above it.
    """
    if a <= 0:
        raise DomainError(f"shape parameter must be positive, got {a}")
    if x < 0:
        raise DomainError(f"argument must be nonnegative, got {x}")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return min(1.0, _gamma_p_series(a, x))
    return min(1.0, max(0.0, 1.0 - _gamma_q_contfrac(a, x)))


def gamma_p_inv(a: float, p: float) -> float:
    """Inverse of gamma_p in x: smallest x with gamma_p(a, x) = p.

    Brackets the root by doubling, narrows by bisection, then polishes
    with safeguarded Newton steps using the exact density derivative.
    """
    if a <= 0:
        raise DomainError(f"shape parameter must be positive, got {a}")
    if not 0.0 <= p < 1.0:
        raise DomainError(f"probability must lie in [0, 1), got {p}")
    if p == 0.0:
        return 0.0

    lo, hi = 0.0, max(a, 1.0)
    for _ in range(2_000):
        if gamma_p(a, hi) >= p:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise NonConvergence(f"failed to bracket quantile a={a}, p={p}")

    # bisection to a loose interval, Newton from the midpoint
    for _ in range(60):
        if hi - lo <= 1e-3 * max(1.0, lo):
            break
        mid = 0.5 * (lo + hi)
        if gamma_p(a, mid) < p:
            lo = mid
        else:
            hi = mid

    x = 0.5 * (lo + hi)
    log_norm = -math.lgamma(a)
    for _ in range(100):
        f = gamma_p(a, x) - p
        if f > 0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
        # density of the gamma(a, 1) law at x
        dens = math.exp((a - 1.0) * math.log(x) - x + log_norm) if x > 0 else 0.0
        if dens > 0:
            step = f / dens
            x_new = x - step
        else:
            x_new = 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-15 * max(1.0, x):
            return x_new
        x = x_new
    return x


def left_inverse(M: np.ndarray) -> np.ndarray:
    """Left inverse of a full-column-rank matrix via SVD.

    Returns ML with ML @ M = I. Rank is decided by singular values
    relative to the largest one.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rows, cols = M.shape
    if rows < cols:
        raise RankDeficient(f"{rows}x{cols} matrix cannot have full column rank")
    u, s, vt = np.linalg.svd(M, full_matrices=False)
    if s[0] == 0.0 or s[-1] <= RANK_TOL * s[0]:
        raise RankDeficient(f"singular values span {s[-1]:.3e}..{s[0]:.3e}")
    return (vt.T / s) @ u.T


def kernel_basis(ML: np.ndarray) -> np.ndarray:
    """Orthonormal basis N of the kernel of a wide full-row-rank ML.

    For ML of shape m x n with m < n, returns N of shape n x (n - m) with
    ML @ N = 0 and N' @ N = I.
    """
    ML = np.atleast_2d(np.asarray(ML, dtype=float))
    m, n = ML.shape
    u, s, vt = np.linalg.svd(ML, full_matrices=True)
    rank = int(np.sum(s > RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    if rank < min(m, n):
        raise RankDeficient(f"rank {rank} < {min(m, n)} for shape {m}x{n}")
    if m >= n:
        raise EmptyKernel(f"{m}x{n} map has a trivial kernel")
    return vt[rank:].T
