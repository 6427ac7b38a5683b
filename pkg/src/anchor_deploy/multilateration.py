"""Position from ranges: linear WLS on squared-range differences and a
nonlinear range-residual refinement.

Differences are taken against the first anchor of the problem (the
reference).  Noise-free data satisfy ``A s = h / 2`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, ConvergenceError, DegenerateGeometryError
from .geometry import Point2, as_xy
from .lm import levenberg_marquardt

RANK_TOL = 1e-9
COND_LIMIT = 1e12


@dataclass
class WlsProblem:
    anchors: np.ndarray  # (n, 2), reference first
    ranges: np.ndarray  # (n,)
    variances: np.ndarray  # (n,) range variances

    def __post_init__(self):
        self.anchors = np.asarray(self.anchors, dtype=float).reshape(-1, 2)
        self.ranges = np.asarray(self.ranges, dtype=float).reshape(-1)
        var = np.asarray(self.variances, dtype=float)
        self.variances = np.broadcast_to(var, self.ranges.shape).astype(float)
        n = len(self.anchors)
        if n < 3:
            raise ValueError("2D multilateration needs at least three anchors")
        if len(self.ranges) != n:
            raise ValueError("one range per anchor required")
        if np.any(self.variances <= 0):
            raise ValueError("range variances must be positive")

    @property
    def n(self) -> int:
        return len(self.anchors)

    def reordered(self, reference: int) -> "WlsProblem":
        order = [reference] + [k for k in range(self.n) if k != reference]
        return WlsProblem(self.anchors[order], self.ranges[order], self.variances[order])


@dataclass(frozen=True)
class PositionEstimate:
    s_hat: Point2
    cov: np.ndarray

    @property
    def xy(self) -> np.ndarray:
        return np.asarray(self.s_hat)


def build_design(problem: WlsProblem) -> tuple[np.ndarray, np.ndarray]:
    a = problem.anchors
    rho = problem.ranges
    sq = np.einsum("ij,ij->i", a, a)
    A = a[1:] - a[0]
    h = rho[0] ** 2 - rho[1:] ** 2 + sq[1:] - sq[0]
    return A, h


def build_covariance(problem: WlsProblem) -> np.ndarray:
    """Covariance of the differences, measured ranges standing in for true ones.

    Diagonal ``s_1 r_1^2 + s_j r_j^2``, off-diagonal ``s_1 r_1^2`` where
    ``s_i`` is the range variance of anchor ``i``.
    """
    w = problem.variances * problem.ranges**2
    return w[0] + np.diag(w[1:])


def _check_rank(A: np.ndarray) -> None:
    sv = np.linalg.svd(A, compute_uv=False)
    if len(sv) < 2 or sv[-1] < RANK_TOL * sv[0]:
        raise DegenerateGeometryError("anchor geometry is rank deficient")


def solve_wls(problem: WlsProblem) -> PositionEstimate:
    """``s = 1/2 (A^T N^-1 A)^-1 A^T N^-1 h`` with covariance ``(A^T N^-1 A)^-1``."""
    A, h = build_design(problem)
    _check_rank(A)
    N = build_covariance(problem)
    if np.linalg.cond(N) > COND_LIMIT:
        raise ConditioningError("measurement covariance is ill-conditioned")
    NiA = np.linalg.solve(N, A)
    M = A.T @ NiA
    Xi = np.linalg.inv(M)
    s = 0.5 * Xi @ (NiA.T @ h)
    Xi = 0.5 * (Xi + Xi.T)
    return PositionEstimate(Point2.of(s), Xi)


def solve_wls_batch(anchors, ranges, variances) -> np.ndarray:
    """Vectorised :func:`solve_wls` for one geometry and many range vectors.

    ``ranges`` is ``(T, n)``; returns ``(T, 2)`` estimates.
    """
    a = np.asarray(anchors, dtype=float).reshape(-1, 2)
    rho = np.atleast_2d(np.asarray(ranges, dtype=float))
    var = np.broadcast_to(np.asarray(variances, dtype=float), rho.shape)
    A = a[1:] - a[0]
    _check_rank(A)
    sq = np.einsum("ij,ij->i", a, a)
    h = rho[:, :1] ** 2 - rho[:, 1:] ** 2 + (sq[1:] - sq[0])
    w = var * rho**2
    N = w[:, :1, None] + np.einsum("ti,ij->tij", w[:, 1:], np.eye(len(a) - 1))
    NiA = np.linalg.solve(N, np.broadcast_to(A, (len(rho),) + A.shape))
    M = np.einsum("ki,tkj->tij", A, NiA)
    rhs = np.einsum("tki,tk->ti", NiA, h)
    return 0.5 * np.linalg.solve(M, rhs[..., None])[..., 0]


def _range_residuals(problem: WlsProblem):
    a = problem.anchors
    rho = problem.ranges
    inv_sigma = 1.0 / np.sqrt(problem.variances)

    def residual(s):
        return (np.hypot(*(s - a).T) - rho) * inv_sigma

    def jac(s):
        d = s - a
        dist = np.hypot(*d.T)
        dist = np.where(dist > 0, dist, 1e-12)
        return d / dist[:, None] * inv_sigma[:, None]

    return residual, jac


def solve_nonlinear(problem: WlsProblem, init, max_iter: int = 100) -> PositionEstimate:
    """Weighted range-residual least squares by Levenberg-Marquardt from ``init``.

    The covariance is the Gauss-Newton ``(J^T W J)^-1`` at the solution.
    """
    x0 = as_xy(init)
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial point must be finite")
    residual, jac = _range_residuals(problem)
    try:
        res = levenberg_marquardt(residual, jac, x0, max_iter=max_iter)
    except ConvergenceError as exc:
        raise ConvergenceError(str(exc), best=PositionEstimate(Point2.of(exc.best), np.full((2, 2), np.nan))) from None
    JtJ = res.jac.T @ res.jac
    if np.linalg.cond(JtJ) > COND_LIMIT:
        raise DegenerateGeometryError("range Jacobian is rank deficient at the solution")
    return PositionEstimate(Point2.of(res.x), np.linalg.inv(JtJ))
