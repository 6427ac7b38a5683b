"""Small dense Levenberg-Marquardt solver (damped Gauss-Newton with
multiplicative damping updates) for the few-parameter problems in this
package."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConvergenceError


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    iterations: int
    jac: np.ndarray


def levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0,
    *,
    lam0: float = 1e-3,
    factor: float = 10.0,
    xtol: float = 1e-10,
    gtol: float = 1e-15,
    max_iter: int = 100,
) -> LMResult:
    """Minimise ``0.5 * ||residual(x)||^2``.

    Stops when an accepted step is shorter than ``xtol * (1 + ||x||)`` or the
    gradient vanishes.  Raises :class:`ConvergenceError` (carrying the best
    iterate) after ``max_iter`` iterations.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    cost = 0.5 * float(r @ r)
    lam = lam0
    for it in range(1, max_iter + 1):
        J = jacobian(x)
        g = J.T @ r
        if np.max(np.abs(g)) <= gtol:
            return LMResult(x, cost, it - 1, J)
        A = J.T @ J
        damp = np.maximum(np.diag(A), 1e-12 * max(1.0, np.max(np.diag(A))))
        try:
            dx = np.linalg.solve(A + lam * np.diag(damp), -g)
        except np.linalg.LinAlgError:
            lam *= factor
            continue
        x_new = x + dx
        r_new = residual(x_new)
        cost_new = 0.5 * float(r_new @ r_new)
        small = np.linalg.norm(dx) <= xtol * (1.0 + np.linalg.norm(x))
        if cost_new <= cost:
            x, r, cost = x_new, r_new, cost_new
            lam = max(lam / factor, 1e-15)
            if small:
                return LMResult(x, cost, it, jacobian(x))
        else:
            if small:
                # no descent left at machine precision
                return LMResult(x, cost, it, J)
            lam *= factor
    raise ConvergenceError(f"no convergence in {max_iter} iterations", best=x)
