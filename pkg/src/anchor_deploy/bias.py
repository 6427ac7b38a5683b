"""Estimation and removal of the deployment offset of a newly placed anchor.

The robot believes the anchor is at ``a_hat``; it physically sits at
``a_hat - delta``.  From three robot positions and an averaged range at each,
``delta`` is recovered by minimising the squared-range residuals

    sum_j [ (x_j - X_hat + dx)^2 + (y_j - Y_hat + dy)^2 - rho_j^2 ]^2
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .dop import AnchorRecord, Origin
from .errors import ConvergenceError, DegenerateGeometryError
from .geometry import Point2, as_xy
from .lm import levenberg_marquardt

OBSERVATION_POSITIONS = 3
SAMPLES_PER_POSITION = 10


class Method(str, enum.Enum):
    DAMPED_GAUSS_NEWTON = "damped_gauss_newton"
    LINEARIZED_LS = "linearized_ls"


@dataclass(frozen=True)
class BiasObservation:
    positions: np.ndarray  # (k, 2) robot positions
    ranges: np.ndarray  # (k,) averaged, bias-compensated ranges to the anchor

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        rng = np.asarray(self.ranges, dtype=float).reshape(-1)
        if len(pos) != len(rng):
            raise ValueError("one averaged range per position")
        if len(pos) < 2:
            raise ValueError("at least two positions are needed for a planar offset")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "ranges", rng)

    @classmethod
    def from_samples(cls, positions, samples) -> "BiasObservation":
        """``samples`` is ``(k, m)``: ``m`` raw ranges per position, averaged here."""
        return cls(positions, np.asarray(samples, dtype=float).mean(axis=1))


@dataclass(frozen=True)
class BiasEstimate:
    delta_hat: np.ndarray
    residual_norm: float
    iterations: int
    method: Method


def _check_identifiable(obs: BiasObservation, a_hat: np.ndarray) -> None:
    d = obs.positions - a_hat
    if np.linalg.matrix_rank(d, tol=1e-9 * max(1.0, np.abs(d).max())) < 2:
        raise DegenerateGeometryError("observation positions are collinear with the anchor")


def _residual_fns(obs: BiasObservation, a_hat: np.ndarray):
    d = obs.positions - a_hat
    r2 = obs.ranges**2

    def residual(delta):
        e = d + delta
        return np.einsum("ij,ij->i", e, e) - r2

    def jac(delta):
        return 2.0 * (d + delta)

    return residual, jac


def estimate_bias_nonlinear(obs: BiasObservation, a_hat, *, xtol: float = 1e-10, max_iter: int = 100) -> BiasEstimate:
    """Levenberg-Marquardt solution started from zero offset."""
    a = as_xy(a_hat)
    _check_identifiable(obs, a)
    residual, jac = _residual_fns(obs, a)
    try:
        res = levenberg_marquardt(residual, jac, np.zeros(2), xtol=xtol, max_iter=max_iter)
    except ConvergenceError as exc:
        best = BiasEstimate(exc.best, float(np.linalg.norm(residual(exc.best))), max_iter, Method.DAMPED_GAUSS_NEWTON)
        raise ConvergenceError(str(exc), best=best) from None
    return BiasEstimate(res.x, float(np.linalg.norm(residual(res.x))), res.iterations, Method.DAMPED_GAUSS_NEWTON)


def estimate_bias_linearized(obs: BiasObservation, a_hat) -> BiasEstimate:
    """One first-order step about zero offset, solved in closed form."""
    a = as_xy(a_hat)
    residual, jac = _residual_fns(obs, a)
    J = jac(np.zeros(2))
    r0 = residual(np.zeros(2))
    JtJ = J.T @ J
    if np.linalg.cond(JtJ) > 1e12:
        raise DegenerateGeometryError("singular normal equations")
    delta = np.linalg.solve(JtJ, -J.T @ r0)
    return BiasEstimate(delta, float(np.linalg.norm(residual(delta))), 1, Method.LINEARIZED_LS)


def correct_anchor(record: AnchorRecord, estimate: BiasEstimate) -> AnchorRecord:
    """Move the stored estimate to ``a_hat - delta_hat``."""
    if record.origin is not Origin.DEPLOYED:
        raise ValueError("only deployed anchors carry a deployment offset")
    new = np.asarray(record.est_pos) - np.asarray(estimate.delta_hat)
    return replace(record, est_pos=Point2.of(new), corrected=True)
