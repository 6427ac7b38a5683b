"""Simulated UWB ranging: distance-dependent bias, Gaussian noise, and the
linear calibration that compensates the bias."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import as_xy

# Measured characterisation of the ranging hardware:
# (true distance [m], mean bias [m], standard deviation [m]).
CHARACTERISATION_TABLE = ((1.0, 0.06, 0.029), (3.0, 0.10, 0.0231), (7.0, 0.18, 0.16))


@dataclass
class RangingNoiseModel:
    """``measured = rho + bias_intercept + bias_slope * rho + eps``, ``eps ~ N(0, sigma(rho)^2)``.

    ``sigma(rho)`` is ``sigma_rho`` unless ``sigma_table`` gives ``(rho, sigma)``
    pairs, in which case it is interpolated piecewise-linearly (flat beyond
    the ends).  The random stream is owned by the model and seeded once.
    """

    sigma_rho: float
    bias_intercept: float = 0.0
    bias_slope: float = 0.0
    seed: int = 0
    sigma_table: tuple[tuple[float, float], ...] | None = None
    rng: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.sigma_rho > 0:
            raise ValueError("sigma_rho must be positive")
        if self.sigma_table is not None:
            tab = tuple(sorted((float(r), float(s)) for r, s in self.sigma_table))
            if any(s <= 0 for _, s in tab):
                raise ValueError("tabulated sigmas must be positive")
            self.sigma_table = tab
        self.rng = np.random.default_rng(self.seed)

    @classmethod
    def from_characterisation(cls, seed: int = 0, table=CHARACTERISATION_TABLE) -> "RangingNoiseModel":
        """Bias line fitted to the tabulated means; sigma interpolated from the table."""
        c0, c1 = fit_bias_model([(r, r + b) for r, b, _ in table])
        sig = tuple((r, s) for r, _, s in table)
        return cls(sigma_rho=sig[0][1], bias_intercept=c0, bias_slope=c1, seed=seed, sigma_table=sig)

    def reseed(self, seed) -> None:
        self.rng = np.random.default_rng(seed)

    def sigma_at(self, rho):
        if self.sigma_table is None:
            return np.full_like(np.asarray(rho, dtype=float), self.sigma_rho)
        r, s = zip(*self.sigma_table)
        return np.interp(rho, r, s)

    def bias_at(self, rho):
        return self.bias_intercept + self.bias_slope * np.asarray(rho, dtype=float)

    def measure(self, rho, rng: np.random.Generator | None = None):
        """Noisy, biased measurement(s) of the true distance(s) ``rho``."""
        rho = np.asarray(rho, dtype=float)
        g = self.rng if rng is None else rng
        out = rho + self.bias_at(rho) + self.sigma_at(rho) * g.standard_normal(rho.shape)
        return float(out) if out.ndim == 0 else out

    def compensate(self, measured):
        """Invert the bias line: the robot's best guess of the true distance."""
        return (np.asarray(measured, dtype=float) - self.bias_intercept) / (1.0 + self.bias_slope)


def range_true_anchor(model: RangingNoiseModel, a_true, s, rng=None) -> float:
    rho = float(np.hypot(*(as_xy(s) - as_xy(a_true))))
    if rho == 0:
        raise ValueError("tag coincides with the anchor")
    return model.measure(rho, rng)


def range_deployed_anchor(model: RangingNoiseModel, a_hat, delta, s, rng=None) -> float:
    """Range to an anchor the robot believes is at ``a_hat`` but sits at ``a_hat - delta``."""
    return range_true_anchor(model, as_xy(a_hat) - as_xy(delta), s, rng)


def fit_bias_model(samples) -> tuple[float, float]:
    """Least-squares line ``measured - rho = c0 + c1 * rho``; returns ``(c0, c1)``."""
    arr = np.asarray(samples, dtype=float).reshape(-1, 2)
    rho, meas = arr[:, 0], arr[:, 1]
    if len(np.unique(rho)) < 2:
        raise ValueError("need at least two distinct true distances")
    X = np.column_stack([np.ones_like(rho), rho])
    (c0, c1), *_ = np.linalg.lstsq(X, meas - rho, rcond=None)
    return float(c0), float(c1)


def read_calibration_csv(path: str | Path) -> list[tuple[float, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["true_distance", "measured"]:
            raise ValueError(f"{path}: expected header 'true_distance,measured'")
        return [(float(r["true_distance"]), float(r["measured"])) for r in reader]


def propagated_sigma_eta(sigma_rho: float, F, Xi) -> float:
    """Range variance of a deployed anchor whose position error has covariance ``Xi``:
    ``sigma_rho^2 + F Xi F^T``."""
    Xi = np.asarray(Xi, dtype=float)
    if Xi.shape != (2, 2) or not np.allclose(Xi, Xi.T, atol=1e-12):
        raise ValueError("Xi must be a symmetric 2x2 matrix")
    if np.linalg.eigvalsh(Xi).min() < -1e-12 * max(1.0, np.abs(Xi).max()):
        raise ValueError("Xi is not positive semidefinite")
    F = np.asarray(F, dtype=float).reshape(2)
    return float(sigma_rho**2 + F @ Xi @ F)
