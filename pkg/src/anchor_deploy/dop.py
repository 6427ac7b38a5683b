"""Dilution of precision for planar range-based positioning.

``pdop`` follows the ranging Jacobian definition directly and is the
reference path; :func:`best_pdop_many` is the batched search used inside
the optimizer and the simulator.
"""

from __future__ import annotations

import csv
import enum
import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._kernels import min_phasor_pdop
from .errors import CoverageGapError, DegenerateGeometryError
from .geometry import Point2, as_xy

SENTINEL = math.inf
COND_LIMIT = 1e12


class Origin(str, enum.Enum):
    INITIAL = "initial"
    DEPLOYED = "deployed"


@dataclass(frozen=True)
class AnchorRecord:
    """One anchor: where it physically is and where the robot believes it is.

    ``placement_cov`` is the robot position covariance at the time of
    placement; it is only set for deployed anchors.
    """

    id: int
    true_pos: Point2
    est_pos: Point2
    origin: Origin = Origin.INITIAL
    placement_cov: np.ndarray | None = field(default=None, compare=False, repr=False)
    corrected: bool = False

    def __post_init__(self):
        object.__setattr__(self, "true_pos", Point2.of(self.true_pos))
        object.__setattr__(self, "est_pos", Point2.of(self.est_pos))
        object.__setattr__(self, "origin", Origin(self.origin))
        if self.origin is Origin.INITIAL and self.true_pos != self.est_pos:
            raise ValueError("initial anchors are surveyed: est_pos must equal true_pos")

    @classmethod
    def initial(cls, id: int, pos) -> "AnchorRecord":
        return cls(id, pos, pos, Origin.INITIAL)

    @property
    def offset(self) -> np.ndarray:
        """Deployment error ``est - true``."""
        return np.subtract(self.est_pos, self.true_pos)


class AnchorSet:
    """Ordered collection of anchors keyed by unique id."""

    def __init__(self, records: Iterable[AnchorRecord] = ()):
        self._records: list[AnchorRecord] = []
        for r in records:
            self.add(r)

    @classmethod
    def from_positions(cls, positions) -> "AnchorSet":
        return cls(AnchorRecord.initial(i + 1, p) for i, p in enumerate(np.asarray(positions, float)))

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, i) -> AnchorRecord:
        return self._records[i]

    def __repr__(self):
        return f"AnchorSet({self._records!r})"

    def add(self, record: AnchorRecord) -> None:
        if any(r.id == record.id for r in self._records):
            raise ValueError(f"duplicate anchor id {record.id}")
        self._records.append(record)

    def update(self, record: AnchorRecord) -> None:
        for k, r in enumerate(self._records):
            if r.id == record.id:
                self._records[k] = record
                return
        raise KeyError(record.id)

    def get(self, anchor_id: int) -> AnchorRecord:
        for r in self._records:
            if r.id == anchor_id:
                return r
        raise KeyError(anchor_id)

    def next_id(self) -> int:
        return max((r.id for r in self._records), default=0) + 1

    def copy(self) -> "AnchorSet":
        return AnchorSet(replace(r) for r in self._records)

    @property
    def ids(self) -> list[int]:
        return [r.id for r in self._records]

    def est_positions(self) -> np.ndarray:
        return np.array([r.est_pos for r in self._records], dtype=float).reshape(-1, 2)

    def true_positions(self) -> np.ndarray:
        return np.array([r.true_pos for r in self._records], dtype=float).reshape(-1, 2)

    def count(self, origin: Origin) -> int:
        return sum(r.origin is origin for r in self._records)


@dataclass(frozen=True)
class DopReport:
    pdop: float
    hdop: float
    subset: tuple[int, ...]
    query: Point2


def jacobian(anchors, s) -> np.ndarray:
    """Ranging Jacobian: row ``i`` is the unit vector from anchor ``i`` to ``s``."""
    a = np.asarray(anchors, dtype=float).reshape(-1, 2)
    d = as_xy(s) - a
    rho = np.hypot(d[:, 0], d[:, 1])
    if np.any(rho <= 0):
        raise DegenerateGeometryError("query point coincides with an anchor")
    return d / rho[:, None]


def pdop(anchors, s) -> float:
    """``sqrt(trace((P^T P)^-1))``; ``inf`` for singular or coincident geometry.

    Planar PDoP and HDoP are the same quantity here.
    """
    try:
        P = jacobian(anchors, s)
    except DegenerateGeometryError:
        return SENTINEL
    G = P.T @ P
    if len(P) < 2 or np.linalg.cond(G) > COND_LIMIT:
        return SENTINEL
    return float(math.sqrt(np.trace(np.linalg.inv(G))))


hdop = pdop


def dop_from_covariance(cov) -> dict[str, float]:
    """HDoP/VDoP/PDoP/GDoP from a unit-variance position(-time) covariance.

    ``cov`` is 2x2 (x, y), 3x3 (x, y, z) or 4x4 (x, y, z, t); metrics that
    need a missing axis are omitted.
    """
    C = np.asarray(cov, dtype=float)
    d = np.diag(C)
    out = {"HDoP": math.sqrt(d[0] + d[1])}
    if len(d) >= 3:
        out["VDoP"] = math.sqrt(d[2])
        out["PDoP"] = math.sqrt(d[0] + d[1] + d[2])
    else:
        out["PDoP"] = out["HDoP"]
    if len(d) >= 4:
        out["GDoP"] = math.sqrt(d[:4].sum())
    return out


def in_range(anchors: AnchorSet, s, rho_max: float) -> list[AnchorRecord]:
    q = as_xy(s)
    return [r for r in anchors if math.dist(r.est_pos, q) <= rho_max]


def best_subset(anchors: AnchorSet, s, rho_max: float) -> DopReport:
    """Exhaustive minimum-PDoP choice of four in-range anchors (estimated positions)."""
    cand = sorted(in_range(anchors, s, rho_max), key=lambda r: r.id)
    if len(cand) < 4:
        raise CoverageGapError(len(cand))
    best, best_ids = SENTINEL, tuple(r.id for r in cand[:4])
    for combo in itertools.combinations(cand, 4):
        g = pdop([r.est_pos for r in combo], s)
        if g < best:
            best, best_ids = g, tuple(r.id for r in combo)
    return DopReport(best, best, best_ids, Point2.of(s))


def best_pdop_many(points, anchor_positions, rho_max: float, n_active=None):
    """Best-subset PDoP at many points.

    ``n_active[p]`` restricts point ``p`` to the first ``n_active[p]`` anchor
    rows, which lets one call cover a manoeuvre during which anchors appear.
    Returns ``(pdop, index)`` where ``index`` holds the chosen anchor rows
    (-1 when coverage fails).
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    anc = np.ascontiguousarray(np.asarray(anchor_positions, dtype=float).reshape(-1, 2))
    if n_active is None:
        n_active = np.full(len(pts), len(anc), dtype=np.int64)
    else:
        n_active = np.ascontiguousarray(np.broadcast_to(np.asarray(n_active, dtype=np.int64), (len(pts),)))
    return min_phasor_pdop(pts, anc, n_active, float(rho_max))


@dataclass
class Heatmap:
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # shape (len(ys), len(xs))
    resolution: float

    @property
    def bbox(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (float(self.xs[0]), float(self.ys[0])), (float(self.xs[-1]), float(self.ys[-1]))

    def value_at(self, x: float, y: float) -> float:
        i = int(np.argmin(np.abs(self.ys - y)))
        j = int(np.argmin(np.abs(self.xs - x)))
        return float(self.values[i, j])

    def write(self, csv_path: str | Path) -> Path:
        """Write the grid (rows = y ascending) and a ``.json`` sidecar; returns the sidecar path."""
        csv_path = Path(csv_path)
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.values:
                w.writerow(["inf" if not math.isfinite(v) else repr(float(v)) for v in row])
        sidecar = csv_path.with_suffix(".json")
        (x0, y0), (x1, y1) = self.bbox
        meta = {
            "bbox": [[x0, y0], [x1, y1]],
            "resolution": self.resolution,
            "shape": list(self.values.shape),
            "row_axis": "y",
            "sentinel_value": "inf",
        }
        sidecar.write_text(json.dumps(meta, indent=2) + "\n")
        return sidecar


def heatmap(anchors: AnchorSet | np.ndarray, bbox: Sequence, resolution: float, rho_max: float) -> Heatmap:
    """Best-subset PDoP on grid nodes spanning ``bbox = ((x0, y0), (x1, y1))``."""
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    (x0, y0), (x1, y1) = bbox
    xs = x0 + resolution * np.arange(int(math.floor((x1 - x0) / resolution + 1e-9)) + 1)
    ys = y0 + resolution * np.arange(int(math.floor((y1 - y0) / resolution + 1e-9)) + 1)
    X, Y = np.meshgrid(xs, ys)
    pos = anchors.est_positions() if isinstance(anchors, AnchorSet) else np.asarray(anchors, float)
    vals, _ = best_pdop_many(np.column_stack([X.ravel(), Y.ravel()]), pos, rho_max)
    return Heatmap(xs, ys, vals.reshape(X.shape), float(resolution))


def square_layout(side: float, center=(0.0, 0.0)) -> np.ndarray:
    """Four anchors on the corners of an axis-aligned square."""
    c = as_xy(center)
    h = side / 2.0
    return c + np.array([[-h, -h], [h, -h], [h, h], [-h, h]])
