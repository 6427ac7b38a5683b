"""Planar geometry: exploration paths, search regions around the path and
point-to-polyline projection.

Points are carried as ``(2,)`` float arrays; :class:`Point2` is the value type
used in records and serialised output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateGeometryError

DEFAULT_STEP = 0.5  # m


class Point2(NamedTuple):
    x: float
    y: float

    @classmethod
    def of(cls, p) -> "Point2":
        x, y = (float(v) for v in p)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"non-finite point ({x}, {y})")
        return cls(x, y)


def as_xy(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"expected a planar point, got shape {arr.shape}")
    return arr


def discretize(start, end, step: float = DEFAULT_STEP) -> np.ndarray:
    """Sample the segment ``start -> end`` with both endpoints and spacing <= step."""
    if step <= 0:
        raise ValueError("step must be positive")
    a, b = as_xy(start), as_xy(end)
    length = math.hypot(b[0] - a[0], b[1] - a[1])
    intervals = max(1, math.ceil(length / step - 1e-12))
    t = (np.arange(intervals + 1) / intervals)[:, None]
    return a + t * (b - a)


def polyline_samples(points, step: float = DEFAULT_STEP) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`discretize_polyline`.

    Also returns, for every vertex, the index of its sample.  Zero-length legs
    add no samples, so repeated vertices share an index.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    pts = np.asarray(points, dtype=float)
    d = np.diff(pts, axis=0)
    seg = np.hypot(d[:, 0], d[:, 1])
    counts = np.where(seg > 0, np.maximum(1, np.ceil(seg / step - 1e-12)), 0).astype(np.int64)
    vertex_index = np.concatenate([[0], np.cumsum(counts)])
    leg = np.repeat(np.arange(len(seg)), counts)
    k = np.arange(vertex_index[-1]) - vertex_index[leg] + 1
    t = (k / np.maximum(counts[leg], 1))[:, None]
    out = np.empty((vertex_index[-1] + 1, 2))
    out[0] = pts[0]
    out[1:] = pts[leg] + t * d[leg]
    # land exactly on vertices
    out[vertex_index] = pts
    return out, vertex_index


def discretize_polyline(points, step: float = DEFAULT_STEP) -> np.ndarray:
    """Discretize every leg of a polyline; shared vertices appear once."""
    pts = np.asarray(points, dtype=float)
    if len(pts) == 1:
        return pts.copy()
    return polyline_samples(pts, step)[0]


def polyline_length(points) -> float:
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return 0.0
    return float(np.hypot(*np.diff(pts, axis=0).T).sum())


@dataclass(frozen=True)
class ExplorationPath:
    """Ordered viapoints ``q_1 .. q_h`` of the planned exploration path."""

    viapoints: np.ndarray
    stations: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.viapoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("viapoints must be an (h, 2) array")
        if len(pts) < 2:
            raise ValueError("a path needs at least two viapoints")
        if not np.all(np.isfinite(pts)):
            raise ValueError("viapoints must be finite")
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg == 0):
            raise ValueError("consecutive viapoints must be distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "viapoints", pts)
        st = np.concatenate([[0.0], np.cumsum(seg)])
        st.setflags(write=False)
        object.__setattr__(self, "stations", st)

    def __len__(self) -> int:
        return len(self.viapoints)

    def __getitem__(self, i) -> np.ndarray:
        return self.viapoints[i]

    @property
    def length(self) -> float:
        return float(self.stations[-1])

    @classmethod
    def from_csv(cls, path: str | Path) -> "ExplorationPath":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["x", "y"]:
                raise ValueError(f"{path}: expected header 'x,y'")
            rows = [(float(r["x"]), float(r["y"])) for r in reader]
        return cls(np.array(rows))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y"])
            for x, y in self.viapoints:
                w.writerow([repr(float(x)), repr(float(y))])

    def point_at(self, station):
        """Point(s) at the given arclength station(s), clamped to the path."""
        s = np.clip(np.asarray(station, dtype=float), 0.0, self.length)
        x = np.interp(s, self.stations, self.viapoints[:, 0])
        y = np.interp(s, self.stations, self.viapoints[:, 1])
        return np.stack([x, y], axis=-1)

    def between(self, s0: float, s1: float) -> np.ndarray:
        """Polyline from station ``s0`` to ``s1`` (either direction), vertices included."""
        lo, hi = sorted((float(np.clip(s0, 0, self.length)), float(np.clip(s1, 0, self.length))))
        inner = self.stations[(self.stations > lo) & (self.stations < hi)]
        st = np.concatenate([[lo], inner, [hi]]) if hi > lo else np.array([lo])
        pts = self.point_at(st)
        return pts if s0 <= s1 else pts[::-1]

    def resample(self, spacing: float) -> "ExplorationPath":
        """Viapoints at arclength multiples of ``spacing`` (plus the end point)."""
        if spacing <= 0:
            raise ValueError("spacing must be positive")
        n = int(math.floor(self.length / spacing + 1e-9))
        st = np.arange(n + 1) * spacing
        if self.length - st[-1] > 1e-9 * max(1.0, self.length):
            st = np.append(st, self.length)
        else:
            st[-1] = self.length
        return ExplorationPath(self.point_at(st))


@dataclass(frozen=True)
class SearchRegion:
    """Rectangle of width ``width`` centred on the chord ``origin -> origin + length*axis``.

    Local coordinates ``(u, v)`` in ``[0, 1]^2`` run along the chord and across
    it (``v = 0`` on the right of the direction of travel).
    """

    origin: np.ndarray
    axis: np.ndarray
    length: float
    width: float
    start_index: int = 0
    end_index: int = 0

    @property
    def normal(self) -> np.ndarray:
        return np.array([-self.axis[1], self.axis[0]])

    @property
    def horizon(self) -> int:
        return self.end_index - self.start_index

    @property
    def corners(self) -> np.ndarray:
        o, t, nrm = self.origin, self.axis, self.normal
        half = 0.5 * self.width * nrm
        far = o + self.length * t
        return np.array([o - half, far - half, far + half, o + half])

    @property
    def area(self) -> float:
        return self.length * self.width

    def to_world(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=float)[..., None]
        v = np.asarray(v, dtype=float)[..., None]
        return self.origin + u * self.length * self.axis + (v - 0.5) * self.width * self.normal

    def to_local(self, p) -> np.ndarray:
        d = np.asarray(p, dtype=float) - self.origin
        u = d @ self.axis / self.length
        v = d @ self.normal / self.width + 0.5
        return np.stack([u, v], axis=-1)

    def contains(self, p, tol: float = 1e-9) -> bool:
        u, v = self.to_local(p)
        return bool(-tol <= u <= 1 + tol and -tol <= v <= 1 + tol)


def grow_search_region(path: ExplorationPath, i: int, r_horizon: int, w: float) -> SearchRegion:
    """Region of width ``w`` around the chord ``q_i -> q_{i+r}``.

    A horizon running past the last viapoint is clamped; the clamped value is
    available as ``region.horizon``.
    """
    if w <= 0:
        raise ValueError("region width must be positive")
    if not 0 <= i < len(path) - 1:
        raise IndexError(f"viapoint index {i} has no forward horizon")
    j = min(i + int(r_horizon), len(path) - 1)
    a, b = path[i], path[j]
    chord = float(np.hypot(*(b - a)))
    if chord <= 1e-12:
        raise DegenerateGeometryError(f"chord q_{i} -> q_{j} has zero length")
    return SearchRegion(a.copy(), (b - a) / chord, chord, float(w), i, j)


def split_subareas(region: SearchRegion, n: int, resolution: float = DEFAULT_STEP) -> tuple[SearchRegion, ...]:
    """Cut the region into ``n`` equal slices along the chord, nearest first."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if region.length / n < resolution:
        raise ValueError(
            f"cannot split a {region.length:.3g} m chord into {n} slices at {resolution} m resolution"
        )
    if n == 1:
        return (region,)
    slice_len = region.length / n
    return tuple(
        SearchRegion(
            region.origin + k * slice_len * region.axis,
            region.axis,
            slice_len,
            region.width,
            region.start_index,
            region.end_index,
        )
        for k in range(n)
    )


def foot_of_perpendicular(path: ExplorationPath, p) -> tuple[np.ndarray, float]:
    """Closest point of the polyline to ``p`` and its station.

    Ties go to the smaller station.
    """
    q = as_xy(p)
    a = path.viapoints[:-1]
    d = np.diff(path.viapoints, axis=0)
    seg_len2 = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", q - a, d) / seg_len2, 0.0, 1.0)
    feet = a + t[:, None] * d
    dist2 = np.einsum("ij,ij->i", feet - q, feet - q)
    k = int(np.argmin(dist2))
    station = float(path.stations[k] + t[k] * math.sqrt(seg_len2[k]))
    return feet[k], station


def rotate(points, angle: float, about: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    R = np.array([[c, -s], [s, c]])
    pts = np.asarray(points, dtype=float)
    o = np.asarray(about, dtype=float)
    return (pts - o) @ R.T + o
