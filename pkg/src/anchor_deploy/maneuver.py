"""Deployment manoeuvres and the mission/deployment/placed state machine.

A manoeuvre always starts and ends at the stored resume point on the path.
Two shapes are compared and the shorter one is flown:

* per-anchor: walk the path to each anchor's foot point, go out and back,
  and finally walk the path back to the resume point;
* sequential: walk the path to the first foot point, fly anchor to anchor,
  then fly straight back to the resume point.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ProtocolError
from .geometry import DEFAULT_STEP, ExplorationPath, foot_of_perpendicular, polyline_length, polyline_samples


class Strategy(str, enum.Enum):
    PER_ANCHOR = "per_anchor_back_and_forth"
    SEQUENTIAL = "sequential_tour"


@dataclass(frozen=True)
class ManeuverPath:
    """Closed polyline flown in the deployment and placed states.

    ``placements[k]`` is the vertex index at which the anchor ``order[k]``
    (an index into the plan) is dropped; ``rejoins`` are the vertex indices
    where the robot is back on the exploration path between anchors.
    """

    points: np.ndarray
    length: float
    strategy: Strategy
    order: tuple[int, ...]
    placements: tuple[int, ...]
    rejoins: tuple[int, ...] = ()
    lengths: dict = field(default_factory=dict, compare=False)

    def samples(self, step: float = DEFAULT_STEP) -> tuple[np.ndarray, np.ndarray]:
        """Points along the manoeuvre and, for each, how many plan anchors are
        already placed when the robot passes there."""
        pts, stage, _ = self.sample_layout(step)
        return pts, stage

    def sample_layout(self, step: float = DEFAULT_STEP) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """:meth:`samples` plus the sample index of every vertex."""
        pts, vidx = polyline_samples(self.points, step)
        drops = np.sort(vidx[list(self.placements)])
        stage = np.searchsorted(drops, np.arange(len(pts)), side="left").astype(np.int64)
        return pts, stage, vidx


def _walk(path: ExplorationPath, s0: float, s1: float) -> np.ndarray:
    return path.between(s0, s1)


def _per_anchor(path, anchors, feet, stations, s_i):
    order = sorted(range(len(anchors)), key=lambda k: (stations[k], k))
    pts = [path.point_at(s_i)[None]]
    placements, rejoins = [], []
    cur = s_i
    for k in order:
        pts.append(_walk(path, cur, stations[k])[1:])
        pts.append(anchors[k][None])
        placements.append(sum(len(p) for p in pts) - 1)
        pts.append(feet[k][None])
        rejoins.append(sum(len(p) for p in pts) - 1)
        cur = stations[k]
    pts.append(_walk(path, cur, s_i)[1:])
    poly = np.vstack(pts)
    return poly, tuple(order), tuple(placements), tuple(rejoins[:-1])


def _sequential_length(path_len_to_first, offsets, anchors, q_i, perm):
    total = path_len_to_first[perm[0]] + offsets[perm[0]]
    for a, b in zip(perm[:-1], perm[1:]):
        total += math.dist(anchors[a], anchors[b])
    return total + math.dist(anchors[perm[-1]], q_i)


def plan_maneuver(plan, path: ExplorationPath, resume_station: float) -> ManeuverPath:
    """Shorter of the per-anchor and sequential manoeuvres for the plan anchors.

    ``plan`` is a :class:`~anchor_deploy.ganp.PlacementPlan` or an array of
    anchor positions in plan (subarea) order.
    """
    anchors = np.asarray(getattr(plan, "positions", plan), dtype=float).reshape(-1, 2)
    if not 1 <= len(anchors) <= 4:
        raise ValueError("a manoeuvre places between one and four anchors")
    q_i = path.point_at(resume_station)
    feet, stations = zip(*(foot_of_perpendicular(path, a) for a in anchors))
    offsets = [math.dist(a, f) for a, f in zip(anchors, feet)]
    to_first = [abs(s - resume_station) for s in stations]

    poly_a, order_a, place_a, rejoin_a = _per_anchor(path, anchors, feet, stations, resume_station)
    len_a = polyline_length(poly_a)

    best_perm, len_b = None, math.inf
    for perm in itertools.permutations(range(len(anchors))):
        length = _sequential_length(to_first, offsets, anchors, q_i, perm)
        if length < len_b - 1e-12:
            best_perm, len_b = perm, length

    lengths = {Strategy.PER_ANCHOR: len_a, Strategy.SEQUENTIAL: len_b}
    if len_a <= len_b + 1e-9:
        poly_a[-1] = q_i
        return ManeuverPath(poly_a, len_a, Strategy.PER_ANCHOR, order_a, place_a, rejoin_a, lengths)

    first = best_perm[0]
    pts = [_walk(path, resume_station, stations[first])]
    pts.append(anchors[list(best_perm)])
    placements = tuple(len(pts[0]) + k for k in range(len(best_perm)))
    pts.append(q_i[None])
    poly_b = np.vstack(pts)
    return ManeuverPath(poly_b, polyline_length(poly_b), Strategy.SEQUENTIAL, tuple(best_perm), placements, (), lengths)


# --- state machine -----------------------------------------------------------


class Mode(str, enum.Enum):
    MISSION = "MS"
    DEPLOYMENT = "DS"
    PLACED = "PS"


class Event(str, enum.Enum):
    DEPLOYMENT_NEEDED = "deployment_needed"
    ANCHOR_PLACED = "anchor_placed"
    PATH_REJOINED = "path_rejoined"
    RESUME_REACHED = "resume_reached"
    MISSION_END = "mission_end"


class TerminalAction(str, enum.Enum):
    BECOME_ANCHOR = "become_anchor"
    CONTINUE_NEW_AREA = "continue_new_area"
    RETURN_TO_START = "return_to_start"


@dataclass(frozen=True)
class FsmState:
    mode: Mode = Mode.MISSION
    resume_index: int | None = None
    remaining: int = 0
    chain: bool = False
    finished: bool = False


def step_fsm(
    state: FsmState,
    event: Event,
    *,
    plan_size: int = 0,
    chain: bool = False,
    resume_index: int | None = None,
    terminal: TerminalAction = TerminalAction.RETURN_TO_START,
) -> tuple[FsmState, list[str]]:
    """Advance the state machine by one event; returns the new state and the
    actions the robot must carry out."""
    if state.finished:
        raise ProtocolError("mission already finished")
    mode = state.mode
    if mode is Mode.MISSION:
        if event is Event.DEPLOYMENT_NEEDED:
            if plan_size < 1 or resume_index is None:
                raise ProtocolError("a deployment needs a non-empty plan and a resume viapoint")
            return FsmState(Mode.DEPLOYMENT, resume_index, plan_size, chain), ["store_resume", "fly_to_anchor"]
        if event is Event.MISSION_END:
            return replace(state, finished=True), [terminal.value]
    elif mode is Mode.DEPLOYMENT:
        if event is Event.ANCHOR_PLACED:
            left = state.remaining - 1
            if left < 0:
                raise ProtocolError("no anchor left to place")
            if left > 0 and state.chain:
                return replace(state, remaining=left), ["place_anchor", "fly_to_anchor"]
            return replace(state, mode=Mode.PLACED, remaining=left), ["place_anchor", "return_to_path"]
    elif mode is Mode.PLACED:
        if event is Event.PATH_REJOINED:
            if state.remaining > 0:
                return replace(state, mode=Mode.DEPLOYMENT), ["fly_to_anchor"]
            return state, ["follow_path_to_resume"]
        if event is Event.RESUME_REACHED:
            if state.remaining > 0:
                return replace(state, mode=Mode.DEPLOYMENT), ["fly_to_anchor"]
            return FsmState(Mode.MISSION), ["resume_mission"]
    raise ProtocolError(f"event {event.value!r} not accepted in state {mode.value}")


# --- trace -------------------------------------------------------------------


@dataclass
class TraceRecord:
    k: int
    state: str
    true_pos: tuple[float, float]
    est_pos: tuple[float, float] | None
    pdop: float
    active_subset: tuple[int, ...]
    event: str | None = None
    phase: str = "mission"

    def to_json(self) -> str:
        d = asdict(self)
        d["pdop"] = self.pdop if math.isfinite(self.pdop) else None
        d["active_subset"] = list(self.active_subset)
        return json.dumps(d, separators=(",", ":"))


class SimulationTrace(list):
    """Append-only list of :class:`TraceRecord`."""

    def positions(self, include_terminal: bool = False) -> np.ndarray:
        pts = [r.true_pos for r in self if include_terminal or r.phase != "terminal"]
        return np.asarray(pts, dtype=float).reshape(-1, 2)

    def states(self) -> list[str]:
        """State sequence with consecutive repeats collapsed."""
        out: list[str] = []
        for r in self:
            if not out or out[-1] != r.state:
                out.append(r.state)
        return out

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for r in self:
                fh.write(r.to_json() + "\n")


def traveled_distance(trace: Iterable, include_terminal: bool = False) -> float:
    """Length of the realised trajectory (mission plus manoeuvres).

    The terminal leg flown after the last viapoint is excluded unless asked for.
    """
    if isinstance(trace, SimulationTrace):
        pts = trace.positions(include_terminal)
    else:
        pts = np.asarray(
            [getattr(r, "true_pos", r) for r in trace if include_terminal or getattr(r, "phase", "") != "terminal"],
            dtype=float,
        )
    if len(pts) == 0:
        raise ValueError("empty trace")
    return polyline_length(pts)
