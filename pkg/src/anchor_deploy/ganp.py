"""Genetic Anchor Node Placement.

At viapoint ``q_i`` the best-subset PDoP is forecast over the path up to a
horizon ``r`` metres ahead.  When it exceeds the working threshold, a region
of width ``w`` is grown around the chord of the horizon and cut into ``n``
subareas, each of which may host one new anchor.  A genetic algorithm then
searches placements with 1, 2, 3 and 4 anchors (in that order) and the first
anchor count with a feasible placement wins.

Feasibility means PDoP <= working threshold at every candidate anchor spot,
along the whole deployment manoeuvre and along the forecast path, each
evaluated with the anchors that exist when the robot gets there.  The
robot keeps following the path until it reaches the viapoint at the first
foot point of the new anchors, where the manoeuvre starts and ends.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dop import AnchorSet, best_pdop_many
from .errors import InfeasibleRegionError
from .geometry import (
    DEFAULT_STEP,
    ExplorationPath,
    SearchRegion,
    discretize_polyline,
    foot_of_perpendicular,
    grow_search_region,
    split_subareas,
)
from .maneuver import ManeuverPath, plan_maneuver

PDOP_CAP = 10.0  # ceiling applied to sentinel values inside penalty and fitness sums
MUTATION_SIGMA = 0.15  # Gaussian step in subarea-local units


@dataclass(frozen=True)
class GaParams:
    population: int = 60
    generations: int = 80
    crossover_rate: float = 0.8
    mutation_rate: float = 0.15
    elite_count: int = 2
    seed: int = 0
    tournament_size: int = 3
    stall_generations: int = 25

    def __post_init__(self):
        if self.population < 2 or self.generations < 1:
            raise ValueError("population >= 2 and generations >= 1 required")
        if not 0 <= self.elite_count < self.population:
            raise ValueError("elite_count must be smaller than the population")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass(frozen=True)
class GanpParams:
    w: float
    r_horizon: float
    n: int
    p_max: float
    rho_max: float = 60.0
    p_work: float | None = None
    step: float = DEFAULT_STEP
    ga: GaParams = field(default_factory=GaParams)

    def __post_init__(self):
        if self.p_work is None:
            object.__setattr__(self, "p_work", 0.95 * self.p_max)
        if not 0 < self.p_work < self.p_max:
            raise ValueError("need 0 < p_work < p_max")
        if self.n < 1 or self.w <= 0 or self.r_horizon <= 0:
            raise ValueError("need n >= 1, w > 0, r_horizon > 0")


@dataclass(frozen=True)
class Candidate:
    """One slot per subarea: occupancy flag and local coordinates in [0, 1]^2."""

    occupied: np.ndarray
    local: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "Candidate":
        return cls(np.zeros(n, dtype=bool), np.full((n, 2), 0.5))

    @classmethod
    def from_positions(cls, subareas, positions) -> "Candidate":
        """Place each position into the subarea that contains it."""
        occ = np.zeros(len(subareas), dtype=bool)
        loc = np.full((len(subareas), 2), 0.5)
        for p in np.asarray(positions, dtype=float).reshape(-1, 2):
            for k, sub in enumerate(subareas):
                if not occ[k] and sub.contains(p):
                    occ[k] = True
                    loc[k] = np.clip(sub.to_local(p), 0.0, 1.0)
                    break
            else:
                raise ValueError(f"position {p} lies in no free subarea")
        return cls(occ, loc)

    @property
    def count(self) -> int:
        return int(self.occupied.sum())

    def positions(self, subareas) -> np.ndarray:
        pts = [sub.to_world(*self.local[k]) for k, sub in enumerate(subareas) if self.occupied[k]]
        return np.array(pts, dtype=float).reshape(-1, 2)


@dataclass
class FeasibilityReport:
    anchors_ok: bool
    maneuver_ok: bool
    forecast_ok: bool
    violation: float
    worst_anchor: float = 0.0
    worst_maneuver: float = 0.0
    worst_forecast: float = 0.0
    maneuver: ManeuverPath | None = None
    resume_index: int | None = None

    @property
    def feasible(self) -> bool:
        return self.anchors_ok and self.maneuver_ok and self.forecast_ok


@dataclass
class PlacementPlan:
    positions: np.ndarray
    resume_index: int
    fitness: float
    report: FeasibilityReport
    slots: tuple[int, ...] = ()
    horizon_index: int = 0
    evaluations: int = 0
    wall_time: float = 0.0

    @property
    def maneuver(self) -> ManeuverPath | None:
        return self.report.maneuver

    def __len__(self):
        return len(self.positions)


# --- forecast ------------------------------------------------------------------


def horizon_index(path: ExplorationPath, i: int, r_horizon: float) -> int:
    """Last viapoint within ``r_horizon`` metres of path ahead of ``q_i``."""
    target = path.stations[i] + r_horizon + 1e-9
    return max(i + 1, min(len(path) - 1, int(np.searchsorted(path.stations, target, side="right")) - 1))


def forecast_points(path: ExplorationPath, i: int, j: int, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Discretised path from ``q_i`` to ``q_j`` and the station of every sample."""
    pts = discretize_polyline(path.viapoints[i : j + 1], step)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    return pts, path.stations[i] + np.concatenate([[0.0], np.cumsum(seg)])


def needs_deployment(anchors: AnchorSet, path: ExplorationPath, i: int, params: GanpParams) -> tuple[bool, int | None]:
    """Whether the forecast horizon from ``q_i`` violates the working threshold.

    Returns the first viapoint at or beyond the first violating sample.
    Coverage gaps count as violations (their PDoP is infinite).
    """
    j = horizon_index(path, i, params.r_horizon)
    pts, st = forecast_points(path, i, j, params.step)
    g, _ = best_pdop_many(pts, anchors.est_positions(), params.rho_max)
    bad = np.flatnonzero(~(g <= params.p_work))
    if len(bad) == 0:
        return False, None
    k = int(np.searchsorted(path.stations, st[bad[0]] - 1e-9))
    return True, min(k, len(path) - 1)


# --- objective and constraints --------------------------------------------------


class _Context:
    """Quantities shared by every candidate evaluated at one decision point."""

    def __init__(self, anchors, path, i, params, j=None):
        self.path = path
        self.i = i
        self.params = params
        self.j = horizon_index(path, i, params.r_horizon) if j is None else j
        self.existing = anchors.est_positions() if isinstance(anchors, AnchorSet) else np.asarray(anchors, float)
        q = path.viapoints[i + 1 : self.j + 1]
        self.fit_points = q
        self.fit_weights = np.log1p(np.hypot(*(q - path.viapoints[i]).T))
        self.check_points, self.check_stations = forecast_points(path, i, self.j, params.step)
        self._base = None

    def base_pdop(self) -> np.ndarray:
        """Forecast PDoP with the existing anchors only."""
        if self._base is None:
            self._base = self._pdop(self.check_points, np.empty((0, 2)))
        return self._base

    def resume_for(self, plan_pos) -> int:
        """Viapoint where the manoeuvre starts: the last one not beyond the
        first foot point of the plan anchors, never behind ``q_i``."""
        first = min(foot_of_perpendicular(self.path, a)[1] for a in plan_pos)
        k = int(np.searchsorted(self.path.stations, first + 1e-9, side="right")) - 1
        return min(max(k, self.i), self.j)

    def _pdop(self, points, plan_pos, n_active=None):
        anc = np.vstack([self.existing, plan_pos]) if len(plan_pos) else self.existing
        if n_active is not None:
            n_active = n_active + len(self.existing)
        g, _ = best_pdop_many(points, anc, self.params.rho_max, n_active)
        return g

    def fitness(self, plan_pos) -> float:
        g = np.minimum(self._pdop(self.fit_points, plan_pos), PDOP_CAP)
        return float(g @ self.fit_weights)

    def constraints(self, plan_pos, planner, lazy: bool = False) -> FeasibilityReport:
        """Check the three placement conditions.

        With ``lazy`` the manoeuvre is only planned and checked once the
        forecast passes; a failing forecast then reports the manoeuvre
        conditions as unmet with NaN worst values.
        """
        p_work = self.params.p_work
        g_fore = self._pdop(self.check_points, plan_pos)
        viol_fore = float(np.sum(np.maximum(np.minimum(g_fore, PDOP_CAP) - p_work, 0.0)))
        worst_fore = float(np.max(g_fore))
        if len(plan_pos) == 0:
            return FeasibilityReport(True, True, worst_fore <= p_work, viol_fore, worst_forecast=worst_fore)
        if lazy and not worst_fore <= p_work:
            return FeasibilityReport(False, False, False, viol_fore, math.nan, math.nan, worst_fore)
        resume = self.resume_for(plan_pos)
        # the stretch flown before the manoeuvre only sees existing anchors
        g_app = self.base_pdop()[self.check_stations <= self.path.stations[resume] + 1e-9]
        man = planner(plan_pos, self.path, float(self.path.stations[resume]))
        pts, stage, vidx = man.sample_layout(self.params.step)
        # stage is counted in visiting order; map it onto plan rows
        ordered = plan_pos[list(man.order)]
        g_man = np.concatenate([g_app, self._pdop(pts, ordered, stage)])
        g_anchor = g_man[len(g_app) + vidx[list(man.placements)]]
        worst = (float(np.max(g_anchor)), float(np.max(g_man)), worst_fore)
        viol = viol_fore + float(np.sum(np.maximum(np.minimum(g_man, PDOP_CAP) - p_work, 0.0)))
        return FeasibilityReport(
            worst[0] <= p_work,
            worst[1] <= p_work,
            worst[2] <= p_work,
            viol,
            *worst,
            maneuver=man,
            resume_index=resume,
        )


def _subareas(path, i, j, params) -> tuple[SearchRegion, ...]:
    region = grow_search_region(path, i, j - i, params.w)
    n = max(1, min(params.n, int(region.length / params.step)))
    return split_subareas(region, n, params.step)


def fitness(candidate: Candidate, anchors: AnchorSet, path: ExplorationPath, i: int, params: GanpParams) -> float:
    """Distance-weighted sum of forecast PDoP; lower is better.

    ``Y = sum_j pdop(q_j) * ln(1 + |q_j - q_i|)`` over the viapoints after ``q_i``
    up to the horizon, with the candidate anchors added.
    """
    ctx = _Context(anchors, path, i, params)
    subs = _subareas(path, i, ctx.j, params)
    return ctx.fitness(candidate.positions(subs))


def constraints(
    candidate: Candidate,
    anchors: AnchorSet,
    path: ExplorationPath,
    i: int,
    params: GanpParams,
    maneuver_planner: Callable = plan_maneuver,
) -> FeasibilityReport:
    ctx = _Context(anchors, path, i, params)
    subs = _subareas(path, i, ctx.j, params)
    return ctx.constraints(candidate.positions(subs), maneuver_planner)


# --- genetic search ---------------------------------------------------------------


def _random_individual(rng, n, c):
    occ = np.zeros(n, dtype=bool)
    occ[rng.choice(n, size=c, replace=False)] = True
    return occ, rng.random((n, 2))


def _repair(rng, occ, c):
    on = np.flatnonzero(occ)
    if len(on) > c:
        occ[rng.choice(on, size=len(on) - c, replace=False)] = False
    elif len(on) < c:
        off = np.flatnonzero(~occ)
        occ[rng.choice(off, size=c - len(on), replace=False)] = True
    return occ


def _rank_key(score):
    y, viol = score
    return (0, y) if viol <= 0 else (1, viol)


def _tournament(rng, keys, k):
    picks = rng.choice(len(keys), size=k, replace=False)
    return min(picks, key=lambda p: keys[p])


def _run_ga(ctx: _Context, subs, c: int, planner, rng: np.random.Generator):
    ga = ctx.params.ga
    n = len(subs)
    k_tour = min(ga.tournament_size, ga.population)

    def evaluate(occ, loc):
        pos = np.array([subs[s].to_world(*loc[s]) for s in range(n) if occ[s]]).reshape(-1, 2)
        rep = ctx.constraints(pos, planner, lazy=True)
        y = ctx.fitness(pos)
        return (y, 0.0 if rep.feasible else max(rep.violation, 1e-12)), rep, pos

    pop = [_random_individual(rng, n, c) for _ in range(ga.population)]
    results = [evaluate(*ind) for ind in pop]
    evals = len(pop)
    best_key, stall = None, 0
    for _gen in range(ga.generations):
        keys = [_rank_key(r[0]) for r in results]
        order = sorted(range(len(pop)), key=lambda p: keys[p])
        top = keys[order[0]]
        if best_key is not None and not (top[0] < best_key[0] or top[1] < best_key[1] - 1e-9):
            stall += 1
            if stall >= ga.stall_generations:
                break
        else:
            stall = 0
        best_key = top
        new_pop = [(pop[p][0].copy(), pop[p][1].copy()) for p in order[: ga.elite_count]]
        new_res = [results[p] for p in order[: ga.elite_count]]
        while len(new_pop) < ga.population:
            pa = pop[_tournament(rng, keys, k_tour)]
            pb = pop[_tournament(rng, keys, k_tour)]
            occ, loc = pa[0].copy(), pa[1].copy()
            if rng.random() < ga.crossover_rate:
                take_b = rng.random(n) < 0.5
                occ[take_b] = pb[0][take_b]
                loc[take_b] = pb[1][take_b]
                occ = _repair(rng, occ, c)
            for s in np.flatnonzero(occ):
                if rng.random() < ga.mutation_rate:
                    loc[s] = np.clip(loc[s] + MUTATION_SIGMA * rng.standard_normal(2), 0.0, 1.0)
            if c < n and rng.random() < ga.mutation_rate:
                src = rng.choice(np.flatnonzero(occ))
                dst = rng.choice(np.flatnonzero(~occ))
                occ[src], occ[dst] = False, True
                loc[dst] = rng.random(2)
            new_pop.append((occ, loc))
            new_res.append(evaluate(occ, loc))
            evals += 1
        pop, results = new_pop, new_res
    keys = [_rank_key(r[0]) for r in results]
    b = min(range(len(pop)), key=lambda p: keys[p])
    (y, viol), rep, pos = results[b]
    slots = tuple(int(s) for s in np.flatnonzero(pop[b][0]))
    return y, viol, rep, pos, slots, evals


def optimize(
    anchors: AnchorSet,
    path: ExplorationPath,
    i: int,
    params: GanpParams,
    maneuver_planner: Callable = plan_maneuver,
    rng: np.random.Generator | None = None,
) -> PlacementPlan:
    """Fewest-anchor feasible placement for the horizon ahead of ``q_i``.

    If no placement with up to four anchors is feasible, the horizon is
    shortened by one subarea length and the search repeated, which forces
    anchors closer to the robot.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(params.ga.seed) if rng is None else rng
    j = horizon_index(path, i, params.r_horizon)
    total_evals = 0
    while True:
        ctx = _Context(anchors, path, i, params, j)
        subs = _subareas(path, i, j, params)
        for c in range(1, min(4, len(subs)) + 1):
            y, viol, rep, pos, slots, evals = _run_ga(ctx, subs, c, maneuver_planner, rng)
            total_evals += evals
            if viol <= 0:
                return PlacementPlan(pos, rep.resume_index, y, rep, slots, j, total_evals, time.perf_counter() - t0)
        shorter = path.stations[j] - params.r_horizon / params.n
        if shorter <= path.stations[i] + params.step:
            raise InfeasibleRegionError(f"no feasible placement ahead of viapoint {i}", viapoint=i)
        new_j = max(i + 1, int(np.searchsorted(path.stations, shorter + 1e-9, side="right")) - 1)
        if new_j >= j:
            raise InfeasibleRegionError(f"no feasible placement ahead of viapoint {i}", viapoint=i)
        j = new_j
