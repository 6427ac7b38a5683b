"""Full-mission simulation: the robot follows the exploration path, localises
itself by multilateration at every tick, and deploys anchors either with
GANP or with the trivial four-anchor block rule."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..bias import SAMPLES_PER_POSITION, BiasObservation, correct_anchor, estimate_bias_nonlinear
from ..dop import AnchorRecord, AnchorSet, Origin, best_pdop_many
from ..errors import AnchorDeployError, InfeasibleRegionError
from ..ganp import PlacementPlan, needs_deployment, optimize
from ..geometry import ExplorationPath, discretize
from ..maneuver import (
    Event,
    FsmState,
    Mode,
    SimulationTrace,
    Strategy,
    TerminalAction,
    TraceRecord,
    step_fsm,
    traveled_distance,
)
from ..multilateration import WlsProblem, solve_wls
from ..ranging import propagated_sigma_eta
from ..scenario import ExplorationScenario

log = logging.getLogger(__name__)

WALL_CLOCK_FIELDS = ("c_t",)


@dataclass
class MissionMetrics:
    m: int
    d_t: float
    c_t: float
    max_pdop: float
    violations: int
    total_anchors: int
    d_terminal: float = 0.0
    deployments: int = 0
    anchor_error_mean: float = 0.0
    anchor_error_max: float = 0.0
    aborted: bool = False
    abort_reason: str | None = None
    pdop_series: list = field(default_factory=list, repr=False)

    def to_dict(self, wall_clock: bool = True) -> dict:
        d = asdict(self)
        d.pop("pdop_series")
        d["max_pdop"] = self.max_pdop if math.isfinite(self.max_pdop) else None
        if not wall_clock:
            for k in WALL_CLOCK_FIELDS:
                d.pop(k)
        return d


@dataclass
class MissionResult:
    trace: SimulationTrace
    metrics: MissionMetrics
    anchors: AnchorSet
    plans: list = field(default_factory=list)

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.trace.write_jsonl(out / "trace.jsonl")
        (out / "metrics.json").write_text(json.dumps(self.metrics.to_dict(), indent=2, sort_keys=True) + "\n")
        with open(out / "pdop_series.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "state", "phase", "pdop"])
            for r in self.trace:
                w.writerow([r.k, r.state, r.phase, repr(r.pdop) if math.isfinite(r.pdop) else "inf"])


class _Simulator:
    def __init__(self, scenario: ExplorationScenario):
        self.sc = scenario
        self.params = scenario.ganp
        self.path: ExplorationPath = scenario.load_path()
        self.anchors = AnchorSet.from_positions(scenario.initial_positions)
        ss = np.random.SeedSequence(scenario.seed)
        meas_ss, ga_ss = ss.spawn(2)
        self.model = scenario.noise.model()
        self.model.reseed(meas_ss)
        self.ga_rng = np.random.default_rng(ga_ss)
        self.trace = SimulationTrace()
        self.state = FsmState()
        self.prev_est = self.path[0].copy()
        self.last_cov = None
        self.deployed = 0
        self.deployments = 0
        self.c_t = 0.0
        self.plans: list[PlacementPlan] = []
        self.pending: list[dict] = []
        self.station = 0.0

    # -- sensing -------------------------------------------------------------
    def _variances(self, recs, rho):
        var = self.model.sigma_at(rho) ** 2
        if self.sc.policy.delta_mode == "noise":
            for k, r in enumerate(recs):
                if r.origin is Origin.DEPLOYED and not r.corrected and r.placement_cov is not None:
                    F = self.prev_est - np.asarray(r.est_pos)
                    F = F / max(np.hypot(*F), 1e-12)
                    var[k] = propagated_sigma_eta(math.sqrt(var[k]), F, r.placement_cov)
        return var

    def locate(self, true_pos):
        rho_max = self.params.rho_max
        true_all = self.anchors.true_positions()
        visible = [r for r, t in zip(self.anchors, true_all) if math.dist(t, true_pos) <= rho_max]
        pending_ids = {p["id"] for p in self.pending}
        usable = [r for r in visible if r.id not in pending_ids]
        if len(usable) < 4:
            usable = visible
        if len(usable) < 3:
            return None, None, ()
        est = np.array([r.est_pos for r in usable])
        _, idx = best_pdop_many(self.prev_est, est, rho_max)
        chosen = [usable[i] for i in idx[0]] if idx[0, 0] >= 0 else usable
        d_prev = [math.dist(r.est_pos, self.prev_est) for r in chosen]
        chosen = [chosen[k] for k in sorted(range(len(chosen)), key=lambda k: (d_prev[k], chosen[k].id))]
        true_rho = np.array([math.dist(r.true_pos, true_pos) for r in chosen])
        meas = self.model.compensate(self.model.measure(true_rho))
        try:
            sol = solve_wls(WlsProblem([r.est_pos for r in chosen], meas, self._variances(chosen, meas)))
        except AnchorDeployError:
            return None, None, tuple(r.id for r in chosen)
        return sol.xy, sol.cov, tuple(r.id for r in chosen)

    def tick(self, true_pos, event=None, phase="mission"):
        true_pos = np.asarray(true_pos, dtype=float)
        est, cov, subset = self.locate(true_pos)
        if est is not None:
            self.prev_est = est
            self.last_cov = cov
        g, _ = best_pdop_many(true_pos, self.anchors.est_positions(), self.params.rho_max)
        rec = TraceRecord(
            len(self.trace),
            self.state.mode.value,
            (float(true_pos[0]), float(true_pos[1])),
            None if est is None else (float(est[0]), float(est[1])),
            float(g[0]),
            subset,
            event,
            phase,
        )
        self.trace.append(rec)
        if phase == "mission" and self.pending:
            self._observe(true_pos, est)
        return est, cov

    # -- deployment-offset correction ----------------------------------------
    def _schedule_correction(self, anchor_id, resume_station):
        spacing = self.sc.policy.observation_spacing
        targets = [resume_station + spacing * (k + 1) for k in range(3)]
        self.pending.append({"id": anchor_id, "targets": targets, "pos": [], "rho": []})

    def _observe(self, true_pos, est):
        done = []
        for p in self.pending:
            if est is None or len(p["pos"]) >= 3 or self.station + 1e-9 < p["targets"][len(p["pos"])]:
                continue
            rec = self.anchors.get(p["id"])
            rho = math.dist(rec.true_pos, true_pos)
            raw = self.model.measure(np.full(SAMPLES_PER_POSITION, rho))
            p["pos"].append(np.array(true_pos) if self.sc.policy.observation_source == "true" else est)
            p["rho"].append(float(self.model.compensate(raw.mean())))
            if len(p["pos"]) == 3:
                done.append(p)
        for p in done:
            self.pending.remove(p)
            rec = self.anchors.get(p["id"])
            try:
                estimate = estimate_bias_nonlinear(BiasObservation(p["pos"], p["rho"]), rec.est_pos)
            except AnchorDeployError as exc:
                log.info("offset estimation for anchor %s skipped: %s", rec.id, exc)
                continue
            if not np.linalg.norm(estimate.delta_hat) <= self.sc.policy.max_correction:
                log.info("offset estimate for anchor %s rejected: %s", rec.id, estimate.delta_hat)
                self._mark(f"correction_rejected:{rec.id}")
                continue
            self.anchors.update(correct_anchor(rec, estimate))
            self._mark(f"corrected:{rec.id}")

    def _mark(self, event: str) -> None:
        last = self.trace[-1]
        last.event = event if last.event is None else f"{last.event};{event}"

    # -- manoeuvres -------------------------------------------------------------
    def execute_plan(self, plan: PlacementPlan, i: int):
        man = plan.maneuver
        chain = man.strategy is Strategy.SEQUENTIAL
        self.state, _ = step_fsm(self.state, Event.DEPLOYMENT_NEEDED, plan_size=len(plan), chain=chain, resume_index=i)
        self.deployments += 1
        placements = dict(zip(man.placements, man.order))
        rejoins = set(man.rejoins)
        new_ids = []
        last = len(man.points) - 1
        est, cov = None, None
        for v in range(last):
            a, b = man.points[v], man.points[v + 1]
            moved = not np.array_equal(a, b)
            seg = discretize(a, b, self.params.step)[1:] if moved else b[None]
            for p in seg[:-1]:
                self.tick(p, phase="maneuver")
            vertex = v + 1
            if vertex in placements:
                if moved:
                    est, cov = self.tick(seg[-1], event="anchor_placed", phase="maneuver")
                else:
                    est, cov = self.prev_est.copy(), self.last_cov
                    self._mark("anchor_placed")
                rec = AnchorRecord(
                    self.anchors.next_id(),
                    tuple(seg[-1]),
                    tuple(seg[-1] if est is None else est),
                    Origin.DEPLOYED,
                    placement_cov=cov,
                )
                self.anchors.add(rec)
                new_ids.append(rec.id)
                self.deployed += 1
                self.state, _ = step_fsm(self.state, Event.ANCHOR_PLACED)
            elif vertex in rejoins:
                if moved:
                    self.tick(seg[-1], event="path_rejoined", phase="maneuver")
                self.state, _ = step_fsm(self.state, Event.PATH_REJOINED)
            elif vertex == last:
                self.state, _ = step_fsm(self.state, Event.RESUME_REACHED)
                if moved:
                    self.tick(seg[-1], event="resume_reached", phase="maneuver")
            elif moved:
                est, cov = self.tick(seg[-1], phase="maneuver")
        if self.sc.policy.bias_correction and self.sc.policy.delta_mode == "offset":
            for aid in new_ids:
                self._schedule_correction(aid, float(self.path.stations[i]))

    def deploy_block(self, center):
        """Trivial rule: four anchors in the initial pattern, centred on the robot."""
        layout = self.sc.initial_positions
        corners = layout - layout.mean(axis=0) + center
        tour = np.vstack([center, corners, center])
        self.state, _ = step_fsm(self.state, Event.DEPLOYMENT_NEEDED, plan_size=4, chain=True, resume_index=0)
        self.deployments += 1
        for v in range(len(tour) - 1):
            seg = discretize(tour[v], tour[v + 1], self.params.step)[1:]
            for p in seg[:-1]:
                self.tick(p, phase="maneuver")
            if v < 4:
                est, cov = self.tick(seg[-1], event="anchor_placed", phase="maneuver")
                self.anchors.add(
                    AnchorRecord(self.anchors.next_id(), tuple(seg[-1]), tuple(seg[-1] if est is None else est),
                                 Origin.DEPLOYED, placement_cov=cov)
                )
                self.deployed += 1
                self.state, _ = step_fsm(self.state, Event.ANCHOR_PLACED)
            else:
                self.state, _ = step_fsm(self.state, Event.RESUME_REACHED)
                self.tick(seg[-1], event="resume_reached", phase="maneuver")

    def _block_needed(self, true_pos) -> bool:
        q = self.prev_est
        g, idx = best_pdop_many(q, self.anchors.est_positions(), self.params.rho_max)
        if not g[0] < self.params.p_max:
            return True
        true_all = self.anchors.true_positions()
        return any(math.dist(true_all[k], true_pos) >= self.params.rho_max for k in idx[0])

    def finish(self):
        action = self.sc.policy.terminal_action
        self.state, _ = step_fsm(self.state, Event.MISSION_END, terminal=action)
        self._mark(action.value)
        if action is TerminalAction.RETURN_TO_START:
            back = self.path.viapoints[::-1]
            for a, b in zip(back[:-1], back[1:]):
                for p in discretize(a, b, self.params.step)[1:]:
                    self.tick(p, phase="terminal")
        elif action is TerminalAction.BECOME_ANCHOR:
            last = self.trace[-1]
            est = last.est_pos or last.true_pos
            self.anchors.add(AnchorRecord(self.anchors.next_id(), last.true_pos, est, Origin.DEPLOYED))

    def metrics(self, aborted=False, reason=None) -> MissionMetrics:
        pd = [r.pdop for r in self.trace]
        err = [math.dist(a.true_pos, a.est_pos) for a in self.anchors if a.origin is Origin.DEPLOYED]
        return MissionMetrics(
            m=self.deployed,
            d_t=traveled_distance(self.trace),
            c_t=self.c_t,
            max_pdop=max(pd),
            violations=int(sum(not (g <= self.params.p_max) for g in pd)),
            total_anchors=len(self.sc.initial_anchors) + self.deployed,
            d_terminal=traveled_distance(self.trace, include_terminal=True) - traveled_distance(self.trace),
            deployments=self.deployments,
            anchor_error_mean=float(np.mean(err)) if err else 0.0,
            anchor_error_max=max(err, default=0.0),
            aborted=aborted,
            abort_reason=reason,
            pdop_series=pd,
        )


def run_mission(scenario: ExplorationScenario) -> MissionResult:
    """Fly the scenario with GANP deciding when and where to deploy."""
    sim = _Simulator(scenario)
    path, params = sim.path, sim.params
    sim.tick(path[0], event="start")
    pending: PlacementPlan | None = None
    last = len(path) - 1
    try:
        for i in range(len(path)):
            sim.station = float(path.stations[i])
            if pending is None:
                t0 = time.perf_counter()
                need, _ = needs_deployment(sim.anchors, path, i, params) if i < last else (False, None)
                if need:
                    pending = optimize(sim.anchors, path, i, params, rng=sim.ga_rng)
                    sim.plans.append(pending)
                sim.c_t += time.perf_counter() - t0
            if pending is not None and pending.resume_index == i:
                sim.execute_plan(pending, i)
                pending = None
            if i == last:
                break
            for p in discretize(path[i], path[i + 1], params.step)[1:]:
                sim.station = float(path.stations[i]) + math.dist(path[i], p)
                sim.tick(p)
    except InfeasibleRegionError as exc:
        log.warning("mission aborted: %s", exc)
        return MissionResult(sim.trace, sim.metrics(True, str(exc)), sim.anchors, sim.plans)
    sim.finish()
    return MissionResult(sim.trace, sim.metrics(), sim.anchors, sim.plans)


def run_trivial_baseline(scenario: ExplorationScenario) -> MissionResult:
    """Fly the scenario with the block rule: whenever the PDoP reaches the
    threshold or a used anchor reaches maximum range, drop four anchors in the
    initial pattern around the robot."""
    sim = _Simulator(scenario)
    path, params = sim.path, sim.params
    sim.tick(path[0], event="start")
    for i in range(len(path) - 1):
        for p in discretize(path[i], path[i + 1], params.step)[1:]:
            sim.station = float(path.stations[i]) + math.dist(path[i], p)
            sim.tick(p)
            if sim._block_needed(p):
                sim.deploy_block(p)
    sim.finish()
    return MissionResult(sim.trace, sim.metrics(), sim.anchors, [])
