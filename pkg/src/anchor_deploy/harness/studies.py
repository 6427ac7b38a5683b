"""Experiment drivers: Taguchi L9 parameter sweep and the deployment-offset
Monte Carlo study."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..bias import SAMPLES_PER_POSITION, BiasObservation, estimate_bias_nonlinear
from ..ganp import GaParams
from ..multilateration import WlsProblem, solve_wls, solve_wls_batch
from ..ranging import propagated_sigma_eta
from ..scenario import ExplorationScenario
from .mission import run_mission

WORKERS_ENV = "ANCHOR_DEPLOY_WORKERS"

# (w, r, n) in the order of the published L9 table
L9_ROWS: tuple[tuple[float, float, int], ...] = (
    (10, 10, 2),
    (10, 20, 4),
    (10, 30, 3),
    (30, 10, 4),
    (30, 20, 3),
    (30, 30, 2),
    (50, 10, 3),
    (50, 20, 2),
    (50, 30, 4),
)

# published totals per row: anchors (initial four included), metres, seconds
REFERENCE_TABLE: tuple[tuple[int, float, float], ...] = (
    (12, 138, 1118),
    (12, 140, 1007),
    (11, 145, 450),
    (10, 166, 307),
    (9, 154, 362),
    (9, 146, 895),
    (9, 170, 680),
    (9, 180, 650),
    (9, 176, 526),
)

SWEEP_GA = GaParams(population=30, generations=40, stall_generations=10)

MIN_TRIALS = 10_000
FULL_SCALE_TRIALS = 1_000_000


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _fmt(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else "inf"


# --- Taguchi sweep -------------------------------------------------------------


@dataclass
class SweepRow:
    w: float
    r: float
    n: int
    m_total: list[int]
    m_new: list[int]
    d_t: list[float]
    c_t: list[float]
    aborted: int = 0

    def mean(self, key: str) -> float:
        return float(np.mean(getattr(self, key)))

    def std(self, key: str) -> float:
        return float(np.std(getattr(self, key)))


@dataclass
class TaguchiResult:
    rows: list[SweepRow]
    best: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    average: tuple[float, float, int] = (0.0, 0.0, 0)

    def level_means(self, metric: str, factor: str) -> dict[float, float]:
        """Main effect of ``factor`` on the mean of ``metric``."""
        out: dict[float, list[float]] = {}
        for row in self.rows:
            out.setdefault(getattr(row, factor), []).append(row.mean(metric))
        return {lvl: float(np.mean(v)) for lvl, v in sorted(out.items())}

    def write(self, out_dir: str | Path, wall_clock: bool = True) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "table1.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            head = ["w", "r", "n", "m", "m_std", "m_new", "d_t", "d_t_std"]
            wr.writerow(head + (["c_t", "c_t_std"] if wall_clock else []) + ["aborted"])
            for row in self.rows:
                vals = [_fmt(row.w), _fmt(row.r), row.n, _fmt(row.mean("m_total")), _fmt(row.std("m_total")),
                        _fmt(row.mean("m_new")), _fmt(row.mean("d_t")), _fmt(row.std("d_t"))]
                if wall_clock:
                    vals += [_fmt(row.mean("c_t")), _fmt(row.std("c_t"))]
                wr.writerow(vals + [row.aborted])
        with open(out / "table2.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["index", "w", "r", "n"])
            for metric, (w, r, n) in self.best.items():
                if metric == "c_t" and not wall_clock:
                    continue
                wr.writerow([metric, _fmt(w), _fmt(r), int(n)])
            if wall_clock:
                w, r, n = self.average
                wr.writerow(["average", _fmt(w), _fmt(r), n])


def _sweep_cell(args):
    scenario, seed = args
    res = run_mission(scenario.with_seed(seed))
    mt = res.metrics
    return mt.total_anchors, mt.m, mt.d_t, mt.c_t, mt.aborted


def taguchi_sweep(
    base: ExplorationScenario,
    rows=L9_ROWS,
    replicates: int | None = None,
    ga: GaParams | None = SWEEP_GA,
) -> TaguchiResult:
    """Run every L9 combination over ``replicates`` seeds and pick, for each
    performance index, the level of each factor with the best main effect.

    Seeds are ``base.seed, base.seed + 1, ...`` for every row, so rows differ
    only in their parameters.
    """
    reps = base.replicates if replicates is None else replicates
    jobs = []
    for w, r, n in rows:
        sc = base.with_params(w=float(w), r_horizon=float(r), n=int(n))
        if ga is not None:
            sc = sc.with_params(ga=replace(ga, seed=base.ganp.ga.seed))
        jobs += [(sc, base.seed + k) for k in range(reps)]
    workers = _workers()
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            cells = list(ex.map(_sweep_cell, jobs))
    else:
        cells = [_sweep_cell(j) for j in jobs]
    out = []
    for k, (w, r, n) in enumerate(rows):
        chunk = cells[k * reps : (k + 1) * reps]
        tot, new, d, c, ab = zip(*chunk)
        out.append(SweepRow(float(w), float(r), int(n), list(tot), list(new), list(d), list(c), int(sum(ab))))
    result = TaguchiResult(out)
    for metric, key in (("m", "m_total"), ("d_t", "d_t"), ("c_t", "c_t")):
        result.best[metric] = tuple(
            min(lv := result.level_means(key, f), key=lambda x: (lv[x], x)) for f in ("w", "r", "n")
        )
    picks = np.array(list(result.best.values()), dtype=float)
    result.average = (float(picks[:, 0].mean()), float(picks[:, 1].mean()), int(round(picks[:, 2].mean())))
    return result


# --- deployment-offset Monte Carlo ------------------------------------------------


@dataclass
class BiasStudyResult:
    trials: int
    summary: dict
    estimates: dict[str, np.ndarray]
    truth: np.ndarray

    def histogram(self, bins: int = 80):
        """Shared-bin histograms of the x estimate for both modes."""
        allx = np.concatenate([e[:, 0] for e in self.estimates.values()])
        edges = np.histogram_bin_edges(allx, bins=bins)
        counts = {k: np.histogram(e[:, 0], bins=edges)[0] for k, e in self.estimates.items()}
        return edges, counts

    def write(self, out_dir: str | Path, bins: int = 80) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        edges, counts = self.histogram(bins)
        with open(out / "histogram_x.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            modes = list(counts)
            wr.writerow(["bin_left", "bin_right"] + modes)
            for k in range(len(edges) - 1):
                wr.writerow([_fmt(edges[k]), _fmt(edges[k + 1])] + [int(counts[m][k]) for m in modes])


def _stats(est: np.ndarray, truth: np.ndarray) -> dict:
    err = est - truth
    bias = err.mean(axis=0)
    std = err.std(axis=0, ddof=1)
    return {
        "bias_x": float(bias[0]),
        "bias_y": float(bias[1]),
        "bias_norm": float(np.hypot(*bias)),
        "std_x": float(std[0]),
        "std_y": float(std[1]),
        "mean_x": float(est[:, 0].mean()),
        "mean_y": float(est[:, 1].mean()),
    }


def montecarlo_bias_study(
    scenario: ExplorationScenario,
    trials: int | None = None,
    full_scale: bool = False,
    delta=None,
) -> BiasStudyResult:
    """Position bias at a fixed query point when deployed anchors carry an
    offset, treated either as extra range noise or estimated and removed.

    * ``noise``: the stored anchor estimates are used as they are and the
      offset is absorbed into an inflated range variance.
    * ``offset``: each offset is estimated from three observation positions
      (ten averaged ranges each), the anchor estimate corrected, and the
      position solved with unit-inflation weights.
    """
    trials = FULL_SCALE_TRIALS if full_scale else (scenario.trials if trials is None else int(trials))
    if trials < MIN_TRIALS:
        raise ValueError(f"trials must be at least {MIN_TRIALS}")
    cfg = scenario.bias_study
    initial = np.asarray(cfg.initial, dtype=float)
    deployed = np.asarray(cfg.deployed, dtype=float)
    deltas = np.asarray(cfg.delta if delta is None else delta, dtype=float).reshape(-1, 2)
    if len(deltas) != len(deployed):
        raise ValueError("one offset per deployed anchor")
    a_hat = deployed + deltas  # true anchors sit at the deployed positions
    query = np.asarray(cfg.query, dtype=float)
    obs_true = np.asarray(cfg.observations, dtype=float)

    # the query solve uses every deployed anchor plus the nearest initial ones
    k_init = max(0, 4 - len(deployed))
    near = np.argsort(np.hypot(*(initial - query).T), kind="stable")[:k_init]
    q_true = np.vstack([deployed, initial[near]])
    order = np.argsort(np.hypot(*(np.vstack([a_hat, initial[near]]) - query).T), kind="stable")
    q_true = q_true[order]
    dep_idx = np.where(order < len(deployed), order, -1)

    model = scenario.noise.model()
    ss = np.random.SeedSequence(scenario.seed)
    noise_ss, offset_ss = ss.spawn(2)
    rho_q = np.hypot(*(q_true - query).T)
    sig2 = model.sigma_at(rho_q) ** 2

    # placement covariance of the robot when it dropped each deployed anchor
    if cfg.placement_sigma is not None:
        xis = [np.eye(2) * cfg.placement_sigma**2 for _ in deployed]
    else:
        xis = []
        for p in deployed:
            rho = np.hypot(*(initial - p).T)
            xis.append(solve_wls(WlsProblem(initial, rho, model.sigma_at(rho) ** 2)).cov)

    def measure(rng, rho, shape):
        meas = rho + model.bias_at(rho) + model.sigma_at(rho) * rng.standard_normal(shape)
        return model.compensate(meas)

    # -- offset treated as noise
    rng = np.random.default_rng(noise_ss)
    used = np.array([a_hat[d] if d >= 0 else q_true[k] for k, d in enumerate(dep_idx)])
    var = sig2.copy()
    for k, d in enumerate(dep_idx):
        if d >= 0:
            F = (query - used[k]) / np.hypot(*(query - used[k]))
            var[k] = propagated_sigma_eta(math.sqrt(sig2[k]), F, xis[d])
    meas = measure(rng, rho_q, (trials, len(q_true)))
    est_noise = solve_wls_batch(used, meas, var)

    # -- offset estimated and removed
    rng = np.random.default_rng(offset_ss)
    pol = scenario.policy
    rho_obs_init = np.hypot(*(initial[None] - obs_true[:, None]).T).T  # (k, n_init)
    s_hat = np.empty((trials, len(obs_true), 2))
    for j in range(len(obs_true)):
        if pol.observation_source == "true":
            s_hat[:, j] = obs_true[j]
        else:
            m = measure(rng, rho_obs_init[j], (trials, len(initial)))
            s_hat[:, j] = solve_wls_batch(initial, m, model.sigma_at(rho_obs_init[j]) ** 2)
    rho_obs_dep = np.hypot(*(deployed[None] - obs_true[:, None]).T).T  # (k, n_dep)
    raw = measure(rng, rho_obs_dep[None, ..., None], (trials, len(obs_true), len(deployed), SAMPLES_PER_POSITION))
    avg = raw.mean(axis=-1)
    meas = measure(rng, rho_q, (trials, len(q_true)))
    est_offset = np.empty((trials, 2))
    delta_hat = np.empty((trials, len(deployed), 2))
    for t in range(trials):
        corrected = used.copy()
        for d in range(len(deployed)):
            obs = BiasObservation(s_hat[t], avg[t, :, d])
            delta_hat[t, d] = estimate_bias_nonlinear(obs, a_hat[d]).delta_hat
        for k, d in enumerate(dep_idx):
            if d >= 0:
                corrected[k] = a_hat[d] - delta_hat[t, d]
        est_offset[t] = solve_wls_batch(corrected, meas[t : t + 1], sig2)[0]

    summary = {
        "trials": trials,
        "seed": scenario.seed,
        "query": query.tolist(),
        "delta": deltas.tolist(),
        "noise": _stats(est_noise, query),
        "offset": _stats(est_offset, query),
        "delta_hat_mean": delta_hat.mean(axis=0).tolist(),
        "observation_source": pol.observation_source,
    }
    n_b, o_b = summary["noise"]["bias_norm"], summary["offset"]["bias_norm"]
    summary["separation"] = n_b / o_b if o_b > 0 else math.inf
    return BiasStudyResult(trials, summary, {"noise": est_noise, "offset": est_offset}, query)
