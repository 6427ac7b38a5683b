"""Scenario documents: JSON schema, loading and round-trip serialisation.

Lengths are metres, thresholds dimensionless.  ``path_csv`` is resolved
relative to the scenario file.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .errors import ScenarioError
from .ganp import GaParams, GanpParams
from .geometry import ExplorationPath
from .maneuver import TerminalAction
from .ranging import RangingNoiseModel

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_XY = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["path_csv", "initial_anchors", "ganp", "noise", "policy", "seed"],
    "properties": {
        "path_csv": {"type": "string", "minLength": 1},
        "initial_anchors": {"type": "array", "items": _XY, "minItems": 4, "maxItems": 4},
        "ganp": {
            "type": "object",
            "additionalProperties": False,
            "required": ["w", "r", "n", "p_max", "rho_max"],
            "properties": {
                "w": _POS,
                "r": _POS,
                "n": {"type": "integer", "minimum": 1},
                "p_max": _POS,
                "rho_max": _POS,
                "p_work": _POS,
                "step": _POS,
                "ga": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "population": {"type": "integer", "minimum": 2},
                        "generations": {"type": "integer", "minimum": 1},
                        "crossover_rate": {"type": "number", "minimum": 0, "maximum": 1},
                        "mutation_rate": {"type": "number", "minimum": 0, "maximum": 1},
                        "elite_count": {"type": "integer", "minimum": 0},
                        "seed": {"type": "integer", "minimum": 0},
                        "tournament_size": {"type": "integer", "minimum": 1},
                        "stall_generations": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "required": ["sigma_rho"],
            "properties": {
                "sigma_rho": _POS,
                "bias_intercept": _NUM,
                "bias_slope": _NUM,
                "sigma_table": {"type": "array", "items": _XY, "minItems": 1},
            },
        },
        "policy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "terminal_action": {"enum": [a.value for a in TerminalAction]},
                "bias_correction": {"type": "boolean"},
                "delta_mode": {"enum": ["offset", "noise"]},
                "observation_spacing": _POS,
                "observation_source": {"enum": ["estimated", "true"]},
                "max_correction": _POS,
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "trials": {"type": "integer", "minimum": 1},
        "replicates": {"type": "integer", "minimum": 1},
        "viapoint_spacing": _POS,
        "bias_study": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "initial": {"type": "array", "items": _XY, "minItems": 3},
                "deployed": {"type": "array", "items": _XY, "minItems": 1},
                "delta": {"type": "array", "items": _XY, "minItems": 1},
                "query": _XY,
                "observations": {"type": "array", "items": _XY, "minItems": 3},
                "placement_sigma": _POS,
            },
        },
    },
}


@dataclass(frozen=True)
class NoiseConfig:
    sigma_rho: float = 0.05
    bias_intercept: float = 0.0
    bias_slope: float = 0.0
    sigma_table: tuple[tuple[float, float], ...] | None = None

    def model(self, seed=0) -> RangingNoiseModel:
        return RangingNoiseModel(self.sigma_rho, self.bias_intercept, self.bias_slope, seed, self.sigma_table)


@dataclass(frozen=True)
class PolicyConfig:
    terminal_action: TerminalAction = TerminalAction.RETURN_TO_START
    bias_correction: bool = True
    delta_mode: str = "offset"
    observation_spacing: float = 5.0
    # robot positions used when regressing the offset: its own estimates
    # (what a real robot has) or ground truth (to measure the gap)
    observation_source: str = "estimated"
    # offsets estimated larger than this are treated as failed fits
    max_correction: float = 1.0


@dataclass(frozen=True)
class BiasStudyConfig:
    """Fixed geometry for the deployment-offset Monte Carlo study.

    The robot localises from ``initial`` while observing the deployed anchors
    from ``observations``; the position at ``query`` is then solved with the
    deployed anchors plus the nearest initial ones.
    """

    initial: tuple[tuple[float, float], ...] = ((0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0))
    deployed: tuple[tuple[float, float], ...] = ((14.0, -3.0), (14.0, 13.0))
    # about 10 cm each, along the line of sight to the query point
    delta: tuple[tuple[float, float], ...] = ((-0.035, 0.094), (-0.035, -0.094))
    query: tuple[float, float] = (11.0, 5.0)
    observations: tuple[tuple[float, float], ...] = ((8.0, -1.0), (10.0, 5.0), (8.0, 11.0))
    placement_sigma: float | None = None


@dataclass(frozen=True)
class ExplorationScenario:
    path_csv: str
    initial_anchors: tuple[tuple[float, float], ...]
    ganp: GanpParams
    noise: NoiseConfig = NoiseConfig()
    policy: PolicyConfig = PolicyConfig()
    seed: int = 0
    trials: int = 10_000
    replicates: int = 5
    viapoint_spacing: float = 1.0
    bias_study: BiasStudyConfig = BiasStudyConfig()
    base_dir: Path = field(default=Path("."), compare=False)

    # -- construction ------------------------------------------------------
    @classmethod
    def from_dict(cls, doc: dict, base_dir: str | Path = ".") -> "ExplorationScenario":
        validate(doc)
        g = doc["ganp"]
        try:
            ganp = GanpParams(
                w=g["w"],
                r_horizon=g["r"],
                n=g["n"],
                p_max=g["p_max"],
                rho_max=g["rho_max"],
                p_work=g.get("p_work"),
                step=g.get("step", GanpParams.__dataclass_fields__["step"].default),
                ga=GaParams(**g.get("ga", {})),
            )
        except ValueError as exc:
            raise ScenarioError(f"ganp: {exc}") from exc
        nz = dict(doc["noise"])
        if "sigma_table" in nz:
            nz["sigma_table"] = tuple(tuple(p) for p in nz["sigma_table"])
        pol = dict(doc["policy"])
        if "terminal_action" in pol:
            pol["terminal_action"] = TerminalAction(pol["terminal_action"])
        bs = {k: _tuplify(v) for k, v in doc.get("bias_study", {}).items()}
        try:
            return cls(
                path_csv=doc["path_csv"],
                initial_anchors=_tuplify(doc["initial_anchors"]),
                ganp=ganp,
                noise=NoiseConfig(**nz),
                policy=PolicyConfig(**pol),
                seed=doc["seed"],
                trials=doc.get("trials", 10_000),
                replicates=doc.get("replicates", 5),
                viapoint_spacing=doc.get("viapoint_spacing", 1.0),
                bias_study=BiasStudyConfig(**bs),
                base_dir=Path(base_dir),
            )
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExplorationScenario":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        return cls.from_dict(doc, path.parent)

    def to_dict(self) -> dict:
        g = self.ganp
        ganp = {"w": g.w, "r": g.r_horizon, "n": g.n, "p_max": g.p_max, "rho_max": g.rho_max,
                "p_work": g.p_work, "step": g.step, "ga": asdict(g.ga)}
        noise = {k: v for k, v in asdict(self.noise).items() if v is not None}
        if "sigma_table" in noise:
            noise["sigma_table"] = [list(p) for p in noise["sigma_table"]]
        pol = asdict(self.policy)
        pol["terminal_action"] = self.policy.terminal_action.value
        bs = {k: _listify(v) for k, v in asdict(self.bias_study).items() if v is not None}
        return {
            "path_csv": self.path_csv,
            "initial_anchors": _listify(self.initial_anchors),
            "ganp": ganp,
            "noise": noise,
            "policy": pol,
            "seed": self.seed,
            "trials": self.trials,
            "replicates": self.replicates,
            "viapoint_spacing": self.viapoint_spacing,
            "bias_study": bs,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    # -- convenience ---------------------------------------------------------
    def with_params(self, **changes) -> "ExplorationScenario":
        """Copy with GANP fields (``w``, ``r_horizon``, ``n``, ``ga``...) replaced."""
        return replace(self, ganp=replace(self.ganp, **changes))

    def with_seed(self, seed: int) -> "ExplorationScenario":
        return replace(self, seed=int(seed))

    def load_path(self) -> ExplorationPath:
        p = Path(self.path_csv)
        if not p.is_absolute():
            p = self.base_dir / p
        if not p.exists():
            raise ScenarioError(f"path_csv: file not found: {p}")
        return ExplorationPath.from_csv(p).resample(self.viapoint_spacing)

    @property
    def initial_positions(self) -> np.ndarray:
        return np.asarray(self.initial_anchors, dtype=float)


def validate(doc: dict) -> None:
    """Raise :class:`ScenarioError` naming the offending field."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{where}: {e.message}")
        raise ScenarioError("; ".join(lines))


def _tuplify(v):
    if isinstance(v, (list, tuple)):
        return tuple(_tuplify(x) for x in v)
    return v


def _listify(v):
    if isinstance(v, (list, tuple)):
        return [_listify(x) for x in v]
    return v
