"""Experiment orchestration: missions, baselines and parameter studies."""

from .mission import MissionMetrics, MissionResult, run_mission, run_trivial_baseline

__all__ = ["MissionMetrics", "MissionResult", "run_mission", "run_trivial_baseline"]
