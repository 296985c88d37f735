"""
Scene invariant checks.

``validate_scene`` returns every violation it finds instead of stopping at
the first one, so the generator, the JSON loader and the tests can all
report the full list. Each violation carries a dotted field path such as
``tracks[2].states[14]``.
"""

import math
from dataclasses import dataclass

import numpy as np

from src.config import settings
from src.models.models import AGENT_TYPES, POLYLINE_TYPES, SCENARIO_FAMILIES, SIGNAL_STATES, Scene

# Rounding of generated values to 1e-6 may push a step marginally past the bound.
_KINEMATIC_SLACK_M: float = 1e-5


@dataclass(frozen=True)
class SceneViolation:
    field_path: str
    message: str

    def __str__(self) -> str:
        return f"{self.field_path}: {self.message}"


def validate_scene(
    scene: Scene,
    v_max: float = settings.V_MAX_MPS,
    dt: float = settings.DT_SECONDS,
) -> list[SceneViolation]:
    """Check every Scene, AgentTrack, MapPolyline and TrafficSignal invariant.

    Args:
        scene: Scene to check.
        v_max: Speed bound for consecutive valid states, m/s.
        dt: Step duration, seconds.

    Returns:
        Violations in field order; empty when the scene is valid.
    """
    violations: list[SceneViolation] = []

    def report(path: str, message: str) -> None:
        violations.append(SceneViolation(path, message))

    if scene.t_obs < 1:
        report("t_obs", f"must be at least 1, got {scene.t_obs}")
    if scene.t_fut < 0:
        report("t_fut", f"must be nonnegative, got {scene.t_fut}")
    if scene.family not in SCENARIO_FAMILIES:
        report("family", f"unknown scenario family {scene.family!r}")

    expected_len = scene.t_obs + scene.t_fut
    max_step = v_max * dt + _KINEMATIC_SLACK_M
    seen_ids: set[str] = set()
    for i, track in enumerate(scene.tracks):
        path = f"tracks[{i}]"
        if track.agent_id in seen_ids:
            report(f"{path}.agent_id", f"duplicate agent id {track.agent_id!r}")
        seen_ids.add(track.agent_id)
        if track.agent_type not in AGENT_TYPES:
            report(f"{path}.agent_type", f"unknown agent type {track.agent_type!r}")
        if len(track.states) != expected_len:
            report(
                f"{path}.states",
                f"track {track.agent_id} has {len(track.states)} states, expected {expected_len}",
            )
        previous = None
        for j, state in enumerate(track.states):
            if not state.valid:
                previous = None
                continue
            values = (state.x, state.y, state.heading, state.vx, state.vy)
            if not all(math.isfinite(v) for v in values):
                report(f"{path}.states[{j}]", "valid state has non-finite values")
                previous = None
                continue
            if not -math.pi < state.heading <= math.pi:
                report(f"{path}.states[{j}].heading", f"heading {state.heading} outside (-pi, pi]")
            if previous is not None:
                step = math.hypot(state.x - previous.x, state.y - previous.y)
                if step > max_step:
                    report(f"{path}.states[{j}]", f"moved {step:.3f} m in one step (limit {v_max * dt:.3f} m)")
            previous = state

    for i, polyline in enumerate(scene.map_polylines):
        path = f"map[{i}]"
        if polyline.polyline_type not in POLYLINE_TYPES:
            report(f"{path}.polyline_type", f"unknown polyline type {polyline.polyline_type!r}")
        points = np.array(polyline.points, dtype=np.float64).reshape(-1, 2)
        if len(points) < 2:
            report(f"{path}.points", "a polyline needs at least 2 points")
            continue
        if not np.all(np.isfinite(points)):
            report(f"{path}.points", "non-finite coordinates")
            continue
        repeated = np.flatnonzero(np.all(points[1:] == points[:-1], axis=1))
        if repeated.size:
            report(f"{path}.points[{int(repeated[0]) + 1}]", "duplicated consecutive point")

    signal_ids: set[str] = set()
    for i, signal in enumerate(scene.signals):
        path = f"signals[{i}]"
        if signal.signal_id in signal_ids:
            report(f"{path}.signal_id", f"duplicate signal id {signal.signal_id!r}")
        signal_ids.add(signal.signal_id)
        if len(signal.state_per_step) != scene.t_obs:
            report(
                f"{path}.state_per_step",
                f"signal {signal.signal_id} has {len(signal.state_per_step)} states, expected {scene.t_obs}",
            )
        unknown = [s for s in signal.state_per_step if s not in SIGNAL_STATES]
        if unknown:
            report(f"{path}.state_per_step", f"unknown signal state {unknown[0]!r}")
        if not all(math.isfinite(v) for v in signal.position):
            report(f"{path}.position", "non-finite coordinates")

    if not scene.predict_ids:
        report("predict_ids", "at least one agent must be predicted")
    if len(set(scene.predict_ids)) != len(scene.predict_ids):
        report("predict_ids", "duplicate predicted agent id")
    for k, agent_id in enumerate(scene.predict_ids):
        if agent_id not in seen_ids:
            report(f"predict_ids[{k}]", f"unknown agent id {agent_id!r}")
            continue
        track = scene.track(agent_id)
        last = scene.t_obs - 1
        if len(track.states) > last >= 0 and not track.states[last].valid:
            report(f"predict_ids[{k}]", f"predicted agent {agent_id} is invalid at the last observed step")
    return violations
