"""
Hand-built predictors with known input dependence.

They stand in for a trained model when checking the explanation pipeline:
``ConstantPredictor`` ignores every input, so all of its attributions must be
zero; ``MapFollowingOracle`` only becomes accurate when the map is present,
so the map must come out on top for lane-following scenes.
"""

import math

import numpy as np

from src.config import settings
from src.models.models import AgentTrack, PredictionSet, Scene
from src.scene.generator import START_ACCEL_MPS2, GeneratorConfig, LanePath

STATIONARY_SPEED_MPS: float = 0.5
_HOLDING_STATES: frozenset[str] = frozenset({"red", "yellow"})


class ConstantPredictor:
    """Predicts the origin for every agent, step and mode."""

    def __init__(self, num_modes: int = 1) -> None:
        self.num_modes = num_modes

    def predict(self, scene: Scene, seed: int | None = None) -> PredictionSet:
        agent_ids = scene.predicted_agent_ids()
        return PredictionSet(
            scene_id=scene.scene_id,
            agent_ids=agent_ids,
            trajectories=np.zeros((self.num_modes, len(agent_ids), scene.t_fut, 2)),
            confidences=np.full(self.num_modes, 1.0 / self.num_modes),
        )


class MapFollowingOracle:
    """Constant-speed lane follower.

    Speed comes from the observed positions. A stationary agent departs
    (accelerating from rest) when the nearest signal is green, holds on red
    or yellow, and is assumed to travel at the nominal speed when there is no
    signal evidence. With a map the agent advances along the nearest lane
    centre; without one it extrapolates in a straight line.
    """

    def __init__(
        self,
        nominal_speed: float = GeneratorConfig().nominal_speed,
        dt: float = settings.DT_SECONDS,
        num_modes: int = 1,
        start_accel: float = START_ACCEL_MPS2,
    ) -> None:
        self.nominal_speed = nominal_speed
        self.dt = dt
        self.num_modes = num_modes
        self.start_accel = start_accel

    def predict(self, scene: Scene, seed: int | None = None) -> PredictionSet:
        lanes = [LanePath(p.as_array()) for p in scene.map_polylines if p.polyline_type == "lane_center"]
        futures = np.stack([self._future(scene, track, lanes) for track in scene.predicted_tracks()])
        return PredictionSet(
            scene_id=scene.scene_id,
            agent_ids=scene.predicted_agent_ids(),
            trajectories=np.repeat(futures[None], self.num_modes, axis=0),
            confidences=np.full(self.num_modes, 1.0 / self.num_modes),
        )

    def _future(self, scene: Scene, track: AgentTrack, lanes: list[LanePath]) -> np.ndarray:
        observed = track.states[: scene.t_obs]
        valid = [i for i, s in enumerate(observed) if s.valid]
        last = observed[valid[-1]]
        position = np.array([last.x, last.y])
        direction = np.array([math.cos(last.heading), math.sin(last.heading)])

        elapsed = (valid[-1] - valid[0]) * self.dt
        speed = 0.0
        if elapsed > 0:
            first = observed[valid[0]]
            displacement = position - np.array([first.x, first.y])
            speed = float(np.linalg.norm(displacement)) / elapsed
            if speed >= STATIONARY_SPEED_MPS:
                direction = displacement / np.linalg.norm(displacement)

        times = self.dt * np.arange(1, scene.t_fut + 1)
        if speed >= STATIONARY_SPEED_MPS:
            travelled = speed * times
        else:
            travelled = self._departure(scene, position, times)

        if lanes:
            projections = [lane.distance_to(position) for lane in lanes]
            nearest = int(np.argmin([distance for distance, _ in projections]))
            xy, _ = lanes[nearest].locate(projections[nearest][1] + travelled, extend=True)
            return xy
        return position + travelled[:, None] * direction

    def _departure(self, scene: Scene, position: np.ndarray, times: np.ndarray) -> np.ndarray:
        """Distance covered by an agent at rest, given the signal it faces."""
        if not scene.signals:
            return self.nominal_speed * times
        nearest = min(scene.signals, key=lambda s: math.dist(s.position, position))
        state = nearest.state_per_step[-1]
        if state in _HOLDING_STATES:
            return np.zeros_like(times)
        if state != "green":
            return self.nominal_speed * times
        t_cruise = self.nominal_speed / self.start_accel
        ramp = 0.5 * self.start_accel * np.minimum(times, t_cruise) ** 2
        return ramp + self.nominal_speed * np.maximum(times - t_cruise, 0.0)
