"""
Numeric scene featurisation.

Turns a ``Scene`` into the constant arrays the networks consume. Coordinates
stay in the global frame and are divided by ``POSITION_SCALE_M``; speeds by
``SPEED_SCALE_MPS``. Row order of every agent array is the scene's track
order.
"""

from dataclasses import dataclass

import numpy as np

from src.config import settings
from src.models.models import AGENT_TYPES, POLYLINE_TYPES, SIGNAL_STATES, Scene

HISTORY_FEATURES: int = 6
CONDITION_FEATURES: int = HISTORY_FEATURES + 1
MAP_FEATURES: int = 4 + len(POLYLINE_TYPES)
SIGNAL_FEATURES: int = len(SIGNAL_STATES) + 2


@dataclass(frozen=True)
class SceneFeatures:
    """Arrays for one scene.

    Attributes:
        history: (N, T_obs, 6) ``[x, y, cos h, sin h, vx, vy]`` scaled, zero where invalid.
        history_valid: (N, T_obs) validity of observed steps.
        agent_types: (N,) index into ``AGENT_TYPES``.
        predicted: (A,) row indices of predicted agents.
        neighbors: (N - A,) row indices of the other agents.
        last_position: (N, 2) last valid observed position in metres.
        map_points: (M, P, 7) resampled polylines ``[x, y, tangent cos, tangent sin, one-hot type]``.
        signals: (S, T_obs, 6) ``[one-hot state, x, y]``.
        future: (N, T_fut, 2) future positions in metres.
        future_valid: (N, T_fut).
    """

    scene_id: str
    agent_ids: tuple[str, ...]
    history: np.ndarray
    history_valid: np.ndarray
    agent_types: np.ndarray
    predicted: np.ndarray
    neighbors: np.ndarray
    last_position: np.ndarray
    map_points: np.ndarray
    signals: np.ndarray
    future: np.ndarray
    future_valid: np.ndarray

    @property
    def num_agents(self) -> int:
        return len(self.agent_ids)

    @property
    def t_obs(self) -> int:
        return self.history.shape[1]

    @property
    def t_fut(self) -> int:
        return self.future.shape[1]

    def condition(self) -> np.ndarray:
        """(N, T_obs * 7) flattened history plus validity: the diffusion condition."""
        stacked = np.concatenate([self.history, self.history_valid[..., None].astype(np.float64)], axis=-1)
        return stacked.reshape(self.num_agents, -1)

    def future_offsets(self) -> np.ndarray:
        """(N, T_fut * 2) scaled future displacement from the last observed position."""
        offsets = (self.future - self.last_position[:, None, :]) / settings.POSITION_SCALE_M
        offsets = offsets * self.future_valid[..., None]
        return offsets.reshape(self.num_agents, -1)


def resample_polyline(points: np.ndarray, count: int) -> np.ndarray:
    """``count`` points uniformly spaced by arc length, with unit tangents.

    Returns:
        (count, 4) array ``[x, y, tangent cos, tangent sin]``.
    """
    steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(steps)])
    targets = np.linspace(0.0, arc[-1], count)
    xy = np.stack([np.interp(targets, arc, points[:, 0]), np.interp(targets, arc, points[:, 1])], axis=-1)
    segment = np.clip(np.searchsorted(arc, targets, side="right") - 1, 0, len(points) - 2)
    delta = points[segment + 1] - points[segment]
    tangent = delta / np.maximum(np.linalg.norm(delta, axis=1, keepdims=True), 1e-12)
    return np.concatenate([xy, tangent], axis=-1)


def build_features(scene: Scene, points_per_polyline: int = settings.POINTS_PER_POLYLINE) -> SceneFeatures:
    """Featurise ``scene`` for the model."""
    t_obs, t_fut = scene.t_obs, scene.t_fut
    n = len(scene.tracks)
    scale, speed_scale = settings.POSITION_SCALE_M, settings.SPEED_SCALE_MPS

    history = np.zeros((n, t_obs, HISTORY_FEATURES))
    history_valid = np.zeros((n, t_obs), dtype=bool)
    future = np.zeros((n, t_fut, 2))
    future_valid = np.zeros((n, t_fut), dtype=bool)
    last_position = np.zeros((n, 2))
    agent_types = np.zeros(n, dtype=np.intp)

    for row, track in enumerate(scene.tracks):
        agent_types[row] = AGENT_TYPES.index(track.agent_type)
        for step, state in enumerate(track.states[:t_obs]):
            if not state.valid:
                continue
            history_valid[row, step] = True
            history[row, step] = (
                state.x / scale,
                state.y / scale,
                np.cos(state.heading),
                np.sin(state.heading),
                state.vx / speed_scale,
                state.vy / speed_scale,
            )
            last_position[row] = (state.x, state.y)
        for step, state in enumerate(track.states[t_obs : t_obs + t_fut]):
            if state.valid:
                future[row, step] = (state.x, state.y)
                future_valid[row, step] = True

    wanted = set(scene.predict_ids)
    predicted = np.array([i for i, t in enumerate(scene.tracks) if t.agent_id in wanted], dtype=np.intp)
    neighbors = np.array([i for i, t in enumerate(scene.tracks) if t.agent_id not in wanted], dtype=np.intp)

    map_points = np.zeros((len(scene.map_polylines), points_per_polyline, MAP_FEATURES))
    for row, polyline in enumerate(scene.map_polylines):
        sampled = resample_polyline(polyline.as_array(), points_per_polyline)
        map_points[row, :, :2] = sampled[:, :2] / scale
        map_points[row, :, 2:4] = sampled[:, 2:]
        map_points[row, :, 4 + POLYLINE_TYPES.index(polyline.polyline_type)] = 1.0

    signals = np.zeros((len(scene.signals), t_obs, SIGNAL_FEATURES))
    for row, signal in enumerate(scene.signals):
        for step, state in enumerate(signal.state_per_step):
            signals[row, step, SIGNAL_STATES.index(state)] = 1.0
        signals[row, :, len(SIGNAL_STATES)] = signal.position[0] / scale
        signals[row, :, len(SIGNAL_STATES) + 1] = signal.position[1] / scale

    return SceneFeatures(
        scene_id=scene.scene_id,
        agent_ids=scene.track_ids,
        history=history,
        history_valid=history_valid,
        agent_types=agent_types,
        predicted=predicted,
        neighbors=neighbors,
        last_position=last_position,
        map_points=map_points,
        signals=signals,
        future=future,
        future_valid=future_valid,
    )
