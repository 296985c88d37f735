"""
Shared data models for the DMTP trajectory prediction toolkit.

Scene types are immutable value objects; numeric results (latents,
predictions, reports) carry numpy arrays and are treated as read-only once
built.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

AGENT_TYPES: tuple[str, ...] = ("vehicle", "bicycle", "pedestrian")
POLYLINE_TYPES: tuple[str, ...] = ("lane_center", "road_edge", "crosswalk")
SIGNAL_STATES: tuple[str, ...] = ("red", "yellow", "green", "unknown")
SCENARIO_FAMILIES: tuple[str, ...] = ("lane_keep", "stop_start", "turn", "interaction", "irregular")


# =============================================================================
# SCENES
# =============================================================================


@dataclass(frozen=True)
class AgentState:
    """Pose and velocity of one agent at one 10 Hz step."""

    x: float
    y: float
    heading: float
    vx: float
    vy: float
    valid: bool = True

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class AgentTrack:
    """Observed and future states of one agent, ``t_obs + t_fut`` entries long."""

    agent_id: str
    agent_type: str
    states: tuple[AgentState, ...]

    def positions(self) -> np.ndarray:
        """(T, 2) array of x, y per step (zeros where invalid)."""
        return np.array([(s.x, s.y) for s in self.states], dtype=np.float64).reshape(-1, 2)

    def valid_mask(self) -> np.ndarray:
        return np.array([s.valid for s in self.states], dtype=bool)


@dataclass(frozen=True)
class MapPolyline:
    """A lane centre, road edge or crosswalk as an ordered point sequence."""

    polyline_type: str
    points: tuple[tuple[float, float], ...]

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=np.float64).reshape(-1, 2)


@dataclass(frozen=True)
class TrafficSignal:
    """A traffic light with one state per observed step."""

    signal_id: str
    position: tuple[float, float]
    state_per_step: tuple[str, ...]


@dataclass(frozen=True)
class Scene:
    """One traffic scenario: tracks, map, signals and the agents to predict."""

    scene_id: str
    t_obs: int
    t_fut: int
    tracks: tuple[AgentTrack, ...]
    map_polylines: tuple[MapPolyline, ...]
    signals: tuple[TrafficSignal, ...]
    predict_ids: tuple[str, ...]
    family: str

    @property
    def track_ids(self) -> tuple[str, ...]:
        return tuple(track.agent_id for track in self.tracks)

    def track(self, agent_id: str) -> AgentTrack:
        """Return the track with ``agent_id``.

        Raises:
            KeyError: If no track has that id.
        """
        for track in self.tracks:
            if track.agent_id == agent_id:
                return track
        raise KeyError(agent_id)

    def predicted_tracks(self) -> tuple[AgentTrack, ...]:
        """Predicted tracks in scene track order."""
        wanted = set(self.predict_ids)
        return tuple(track for track in self.tracks if track.agent_id in wanted)

    def neighbor_tracks(self) -> tuple[AgentTrack, ...]:
        """Non-predicted tracks in scene track order."""
        wanted = set(self.predict_ids)
        return tuple(track for track in self.tracks if track.agent_id not in wanted)

    def predicted_agent_ids(self) -> tuple[str, ...]:
        """Predicted agent ids in scene track order (the row order of predictions)."""
        return tuple(track.agent_id for track in self.predicted_tracks())


@dataclass(frozen=True)
class GroundTruth:
    """Future positions of the predicted agents of one scene."""

    scene_id: str
    agent_ids: tuple[str, ...]
    positions: np.ndarray  # (A, T_fut, 2)
    valid: np.ndarray  # (A, T_fut)


# =============================================================================
# MODEL OUTPUTS
# =============================================================================


@dataclass(frozen=True)
class ScenarioLatent:
    """Per-agent latent rows for one scene, in scene track order."""

    scene_id: str
    values: np.ndarray  # (N, D_latent)


@dataclass(frozen=True)
class PredictionSet:
    """K joint candidate futures for the predicted agents of one scene."""

    scene_id: str
    agent_ids: tuple[str, ...]
    trajectories: np.ndarray  # (K, A, T_fut, 2)
    confidences: np.ndarray  # (K,)

    @property
    def num_modes(self) -> int:
        return int(self.trajectories.shape[0])


# =============================================================================
# TRAINING
# =============================================================================


@dataclass(frozen=True)
class LossComponents:
    """Scalar values of one loss evaluation, reported separately."""

    total: float
    ddpm: float
    traj: float
    conf: float


@dataclass
class EpochMetrics:
    """One row of the training metric log."""

    epoch: int
    l_ddpm: float
    l_traj: float
    l_conf: float
    min_sade_val: float = float("nan")
    min_sfde_val: float = float("nan")


@dataclass
class Checkpoint:
    """Model parameters plus the configuration and history that produced them."""

    parameters: dict[str, np.ndarray]
    config: dict[str, Any]
    epoch: int = 0
    history: list[EpochMetrics] = field(default_factory=list)


# =============================================================================
# EVALUATION
# =============================================================================


@dataclass(frozen=True)
class SceneMetrics:
    """Per-scene breakdown row of a MetricReport."""

    scene_id: str
    min_sade: float
    min_sfde: float
    missed: bool
    best_mode: int


@dataclass
class MetricReport:
    """Dataset-level joint prediction metrics."""

    min_sade: float
    min_sfde: float
    smr: float
    map_score: float
    miss_threshold: float
    scenes: list[SceneMetrics] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)


# =============================================================================
# EXPLANATION
# =============================================================================


class FeatureGroup(str, Enum):
    """The four players of the attribution game, in canonical order."""

    HISTORY = "history"
    NEIGHBORS = "neighbors"
    TRAFFIC_SIGN = "traffic_sign"
    MAP = "map"


FEATURE_GROUPS: tuple[FeatureGroup, ...] = tuple(FeatureGroup)


@dataclass(frozen=True)
class ElementContribution:
    """Leave-one-out contribution of one neighbour or one signal."""

    element_id: str
    contribution: float


@dataclass
class ShapleyReport:
    """Feature attribution for one scene, or the dataset aggregate (``GLOBAL``)."""

    scene_id: str
    metric: str
    v_empty: float
    v_full: float
    phi: dict[FeatureGroup, float]
    error_empty: float = 0.0
    error_full: float = 0.0
    neighbor_elements: list[ElementContribution] = field(default_factory=list)
    signal_elements: list[ElementContribution] = field(default_factory=list)
    coalition_values: dict[str, float] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)
