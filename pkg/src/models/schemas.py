"""
Pydantic schemas for every JSON document the toolkit reads or writes.

The schemas validate structure and value ranges; cross-field scene
invariants (track lengths, kinematics, predicted-agent validity) are checked
afterwards by ``src.scene.validation``.
"""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

SCENE_SCHEMA_VERSION: str = "1.0"
DATASET_SCHEMA_VERSION: str = "1.0"
PREDICTION_SCHEMA_VERSION: str = "1.0"

AgentTypeName = Literal["vehicle", "bicycle", "pedestrian"]
PolylineTypeName = Literal["lane_center", "road_edge", "crosswalk"]
SignalStateName = Literal["red", "yellow", "green", "unknown"]
FamilyName = Literal["lane_keep", "stop_start", "turn", "interaction", "irregular"]


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid")


# -----------------------------------------------------------------------------
# Scenes and datasets
# -----------------------------------------------------------------------------


class AgentStateDocument(_Document):
    x: float
    y: float
    heading: float
    vx: float
    vy: float
    valid: bool


class AgentTrackDocument(_Document):
    agent_id: str = Field(..., min_length=1)
    agent_type: AgentTypeName
    states: list[AgentStateDocument]


class MapPolylineDocument(_Document):
    polyline_type: PolylineTypeName
    points: list[tuple[float, float]] = Field(..., min_length=2)


class TrafficSignalDocument(_Document):
    signal_id: str = Field(..., min_length=1)
    position: tuple[float, float]
    state_per_step: list[SignalStateName]


class SceneDocument(_Document):
    """One scene file (``<scene_id>.json``)."""

    schema_version: str
    scene_id: str = Field(..., min_length=1)
    t_obs: int = Field(..., ge=1)
    t_fut: int = Field(..., ge=0)
    family: FamilyName
    tracks: list[AgentTrackDocument] = Field(..., min_length=1)
    map: list[MapPolylineDocument]
    signals: list[TrafficSignalDocument]
    predict_ids: list[str] = Field(..., min_length=1)


class DatasetManifest(_Document):
    """``manifest.json`` listing the scene files of a dataset directory."""

    schema_version: str
    count: int = Field(..., ge=0)
    files: list[str]


# -----------------------------------------------------------------------------
# Predictions and reports
# -----------------------------------------------------------------------------


class PredictionDocument(_Document):
    scene_id: str
    agent_ids: list[str]
    trajectories: list[list[list[tuple[float, float]]]]
    confidences: list[float]


class PredictionFile(_Document):
    """``predictions.json`` written by ``predict`` and read by ``evaluate``."""

    schema_version: str
    predictions: list[PredictionDocument]


class SceneMetricsDocument(_Document):
    scene_id: str
    min_sade: float
    min_sfde: float
    missed: bool
    best_mode: int


class MetricReportDocument(_Document):
    min_sade: float
    min_sfde: float
    smr: float = Field(..., ge=0.0, le=1.0)
    map_score: float = Field(..., ge=0.0, le=1.0)
    miss_threshold: float
    excluded_count: int
    excluded: list[str]
    scenes: list[SceneMetricsDocument]


class ElementDocument(_Document):
    id: str
    contribution: float


class ElementsDocument(_Document):
    neighbors: list[ElementDocument]
    signals: list[ElementDocument]


class PhiDocument(_Document):
    history: float
    neighbors: float
    traffic_sign: float
    map: float


class ShapleyReportDocument(_Document):
    scene_id: str
    metric: Literal["minSADE", "minSFDE"]
    v_empty: float
    v_full: float
    error_empty: float
    error_full: float
    phi: PhiDocument
    elements: ElementsDocument
    coalition_values: dict[str, float]
    seeds: list[int]


class RunManifest(_Document):
    """Provenance record written next to every command's outputs."""

    command: str
    config: dict
    inputs: dict[str, str]
    outputs: dict[str, str]
    seed: int
    tool_version: str
    duration_seconds: float
