"""Hand-built predictions, ground truths and scenes for exact test cases."""

import numpy as np

from src.models.models import AgentState, AgentTrack, GroundTruth, MapPolyline, PredictionSet, Scene, TrafficSignal


def prediction(trajectories, confidences=None, scene_id: str = "scene", agent_ids=None) -> PredictionSet:
    trajectories = np.asarray(trajectories, dtype=np.float64)
    modes, agents = trajectories.shape[:2]
    if confidences is None:
        confidences = np.full(modes, 1.0 / modes)
    return PredictionSet(
        scene_id=scene_id,
        agent_ids=tuple(agent_ids or (f"agent-{i}" for i in range(agents))),
        trajectories=trajectories,
        confidences=np.asarray(confidences, dtype=np.float64),
    )


def truth(positions, valid=None, scene_id: str = "scene") -> GroundTruth:
    positions = np.asarray(positions, dtype=np.float64)
    if valid is None:
        valid = np.ones(positions.shape[:2], dtype=bool)
    return GroundTruth(
        scene_id=scene_id,
        agent_ids=tuple(f"agent-{i}" for i in range(positions.shape[0])),
        positions=positions,
        valid=np.asarray(valid, dtype=bool),
    )


def straight_track(agent_id: str, t_obs: int, t_fut: int, speed: float = 5.0, y: float = 0.0) -> AgentTrack:
    """Agent moving along +x at ``speed`` m/s, 10 Hz."""
    states = tuple(
        AgentState(x=round(0.1 * speed * i, 6), y=y, heading=0.0, vx=speed, vy=0.0) for i in range(t_obs + t_fut)
    )
    return AgentTrack(agent_id=agent_id, agent_type="vehicle", states=states)


def line_scene(
    t_obs: int = 4,
    t_fut: int = 3,
    neighbors: int = 1,
    signals: int = 1,
    scene_id: str = "line-000000",
) -> Scene:
    """One predicted agent on a straight road plus optional neighbours and signals."""
    tracks = [straight_track("ego", t_obs, t_fut)]
    tracks += [straight_track(f"other-{i}", t_obs, t_fut, speed=3.0, y=4.0 * (i + 1)) for i in range(neighbors)]
    lane = MapPolyline("lane_center", ((0.0, 0.0), (50.0, 0.0)))
    return Scene(
        scene_id=scene_id,
        t_obs=t_obs,
        t_fut=t_fut,
        tracks=tuple(tracks),
        map_polylines=(lane,),
        signals=tuple(TrafficSignal(f"signal-{i}", (30.0, 2.0 * i), ("red",) * t_obs) for i in range(signals)),
        predict_ids=("ego",),
        family="lane_keep",
    )
