"""
Coalitions of the four feature groups and the baselines that stand in for
absent groups.

An absent history becomes a static, non-interacting agent: every observed
step of each predicted agent is replaced by its last observed pose with zero
velocity. Absent neighbours, signals or map are simply removed from the scene.
"""

import itertools
from dataclasses import replace

from src.models.models import FEATURE_GROUPS, AgentState, AgentTrack, FeatureGroup, Scene

Coalition = frozenset[FeatureGroup]

EMPTY_COALITION: Coalition = frozenset()
FULL_COALITION: Coalition = frozenset(FEATURE_GROUPS)


def all_coalitions() -> list[Coalition]:
    """The 16 subsets of the four groups, ordered by size then canonical group order."""
    return [
        frozenset(subset)
        for size in range(len(FEATURE_GROUPS) + 1)
        for subset in itertools.combinations(FEATURE_GROUPS, size)
    ]


def coalition_key(coalition: Coalition) -> str:
    """Stable text label, e.g. ``history+map``; the empty coalition is ``none``."""
    members = [group.value for group in FEATURE_GROUPS if group in coalition]
    return "+".join(members) if members else "none"


def static_history(track: AgentTrack, t_obs: int) -> AgentTrack:
    """``track`` with its observed steps frozen at the last observed pose."""
    last = track.states[t_obs - 1]
    frozen = AgentState(x=last.x, y=last.y, heading=last.heading, vx=0.0, vy=0.0, valid=True)
    return replace(track, states=(frozen,) * t_obs + track.states[t_obs:])


def apply_coalition(scene: Scene, coalition: Coalition) -> Scene:
    """Scene in which only the groups of ``coalition`` carry real information.

    Ground-truth futures of the predicted agents are never touched.
    """
    predicted = set(scene.predict_ids)
    tracks = scene.tracks
    if FeatureGroup.HISTORY not in coalition:
        tracks = tuple(
            static_history(track, scene.t_obs) if track.agent_id in predicted else track for track in tracks
        )
    if FeatureGroup.NEIGHBORS not in coalition:
        tracks = tuple(track for track in tracks if track.agent_id in predicted)
    return replace(
        scene,
        tracks=tracks,
        signals=scene.signals if FeatureGroup.TRAFFIC_SIGN in coalition else (),
        map_polylines=scene.map_polylines if FeatureGroup.MAP in coalition else (),
    )


def without_element(scene: Scene, group: FeatureGroup, element_id: str) -> Scene:
    """``scene`` with one neighbour track or one signal removed."""
    if group is FeatureGroup.NEIGHBORS:
        return replace(scene, tracks=tuple(t for t in scene.tracks if t.agent_id != element_id))
    if group is FeatureGroup.TRAFFIC_SIGN:
        return replace(scene, signals=tuple(s for s in scene.signals if s.signal_id != element_id))
    raise ValueError(f"{group.value} has no removable elements")
