"""
History/future windows over a scene's tracks.
"""

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from src.models.models import AgentState, GroundTruth, Scene


@dataclass(frozen=True)
class SceneWindow:
    """States of every track restricted to steps ``[start, stop)``."""

    start: int
    stop: int
    states: Mapping[str, tuple[AgentState, ...]]

    @property
    def length(self) -> int:
        return self.stop - self.start

    def positions(self, agent_id: str) -> np.ndarray:
        return np.array([(s.x, s.y) for s in self.states[agent_id]], dtype=np.float64).reshape(-1, 2)

    def valid(self, agent_id: str) -> np.ndarray:
        return np.array([s.valid for s in self.states[agent_id]], dtype=bool)


def split_history_future(scene: Scene) -> tuple[SceneWindow, SceneWindow]:
    """Split every track at ``t_obs``.

    The two windows never overlap and ``history + future`` is the full state
    tuple of each track. ``t_fut = 0`` gives an empty future window.
    """
    cut = scene.t_obs
    end = scene.t_obs + scene.t_fut
    history = {t.agent_id: t.states[:cut] for t in scene.tracks}
    future = {t.agent_id: t.states[cut:end] for t in scene.tracks}
    return SceneWindow(0, cut, history), SceneWindow(cut, end, future)


def ground_truth(scene: Scene) -> GroundTruth:
    """Future positions and validity of the predicted agents, in track order."""
    _, future = split_history_future(scene)
    agent_ids = scene.predicted_agent_ids()
    positions = np.zeros((len(agent_ids), scene.t_fut, 2))
    valid = np.zeros((len(agent_ids), scene.t_fut), dtype=bool)
    for row, agent_id in enumerate(agent_ids):
        positions[row] = future.positions(agent_id)
        valid[row] = future.valid(agent_id)
    return GroundTruth(scene_id=scene.scene_id, agent_ids=agent_ids, positions=positions, valid=valid)
