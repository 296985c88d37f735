"""
Deterministic synthetic scenario generator.

Produces scenes for five families:

- ``lane_keep``: agents cruise along concentric circular lanes.
- ``stop_start``: a queue waits at a stop line; the signal turns from red to
  green during observation and the queue departs in the future.
- ``turn``: one agent takes a 90 degree arc between two straight roads while
  others continue straight.
- ``interaction``: two agents approach a crossing; one yields, stops and
  departs once the other has passed.
- ``irregular``: a random-walk road without signals.

Every agent moves along a lane-centre polyline of the scene, so futures are
fully determined by lane geometry plus each agent's speed profile. Output is
a pure function of ``(family, seed, config)``: the generator seeds
``numpy.random.default_rng([seed, family_index])`` and rounds every number
to 1e-6.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from src.config import settings
from src.errors import ConfigError
from src.models.models import (
    AgentState,
    AgentTrack,
    MapPolyline,
    SCENARIO_FAMILIES,
    Scene,
    TrafficSignal,
)
from src.scene.validation import validate_scene

_POINT_SPACING_M: float = 1.0
START_ACCEL_MPS2: float = 2.0
BRAKE_DECEL_MPS2: float = 2.5
QUEUE_GAP_M: float = 8.0
MIN_TURN_SPEED_MPS: float = 6.0
_TYPE_SPEED_FACTOR: dict[str, float] = {"vehicle": 1.0, "bicycle": 0.6, "pedestrian": 0.2}
_NEIGHBOR_TYPE_WEIGHTS: tuple[float, float, float] = (0.7, 0.2, 0.1)
_DECIMALS: int = 6


@dataclass(frozen=True)
class GeneratorConfig:
    """Scene generator parameters.

    ``observation_noise`` is the standard deviation (m) of noise added to the
    observed positions of every agent; ``neighbor_dropout`` is the
    probability that an observed step of a non-predicted agent is invalid.
    """

    num_agents: int = 4
    num_predicted: int = 2
    t_obs: int = settings.T_OBS
    t_fut: int = settings.T_FUT
    dt: float = settings.DT_SECONDS
    lane_count: int = 2
    lane_width: float = 3.5
    lane_length: float = 120.0
    nominal_speed: float = 8.0
    speed_jitter: float = 2.0
    observation_noise: float = 0.0
    neighbor_dropout: float = 0.0

    @classmethod
    def map_determined(cls, **overrides: object) -> "GeneratorConfig":
        """Preset whose futures follow from lane geometry and the nominal speed alone.

        Speeds carry no jitter, so the nominal speed is an exact prior, while
        noisy observations make speeds estimated from history slightly worse
        than that prior.
        """
        return replace(cls(speed_jitter=0.0, observation_noise=0.3), **overrides)


def validate_generator_config(config: GeneratorConfig) -> None:
    """Raises ConfigError for zero agents, degenerate lanes or impossible speeds."""
    if config.num_agents < 1:
        raise ConfigError(f"num_agents must be at least 1, got {config.num_agents}")
    if not 1 <= config.num_predicted <= config.num_agents:
        raise ConfigError(f"num_predicted must lie in [1, num_agents], got {config.num_predicted}")
    if config.t_obs < 2:
        raise ConfigError(f"t_obs must be at least 2, got {config.t_obs}")
    if config.t_fut < 0:
        raise ConfigError(f"t_fut must be nonnegative, got {config.t_fut}")
    if config.dt <= 0:
        raise ConfigError(f"dt must be positive, got {config.dt}")
    if config.lane_count < 1:
        raise ConfigError(f"degenerate lane: lane_count must be at least 1, got {config.lane_count}")
    if config.lane_width <= 0 or config.lane_length <= 0:
        raise ConfigError("degenerate lane: lane_width and lane_length must be positive")
    if config.speed_jitter < 0 or config.nominal_speed - config.speed_jitter <= 0:
        raise ConfigError("nominal_speed must exceed speed_jitter >= 0")
    if config.nominal_speed + config.speed_jitter >= settings.V_MAX_MPS:
        raise ConfigError(f"speeds must stay below v_max = {settings.V_MAX_MPS} m/s")
    if not 0.0 <= config.observation_noise <= 0.5:
        raise ConfigError("observation_noise must lie in [0, 0.5] m")
    if not 0.0 <= config.neighbor_dropout < 1.0:
        raise ConfigError("neighbor_dropout must lie in [0, 1)")


# =============================================================================
# Geometry helpers
# =============================================================================


class LanePath:
    """Polyline with linear interpolation by arc length."""

    def __init__(self, points: np.ndarray) -> None:
        self.points = points
        steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
        self.arc = np.concatenate([[0.0], np.cumsum(steps)])

    @property
    def length(self) -> float:
        return float(self.arc[-1])

    def locate(self, s: np.ndarray, extend: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Positions and headings at arc lengths ``s``.

        Arc lengths are clipped to the path unless ``extend`` is set, in which
        case points past the end continue straight along the last segment.
        """
        s = np.asarray(s, dtype=np.float64)
        clipped = np.clip(s, 0.0, self.length)
        xy = np.stack(
            [np.interp(clipped, self.arc, self.points[:, 0]), np.interp(clipped, self.arc, self.points[:, 1])],
            axis=-1,
        )
        segment = np.clip(np.searchsorted(self.arc, clipped, side="right") - 1, 0, len(self.points) - 2)
        delta = self.points[segment + 1] - self.points[segment]
        if extend:
            last = self.points[-1] - self.points[-2]
            direction = last / np.linalg.norm(last)
            xy = xy + np.maximum(s - self.length, 0.0)[:, None] * direction
        return xy, np.arctan2(delta[:, 1], delta[:, 0])

    def distance_to(self, point: np.ndarray) -> tuple[float, float]:
        """``(distance, arc length)`` of the closest point of the path to ``point``."""
        start = self.points[:-1]
        delta = self.points[1:] - start
        seg_len2 = np.einsum("ij,ij->i", delta, delta)
        u = np.clip(np.einsum("ij,ij->i", point - start, delta) / seg_len2, 0.0, 1.0)
        closest = start + u[:, None] * delta
        dist = np.linalg.norm(closest - point, axis=1)
        best = int(np.argmin(dist))
        return float(dist[best]), float(self.arc[best] + u[best] * np.sqrt(seg_len2[best]))


def _sample_lengths(length: float) -> np.ndarray:
    s = np.arange(0.0, length, _POINT_SPACING_M)
    if length - s[-1] < 0.05 * _POINT_SPACING_M:
        s = s[:-1]
    return np.append(s, length)


def _straight(start: np.ndarray, heading: float, length: float) -> tuple[np.ndarray, np.ndarray]:
    s = _sample_lengths(length)
    direction = np.array([math.cos(heading), math.sin(heading)])
    return start + s[:, None] * direction, np.full(len(s), heading)


def _arc(start: np.ndarray, heading: float, radius: float, sign: float, length: float) -> tuple[np.ndarray, np.ndarray]:
    """Circular arc starting at ``start`` with tangent ``heading``; ``sign`` +1 turns left."""
    s = _sample_lengths(length)
    angles = heading + sign * s / radius
    points = start + sign * radius * np.stack(
        [np.sin(angles) - math.sin(heading), math.cos(heading) - np.cos(angles)], axis=-1
    )
    return points, angles


def _offset(points: np.ndarray, headings: np.ndarray, distance: float) -> np.ndarray:
    """Shift points sideways (positive = left of travel direction)."""
    normals = np.stack([-np.sin(headings), np.cos(headings)], axis=-1)
    return points + distance * normals


def _join(*pieces: np.ndarray) -> np.ndarray:
    """Concatenate polylines that share their junction points."""
    parts = [pieces[0]] + [piece[1:] for piece in pieces[1:]]
    return np.concatenate(parts, axis=0)


def _lane_offsets(config: GeneratorConfig) -> np.ndarray:
    return (np.arange(config.lane_count) - (config.lane_count - 1) / 2.0) * config.lane_width


def _integrate(accelerations: np.ndarray, v0: float, v_cap: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Arc-length and speed per step from a per-step acceleration schedule."""
    steps = len(accelerations)
    s = np.zeros(steps)
    v = np.zeros(steps)
    v[0] = v0
    for i in range(1, steps):
        v[i] = min(max(v[i - 1] + accelerations[i - 1] * dt, 0.0), v_cap)
        s[i] = s[i - 1] + 0.5 * (v[i - 1] + v[i]) * dt
    return s, v


def _wrap_heading(angle: float) -> float:
    """Round to 1e-6 and wrap into (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    value = round(wrapped, _DECIMALS)
    limit = math.floor(math.pi * 10**_DECIMALS) / 10**_DECIMALS
    if value > math.pi:
        value = limit
    elif value <= -math.pi:
        value = -limit
    return value


def _r(value: float) -> float:
    return round(float(value), _DECIMALS) + 0.0


class _SceneBuilder:
    """Accumulates tracks, polylines and signals for one scene."""

    def __init__(self, config: GeneratorConfig, rng: np.random.Generator) -> None:
        self.config = config
        self.rng = rng
        self.steps = config.t_obs + config.t_fut
        self.tracks: list[AgentTrack] = []
        self.polylines: list[MapPolyline] = []
        self.signals: list[TrafficSignal] = []

    @property
    def duration(self) -> float:
        return (self.steps - 1) * self.config.dt

    def agent_type(self, index: int) -> str:
        if index < self.config.num_predicted:
            return "vehicle"
        return str(self.rng.choice(list(_TYPE_SPEED_FACTOR), p=_NEIGHBOR_TYPE_WEIGHTS))

    def cruise_speed(self, agent_type: str) -> float:
        jitter = self.config.speed_jitter * self.rng.uniform(-1.0, 1.0)
        return (self.config.nominal_speed + jitter) * _TYPE_SPEED_FACTOR[agent_type]

    def add_polyline(self, polyline_type: str, points: np.ndarray) -> None:
        rounded = tuple((_r(x), _r(y)) for x, y in points)
        deduped = [rounded[0]] + [p for prev, p in zip(rounded, rounded[1:]) if p != prev]
        self.polylines.append(MapPolyline(polyline_type=polyline_type, points=tuple(deduped)))

    def add_signal(self, position: np.ndarray, states: list[str]) -> None:
        signal_id = f"signal-{len(self.signals)}"
        self.signals.append(
            TrafficSignal(signal_id=signal_id, position=(_r(position[0]), _r(position[1])), state_per_step=tuple(states))
        )

    def add_track(self, index: int, agent_type: str, path: LanePath, s: np.ndarray, speed: np.ndarray) -> None:
        xy, heading = path.locate(s)
        cfg = self.config
        if cfg.observation_noise > 0:
            xy = xy.copy()
            xy[: cfg.t_obs] += self.rng.normal(0.0, cfg.observation_noise, size=(cfg.t_obs, 2))
        valid = np.ones(self.steps, dtype=bool)
        if index >= cfg.num_predicted and cfg.neighbor_dropout > 0:
            valid[: cfg.t_obs] = self.rng.random(cfg.t_obs) >= cfg.neighbor_dropout
        states = []
        for i in range(self.steps):
            if not valid[i]:
                states.append(AgentState(0.0, 0.0, 0.0, 0.0, 0.0, False))
                continue
            h = float(heading[i])
            states.append(
                AgentState(
                    x=_r(xy[i, 0]),
                    y=_r(xy[i, 1]),
                    heading=_wrap_heading(h),
                    vx=_r(speed[i] * math.cos(h)),
                    vy=_r(speed[i] * math.sin(h)),
                    valid=True,
                )
            )
        self.tracks.append(AgentTrack(agent_id=f"agent-{index}", agent_type=agent_type, states=tuple(states)))

    def build(self, scene_id: str, family: str) -> Scene:
        predict_ids = tuple(track.agent_id for track in self.tracks[: self.config.num_predicted])
        return Scene(
            scene_id=scene_id,
            t_obs=self.config.t_obs,
            t_fut=self.config.t_fut,
            tracks=tuple(self.tracks),
            map_polylines=tuple(self.polylines),
            signals=tuple(self.signals),
            predict_ids=predict_ids,
            family=family,
        )


# =============================================================================
# Families
# =============================================================================


def _constant_profile(b: _SceneBuilder, start: float, speed: float) -> tuple[np.ndarray, np.ndarray]:
    t = np.arange(b.steps) * b.config.dt
    return start + speed * t, np.full(b.steps, speed)


def _lane_keep(b: _SceneBuilder) -> None:
    cfg = b.config
    radius = b.rng.uniform(80.0, 250.0)
    sign = float(b.rng.choice([-1.0, 1.0]))
    heading0 = b.rng.uniform(-math.pi, math.pi)
    origin = b.rng.uniform(-20.0, 20.0, size=2)

    plans = []
    for a in range(cfg.num_agents):
        agent_type = b.agent_type(a)
        start = 5.0 + 15.0 * (a // cfg.lane_count) + b.rng.uniform(0.0, 5.0)
        plans.append((a, agent_type, a % cfg.lane_count, start, b.cruise_speed(agent_type)))
    needed = max(start + speed * b.duration for _, _, _, start, speed in plans) + 10.0
    # Inner lanes of an arc are shorter than the reference line.
    length = max(cfg.lane_length, 1.1 * needed)

    centre, headings = _arc(origin, heading0, radius, sign, length)
    offsets = _lane_offsets(cfg)
    lanes = [_offset(centre, headings, d) for d in offsets]
    for lane in lanes:
        b.add_polyline("lane_center", lane)
    half_width = cfg.lane_count * cfg.lane_width / 2.0
    b.add_polyline("road_edge", _offset(centre, headings, half_width))
    b.add_polyline("road_edge", _offset(centre, headings, -half_width))

    paths = [LanePath(np.array(p.points)) for p in b.polylines[: cfg.lane_count]]
    for a, agent_type, lane, start, speed in plans:
        s, v = _constant_profile(b, start, speed)
        b.add_track(a, agent_type, paths[lane], s, v)


def _stop_start(b: _SceneBuilder) -> None:
    cfg = b.config
    heading0 = b.rng.uniform(-math.pi, math.pi)
    origin = b.rng.uniform(-20.0, 20.0, size=2)
    max_queue = (cfg.num_agents - 1) // cfg.lane_count
    stop_s = 12.0 + QUEUE_GAP_M * max_queue

    plans = []
    for a in range(cfg.num_agents):
        agent_type = b.agent_type(a)
        queue = a // cfg.lane_count
        speed = b.cruise_speed(agent_type)
        accel = np.zeros(b.steps)
        accel[min(cfg.t_obs - 1 + 10 * queue, b.steps) :] = START_ACCEL_MPS2
        s, v = _integrate(accel, 0.0, speed, cfg.dt)
        plans.append((a, agent_type, a % cfg.lane_count, stop_s - 2.0 - QUEUE_GAP_M * queue + s, v))
    length = max(cfg.lane_length, max(float(s[-1]) for *_, s, _ in plans) + 10.0)

    centre, headings = _straight(origin, heading0, length)
    for d in _lane_offsets(cfg):
        b.add_polyline("lane_center", _offset(centre, headings, d))
    half_width = cfg.lane_count * cfg.lane_width / 2.0
    b.add_polyline("road_edge", _offset(centre, headings, half_width))
    b.add_polyline("road_edge", _offset(centre, headings, -half_width))
    direction = np.array([math.cos(heading0), math.sin(heading0)])
    crossing_centre = origin + (stop_s + 3.0) * direction
    crosswalk, _ = _straight(
        _offset(crossing_centre[None, :], np.array([heading0]), -half_width)[0],
        heading0 + math.pi / 2.0,
        2.0 * half_width,
    )
    b.add_polyline("crosswalk", crosswalk)

    switch = int(b.rng.integers(1, cfg.t_obs))
    b.add_signal(origin + stop_s * direction, ["red"] * switch + ["green"] * (cfg.t_obs - switch))

    paths = [LanePath(np.array(p.points)) for p in b.polylines[: cfg.lane_count]]
    for a, agent_type, lane, s, v in plans:
        b.add_track(a, agent_type, paths[lane], s, v)


def _turn(b: _SceneBuilder) -> None:
    cfg = b.config
    heading0 = b.rng.uniform(-math.pi, math.pi)
    origin = b.rng.uniform(-20.0, 20.0, size=2)
    radius = b.rng.uniform(10.0, 20.0)
    sign = float(b.rng.choice([-1.0, 1.0]))
    lead_distance = b.rng.uniform(1.0, 6.0)
    observed = (cfg.t_obs - 1) * cfg.dt

    plans = []
    for a in range(cfg.num_agents):
        agent_type = b.agent_type(a)
        speed = b.cruise_speed(agent_type)
        if a == 0:
            speed = min(max(speed, MIN_TURN_SPEED_MPS), settings.V_MAX_MPS - 1.0)
        gap = lead_distance + 10.0 * a
        plans.append((a, agent_type, a % 2 == 0, gap, speed))
    approach_len = max(40.0, max(gap + speed * observed + 2.0 for *_, gap, speed in plans))
    exit_len = max(60.0, max(speed for *_, speed in plans) * b.duration + 10.0)

    approach, _ = _straight(origin, heading0, approach_len)
    corner = approach[-1]
    arc, arc_headings = _arc(corner, heading0, radius, sign, radius * math.pi / 2.0)
    exit_heading = heading0 + sign * math.pi / 2.0
    exit_road, exit_headings = _straight(arc[-1], exit_heading, exit_len)
    through, _ = _straight(corner, heading0, exit_len)

    b.add_polyline("lane_center", approach)
    b.add_polyline("lane_center", arc)
    b.add_polyline("lane_center", exit_road)
    b.add_polyline("lane_center", through)
    crossing_centre = exit_road[min(5, len(exit_road) - 1)]
    crosswalk, _ = _straight(
        _offset(crossing_centre[None, :], exit_headings[:1], -cfg.lane_width)[0],
        exit_heading + math.pi / 2.0,
        2.0 * cfg.lane_width,
    )
    b.add_polyline("crosswalk", crosswalk)
    b.add_signal(corner, ["green"] * cfg.t_obs)

    turning = LanePath(_join(approach, arc, exit_road))
    straight_on = LanePath(_join(approach, through))
    for a, agent_type, turns, gap, speed in plans:
        start = approach_len - gap - speed * observed
        s, v = _constant_profile(b, start, speed)
        b.add_track(a, agent_type, turning if turns else straight_on, s, v)


def _interaction(b: _SceneBuilder) -> None:
    cfg = b.config
    heading0 = b.rng.uniform(-math.pi, math.pi)
    crossing = b.rng.uniform(-20.0, 20.0, size=2)
    cross_heading = heading0 + float(b.rng.choice([-1.0, 1.0])) * math.pi / 2.0
    t = np.arange(b.steps) * cfg.dt

    types = [b.agent_type(a) for a in range(cfg.num_agents)]
    v_pass = b.cruise_speed(types[0])
    v_yield = b.cruise_speed(types[1]) if cfg.num_agents > 1 else v_pass
    t_cross = (cfg.t_obs - 1) * cfg.dt + b.rng.uniform(2.0, 3.0)
    passer_distance = v_pass * t_cross
    braking = v_yield**2 / (2.0 * BRAKE_DECEL_MPS2)
    yield_distance = v_yield * cfg.t_obs * cfg.dt + braking + 4.0 + b.rng.uniform(0.0, 5.0)

    t_brake = (yield_distance - 4.0 - braking) / v_yield
    t_go = max(t_cross + 1.5, t_brake + v_yield / BRAKE_DECEL_MPS2 + 0.5)
    accel = np.where(t < t_brake, 0.0, np.where(t < t_go, -BRAKE_DECEL_MPS2, START_ACCEL_MPS2))
    s_yield, v_yield_profile = _integrate(accel, v_yield, v_yield, cfg.dt)
    s_pass, v_pass_profile = _constant_profile(b, 0.0, v_pass)

    followers = max(0, math.ceil((cfg.num_agents - 2) / 2))
    margin = 10.0 + 12.0 * followers
    reach = max(v_pass, v_yield) * b.duration + 20.0
    d1 = np.array([math.cos(heading0), math.sin(heading0)])
    d2 = np.array([math.cos(cross_heading), math.sin(cross_heading)])
    road1, road1_headings = _straight(crossing - (passer_distance + margin) * d1, heading0, passer_distance + margin + reach)
    road2, _ = _straight(crossing - (yield_distance + margin) * d2, cross_heading, yield_distance + margin + reach)
    b.add_polyline("lane_center", road1)
    b.add_polyline("lane_center", road2)
    b.add_polyline("road_edge", _offset(road1, road1_headings, cfg.lane_width / 2.0))
    b.add_polyline("road_edge", _offset(road1, road1_headings, -cfg.lane_width / 2.0))

    paths = (LanePath(road1), LanePath(road2))
    leaders = ((s_pass, v_pass_profile), (s_yield, v_yield_profile))
    for a in range(cfg.num_agents):
        road = a % 2
        rank = a // 2
        s, v = leaders[road]
        b.add_track(a, types[a], paths[road], margin + s - 12.0 * rank, v)


def _irregular(b: _SceneBuilder) -> None:
    cfg = b.config
    heading0 = b.rng.uniform(-math.pi, math.pi)
    origin = b.rng.uniform(-20.0, 20.0, size=2)

    plans = []
    for a in range(cfg.num_agents):
        agent_type = b.agent_type(a)
        start = 5.0 + 12.0 * a + b.rng.uniform(0.0, 4.0)
        plans.append((a, agent_type, start, b.cruise_speed(agent_type)))
    length = max(cfg.lane_length, max(start + speed * b.duration for *_, start, speed in plans) + 10.0)

    count = int(math.ceil(length / _POINT_SPACING_M)) + 1
    headings = heading0 + np.concatenate([[0.0], np.cumsum(b.rng.normal(0.0, 0.04, size=count - 1))])
    steps = _POINT_SPACING_M * np.stack([np.cos(headings[:-1]), np.sin(headings[:-1])], axis=-1)
    centre = origin + np.concatenate([np.zeros((1, 2)), np.cumsum(steps, axis=0)])
    b.add_polyline("lane_center", centre)
    b.add_polyline("road_edge", _offset(centre, headings, cfg.lane_width / 2.0))
    b.add_polyline("road_edge", _offset(centre, headings, -cfg.lane_width / 2.0))

    path = LanePath(np.array(b.polylines[0].points))
    for a, agent_type, start, speed in plans:
        s, v = _constant_profile(b, start, speed)
        b.add_track(a, agent_type, path, s, v)


_FAMILY_BUILDERS = {
    "lane_keep": _lane_keep,
    "stop_start": _stop_start,
    "turn": _turn,
    "interaction": _interaction,
    "irregular": _irregular,
}


# =============================================================================
# Public API
# =============================================================================


def generate_scene(family: str, seed: int, config: GeneratorConfig | None = None) -> Scene:
    """Generate one scene of ``family``.

    Args:
        family: One of ``SCENARIO_FAMILIES``.
        seed: Nonnegative integer seed.
        config: Generator parameters (defaults when omitted).

    Returns:
        A Scene that satisfies every scene invariant.

    Raises:
        ConfigError: For an unknown family, a negative seed or an invalid config.
    """
    config = config or GeneratorConfig()
    if family not in _FAMILY_BUILDERS:
        raise ConfigError(f"unknown scenario family {family!r}; expected one of {list(SCENARIO_FAMILIES)}")
    if seed < 0:
        raise ConfigError(f"seed must be nonnegative, got {seed}")
    validate_generator_config(config)

    rng = np.random.default_rng([seed, SCENARIO_FAMILIES.index(family)])
    builder = _SceneBuilder(config, rng)
    _FAMILY_BUILDERS[family](builder)
    scene = builder.build(scene_id=f"{family}-{seed:06d}", family=family)

    violations = validate_scene(scene, dt=config.dt)
    if violations:
        raise ConfigError(f"generator config produced an invalid scene: {violations[0]}")
    return scene


def generate_dataset(family: str, count: int, seed: int, config: GeneratorConfig | None = None) -> list[Scene]:
    """Scenes for seeds ``seed, seed + 1, ..., seed + count - 1``."""
    if count < 1:
        raise ConfigError(f"count must be at least 1, got {count}")
    return [generate_scene(family, seed + i, config) for i in range(count)]
