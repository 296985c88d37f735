"""
Run configuration for training, ablation and evaluation.

Defaults come from ``src.config.settings``; run-configuration files are flat
``KEY=value`` text (``#`` comments allowed) parsed with ``dotenv_values`` and
flags override file values. The precedence is therefore:

    CLI flags > --config file > environment (.env) > built-in defaults
"""

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from dotenv import dotenv_values

from src.config import settings
from src.errors import ConfigError

_DECODER_HEADS: frozenset[str] = frozenset({"kan", "mlp", "none"})
_TRUE_WORDS: frozenset[str] = frozenset({"1", "true", "yes", "on"})
_FALSE_WORDS: frozenset[str] = frozenset({"0", "false", "no", "off"})


@dataclass(frozen=True)
class ModelConfig:
    """Network sizes and horizons shared by every module of the model."""

    t_obs: int = settings.T_OBS
    t_fut: int = settings.T_FUT
    d_model: int = settings.D_MODEL
    num_heads: int = settings.NUM_HEADS
    d_latent: int = settings.D_LATENT
    num_modes: int = settings.NUM_MODES
    points_per_polyline: int = settings.POINTS_PER_POLYLINE
    kan_grid_size: int = settings.KAN_GRID_SIZE
    kan_spline_order: int = settings.KAN_SPLINE_ORDER
    kan_grid_range: float = settings.KAN_GRID_RANGE
    diffusion_hidden: int = settings.D_MODEL
    diffusion_blocks: int = 2
    preview_steps: int = settings.PREVIEW_STEPS


@dataclass(frozen=True)
class AblationMask:
    """Which scene-encoder components are active (scene encoding ablation rows)."""

    spatial_temporal_attention: bool = True
    social_former: bool = True
    map_former: bool = True
    sign_former: bool = True


@dataclass(frozen=True)
class DecoderConfig:
    """Decoder head family and recurrence (trajectory decoding ablation rows).

    ``head`` is one of ``kan``, ``mlp`` or ``none``; ``none`` maps the hidden
    state to displacements with a single linear projection.
    """

    head: str = "kan"
    head_layers: int = 2
    use_gru: bool = True


@dataclass(frozen=True)
class TrainConfig:
    """Complete, immutable description of one training run."""

    learning_rate: float = settings.LEARNING_RATE
    batch_size: int = settings.BATCH_SIZE
    epochs: int = settings.EPOCHS
    lambda_kin: float = settings.LAMBDA_KIN
    lambda_conf: float = settings.LAMBDA_CONF
    diffusion_steps: int = settings.DIFFUSION_STEPS
    beta_start: float = settings.BETA_START
    beta_end: float = settings.BETA_END
    grad_clip_norm: float = settings.GRAD_CLIP_NORM
    latent_dropout: float = settings.LATENT_DROPOUT
    freeze_diffusion: bool = False
    max_steps: int = 0
    eval_every: int = 1
    miss_threshold: float = settings.MISS_THRESHOLD_M
    seed: int = settings.DEFAULT_SEED
    model: ModelConfig = field(default_factory=ModelConfig)
    ablation: AblationMask = field(default_factory=AblationMask)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)

    def __post_init__(self) -> None:
        validate_train_config(self)

    @property
    def num_modes(self) -> int:
        """Number of predicted modes K."""
        return self.model.num_modes

    def with_horizons(self, t_obs: int, t_fut: int) -> "TrainConfig":
        """Return a copy whose model horizons match a dataset."""
        return replace(self, model=replace(self.model, t_obs=t_obs, t_fut=t_fut))

    def to_dict(self) -> dict[str, Any]:
        """Nested plain-dict form used in checkpoints and run manifests."""
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "TrainConfig":
        """Rebuild a config from ``to_dict`` output."""
        flat = {k: v for k, v in payload.items() if k not in ("model", "ablation", "decoder")}
        return cls(
            **flat,
            model=ModelConfig(**payload.get("model", {})),
            ablation=AblationMask(**payload.get("ablation", {})),
            decoder=DecoderConfig(**payload.get("decoder", {})),
        )


def validate_train_config(config: TrainConfig) -> None:
    """Check that every hyperparameter is in range.

    Raises:
        ConfigError: Naming the first offending field.
    """
    positive = {
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "epochs": config.epochs,
        "diffusion_steps": config.diffusion_steps,
        "grad_clip_norm": config.grad_clip_norm,
        "miss_threshold": config.miss_threshold,
        "d_model": config.model.d_model,
        "num_heads": config.model.num_heads,
        "d_latent": config.model.d_latent,
        "num_modes": config.model.num_modes,
        "t_obs": config.model.t_obs,
        "points_per_polyline": config.model.points_per_polyline,
        "kan_grid_size": config.model.kan_grid_size,
        "kan_grid_range": config.model.kan_grid_range,
        "diffusion_hidden": config.model.diffusion_hidden,
    }
    for name, value in positive.items():
        if value <= 0:
            raise ConfigError(f"{name} must be positive, got {value}")
    for name, value in (("lambda_kin", config.lambda_kin), ("lambda_conf", config.lambda_conf)):
        if value < 0:
            raise ConfigError(f"{name} must be nonnegative, got {value}")
    if not 0.0 <= config.latent_dropout <= 1.0:
        raise ConfigError(f"latent_dropout must lie in [0, 1], got {config.latent_dropout}")
    if config.model.d_model % config.model.num_heads:
        raise ConfigError("d_model must be divisible by num_heads")
    if config.model.preview_steps < 3:
        raise ConfigError("preview_steps must be at least 3 to form accelerations")
    if config.model.t_fut < 0:
        raise ConfigError(f"t_fut must be nonnegative, got {config.model.t_fut}")
    if config.decoder.head not in _DECODER_HEADS:
        raise ConfigError(f"decoder head must be one of {sorted(_DECODER_HEADS)}, got {config.decoder.head!r}")
    if config.decoder.head != "none" and config.decoder.head_layers not in (1, 2):
        raise ConfigError("decoder head_layers must be 1 or 2")
    if not 0.0 < config.beta_start <= config.beta_end < 1.0:
        raise ConfigError("diffusion betas must satisfy 0 < beta_start <= beta_end < 1")


# -------------------------------------------------------------------------
# Config files and overrides
# -------------------------------------------------------------------------


def read_config_file(path: Path) -> dict[str, str]:
    """Read a flat ``KEY=value`` run-configuration file.

    Args:
        path: Config file path.

    Returns:
        Mapping of lower-cased keys to raw string values.

    Raises:
        FileNotFoundError: If the file does not exist.
    """
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    raw = dotenv_values(path)
    return {key.lower(): value for key, value in raw.items() if value is not None}


def build_train_config(values: Mapping[str, Any], base: TrainConfig | None = None) -> TrainConfig:
    """Apply string or typed overrides to a base TrainConfig.

    Keys may name a top-level field (``epochs``) or a nested one, either bare
    (``d_model``, ``map_former``, ``use_gru``) or prefixed by ``decoder_``
    (``decoder_head``, ``decoder_layers``). Keys that belong to other
    sections (see ``known_config_keys``) are ignored here.

    Raises:
        ConfigError: For values that cannot be converted or fail validation.
    """
    config = base or TrainConfig()
    top: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {"model": {}, "ablation": {}, "decoder": {}}
    sections = {
        "model": {f.name: f for f in fields(ModelConfig)},
        "ablation": {f.name: f for f in fields(AblationMask)},
        "decoder": {f.name: f for f in fields(DecoderConfig)},
    }
    top_fields = {f.name: f for f in fields(TrainConfig) if f.name not in sections}

    for raw_key, raw_value in values.items():
        key = _DECODER_ALIASES.get(raw_key.lower(), raw_key.lower())
        if key in top_fields:
            top[key] = _coerce(key, raw_value, getattr(config, key))
            continue
        for section, section_fields in sections.items():
            if key in section_fields:
                current = getattr(getattr(config, section), key)
                nested[section][key] = _coerce(key, raw_value, current)
                break

    try:
        return replace(
            config,
            **top,
            model=replace(config.model, **nested["model"]),
            ablation=replace(config.ablation, **nested["ablation"]),
            decoder=replace(config.decoder, **nested["decoder"]),
        )
    except TypeError as error:
        raise ConfigError(str(error)) from error


def build_generator_config(values: Mapping[str, Any], base: Any = None) -> Any:
    """Apply overrides to a GeneratorConfig; keys of other sections are ignored.

    Raises:
        ConfigError: For values that cannot be converted or fail validation.
    """
    from src.scene.generator import GeneratorConfig, validate_generator_config

    config = base or GeneratorConfig()
    names = {f.name for f in fields(GeneratorConfig)}
    overrides = {
        key.lower(): _coerce(key.lower(), raw, getattr(config, key.lower()))
        for key, raw in values.items()
        if key.lower() in names
    }
    config = replace(config, **overrides)
    validate_generator_config(config)
    return config


def known_config_keys() -> frozenset[str]:
    """Every key accepted in a run-configuration file."""
    from src.scene.generator import GeneratorConfig

    keys = {f.name for f in fields(TrainConfig)} - {"model", "ablation", "decoder"}
    keys |= {f.name for f in fields(ModelConfig)}
    keys |= {f.name for f in fields(AblationMask)}
    keys |= {f.name for f in fields(DecoderConfig)}
    keys |= {f.name for f in fields(GeneratorConfig)}
    keys |= set(_DECODER_ALIASES)
    return frozenset(keys)


def check_config_keys(values: Mapping[str, Any]) -> None:
    """Reject keys no configuration section understands.

    Raises:
        ConfigError: Naming the first unknown key.
    """
    known = known_config_keys()
    for key in values:
        if key.lower() not in known:
            raise ConfigError(f"unknown config key: {key}")


_DECODER_ALIASES: dict[str, str] = {
    "decoder_head": "head",
    "decoder_layers": "head_layers",
    "decoder_use_gru": "use_gru",
}


def _coerce(key: str, raw: Any, current: Any) -> Any:
    """Convert ``raw`` to the type of the field's current value."""
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(current, bool):
            lowered = text.lower()
            if lowered in _TRUE_WORDS:
                return True
            if lowered in _FALSE_WORDS:
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
    except ValueError as error:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from error
    return text
