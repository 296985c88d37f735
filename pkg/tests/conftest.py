"""
Shared fixtures: small model configurations and generated scenes.

Every network fixture is sized so that one forward pass takes milliseconds;
horizons are shortened to ``T_OBS`` / ``T_FUT`` below.
"""

import pytest

from src.config.train_config import ModelConfig, TrainConfig
from src.scene.generator import GeneratorConfig, generate_dataset, generate_scene

T_OBS = 10
T_FUT = 12


@pytest.fixture
def generator_config() -> GeneratorConfig:
    return GeneratorConfig(t_obs=T_OBS, t_fut=T_FUT, num_agents=3, num_predicted=2)


@pytest.fixture
def model_config() -> ModelConfig:
    return ModelConfig(
        t_obs=T_OBS,
        t_fut=T_FUT,
        d_model=16,
        num_heads=2,
        d_latent=8,
        num_modes=3,
        points_per_polyline=6,
        kan_grid_size=5,
        diffusion_hidden=16,
        diffusion_blocks=1,
        preview_steps=4,
    )


@pytest.fixture
def train_config(model_config: ModelConfig) -> TrainConfig:
    return TrainConfig(diffusion_steps=5, batch_size=2, epochs=1, model=model_config, seed=0)


@pytest.fixture
def stop_start_scene(generator_config: GeneratorConfig):
    return generate_scene("stop_start", 3, generator_config)


@pytest.fixture
def tiny_dataset(generator_config: GeneratorConfig):
    return generate_dataset("stop_start", 3, 0, generator_config)
