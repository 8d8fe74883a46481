# tests/conftest.py — OneDF v1
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from runtime.config import ModelConfig, RunConfig, config_from_dict  # noqa: E402
from tools.synthdata import generate_dataset  # noqa: E402

TINY = {
    "model": {"num_landmarks": 7, "feature_dim": 8, "heatmap_dim": 16, "window": 3,
              "blocks": 1, "heads": 2, "image_size": 32},
    "synthetic": {"sequence_length": 6, "patch_min": 6, "patch_max": 10, "occlusion_rate": 0.3},
    "train": {"epochs": 2, "batch_size": 2, "learning_rate": 0.003},
    "split": {"train": 2, "val": 1, "test": 1},
    "ablation": {"settings": ["BL", "BL+TE"], "window_sweep": [], "mixers": [], "seeds": [0, 1]},
}


@pytest.fixture
def small_model() -> ModelConfig:
    """Tiny full model: every stage on, 7 landmarks so the generic partition has one per group."""
    return ModelConfig(num_landmarks=7, feature_dim=8, heatmap_dim=16, window=3, blocks=2, heads=2, image_size=32)


@pytest.fixture
def tiny_run() -> RunConfig:
    return config_from_dict(TINY)


@pytest.fixture(scope="session")
def dataset(tmp_path_factory) -> Path:
    """train/val/test SYNQ files matching TINY's model."""
    root = tmp_path_factory.mktemp("data")
    generate_dataset(config_from_dict(TINY), root)
    return root
