import json

import pytest

from hmic.config import RunConfig, save_run_config
from hmic.datagen import (
    AttributeSpec,
    ClipCounts,
    MachineSpec,
    SectionSpec,
    SynthSpec,
    generate,
)
from hmic.model import ModelConfig
from hmic.training import TrainConfig


def make_tiny_spec(seed=7):
    """Two sections, one attribute with two values; short clips for fast tests."""
    counts = ClipCounts(
        train_source=6,
        train_target=2,
        test_normal_source=4,
        test_anomalous_source=4,
        test_normal_target=3,
        test_anomalous_target=3,
    )
    sections = tuple(
        SectionSpec(
            section_id=s,
            attributes=(
                AttributeSpec(
                    name="spd",
                    source_values=("A", "B"),
                    target_values=(),
                    tones_hz={"A": (600.0 + 300 * s,), "B": (1800.0 + 300 * s,)},
                ),
            ),
            am_rate_hz=4.0 + 3 * s,
            counts=counts,
        )
        for s in range(2)
    )
    return SynthSpec(
        machines=(MachineSpec(name="gizmo", sections=sections),),
        clip_seconds=0.5,
        tone_jitter_cents=10.0,
        seed=seed,
    )


def make_tiny_config(seed=7):
    return RunConfig(
        model=ModelConfig(channels=(4, 8, 16), head_channels=16),
        train=TrainConfig(epochs=4, batch_size=8, seed=seed),
    )


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_corpus")
    manifest = generate(make_tiny_spec(), root)
    return root, manifest


@pytest.fixture(scope="session")
def tiny_config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("config") / "run.json"
    save_run_config(make_tiny_config(), path)
    return path
