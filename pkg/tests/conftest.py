from __future__ import annotations

import numpy as np
import pytest

from partcraft.backends.synthetic import (
    PlantedScene,
    SyntheticBackend,
    make_scene,
)
from partcraft.config import PipelineConfig
from partcraft.document import PartSpec, RichPromptDocument
from partcraft.masks import Mask2D, PartMaskSet

# one line per acceptance criterion, replayed after the test summary where
# pytest's capture would otherwise hide them
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def mask_set_from_scene(scene: PlantedScene) -> PartMaskSet:
    """Ground-truth mask set read straight off the planted rectangles."""
    size = scene.size
    covered = np.zeros((size, size), dtype=np.uint8)
    part_masks: dict[str, Mask2D] = {}
    for name, rect in scene.parts.items():
        ind = rect.indicator(size)
        part_masks[name] = Mask2D(ind)
        covered |= ind
    return PartMaskSet(
        object_mask=Mask2D(scene.object_block.indicator(size)),
        part_masks=part_masks,
        localized={name: True for name in scene.parts},
        background_mask=Mask2D(1 - covered),
        scores={name: float(rect.area) for name, rect in scene.parts.items()},
    )


def iou(a: np.ndarray, b: np.ndarray) -> float:
    a = a.astype(bool)
    b = b.astype(bool)
    union = (a | b).sum()
    if union == 0:
        return 1.0
    return float((a & b).sum() / union)


@pytest.fixture
def scene3() -> PlantedScene:
    return make_scene(["head", "wing", "tail"], seed=7)


@pytest.fixture
def doc3(scene3) -> RichPromptDocument:
    return RichPromptDocument(
        base_prompt=scene3.base_prompt,
        object_token=scene3.object_token,
        parts=tuple(PartSpec(name=n) for n in scene3.parts),
    )


@pytest.fixture
def backend3(scene3) -> SyntheticBackend:
    return SyntheticBackend(scene3, num_steps=41)


@pytest.fixture
def quick_config() -> PipelineConfig:
    return PipelineConfig(num_steps=41, t_threshold=24, seed=7)
