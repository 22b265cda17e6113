"""
Frame streams: COIL-20 ingestion in pose order, class-incremental and
shuffled orderings, train/test splitting, and a synthetic temporally
correlated stream for self-contained runs.
"""

import logging
import re
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from pcnta.core.tensor_ops import DTYPE, Tensor
from pcnta.data.pgm import load_pgm
from pcnta.errors import ConfigError, DataError, IngestionError

logger = logging.getLogger(__name__)

# COIL-20 publishes obj<k>__<angle>.png; the converter keeps the stem
COIL20_PATTERN = re.compile(r"^obj(\d+)__(\d+)\.pgm$")
COIL20_OBJECTS = 20
COIL20_VIEWS = 72


class OrderingMode(str, Enum):
    TEMPORAL = "temporal"
    CLASS_INCREMENTAL = "class_incremental"
    SHUFFLED = "shuffled"


@dataclass(frozen=True)
class Frame:
    image: Tensor
    label: int
    object_id: int
    view_angle_index: int


@dataclass(frozen=True)
class FrameStream:
    frames: tuple[Frame, ...]
    ordering_mode: OrderingMode = OrderingMode.TEMPORAL

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class SplitRule:
    """Views with view_angle_index % test_every == 0 go to the test set; 0 disables the split."""
    test_every: int = 4

    def is_test(self, view: int) -> bool:
        return self.test_every > 0 and view % self.test_every == 0


def one_hot(label: int, n: int) -> Tensor:
    if not 0 <= label < n:
        raise DataError(f"label {label} out of range for {n} classes")
    vector = np.zeros(n, dtype=DTYPE)
    vector[label] = 1.0
    return vector


def order_frames(frames: list[Frame], mode: OrderingMode, seed: int = 0) -> FrameStream:
    """
    temporal: by (object, view), so consecutive frames are neighbouring poses.
    class_incremental: every frame of class k before class k+1, pose order inside a class.
    shuffled: seeded permutation of the temporal order.
    """
    temporal = sorted(frames, key=lambda f: (f.object_id, f.view_angle_index))
    if mode is OrderingMode.CLASS_INCREMENTAL:
        ordered = sorted(temporal, key=lambda f: f.label)
    elif mode is OrderingMode.SHUFFLED:
        permutation = np.random.default_rng(seed).permutation(len(temporal))
        ordered = [temporal[i] for i in permutation]
    else:
        ordered = temporal
    return FrameStream(frames=tuple(ordered), ordering_mode=mode)


def split_frames(frames: list[Frame], rule: SplitRule) -> tuple[list[Frame], list[Frame]]:
    train = [f for f in frames if not rule.is_test(f.view_angle_index)]
    test = [f for f in frames if rule.is_test(f.view_angle_index)]
    return train, test


# ============================================================================
# COIL-20
# ============================================================================

def load_coil20(
    directory: Path | str,
    ordering_mode: OrderingMode = OrderingMode.TEMPORAL,
    split_rule: SplitRule = SplitRule(),
    views_per_object: int = COIL20_VIEWS,
    seed: int = 0,
    num_objects: int = COIL20_OBJECTS,
) -> tuple[FrameStream, FrameStream]:
    """
    Read obj<k>__<angle>.pgm files. Object k becomes label k−1.
    Objects 1..num_objects must each have views 0..views_per_object−1 exactly once.

    Returns:
        (train, test) streams; the test stream is always in temporal order
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"COIL-20 directory not found: {directory}")

    by_key: dict[tuple[int, int], list[Path]] = defaultdict(list)
    for path in sorted(directory.iterdir()):
        match = COIL20_PATTERN.match(path.name)
        if match:
            by_key[(int(match.group(1)), int(match.group(2)))].append(path)

    if not by_key:
        raise DataError(f"no obj<k>__<angle>.pgm files in {directory}")

    duplicates = [f"obj{k}__{a}" for (k, a), paths in sorted(by_key.items()) if len(paths) > 1]
    if duplicates:
        raise IngestionError("duplicate views", duplicates)

    out_of_range = [
        f"obj{k}__{a}" for k, a in sorted(by_key)
        if a >= views_per_object or not 1 <= k <= num_objects
    ]
    if out_of_range:
        raise IngestionError(f"views outside obj1..obj{num_objects}, 0..{views_per_object - 1}", out_of_range)

    present = {k for k, _ in by_key}
    absent = [f"obj{k}" for k in range(1, num_objects + 1) if k not in present]
    if absent:
        raise IngestionError("missing objects", absent)
    missing = [
        f"obj{k}__{a}" for k in sorted(present) for a in range(views_per_object) if (k, a) not in by_key
    ]
    if missing:
        raise IngestionError("missing views", missing)

    frames = []
    for (object_id, view), (path,) in sorted(by_key.items()):
        frames.append(Frame(image=load_pgm(path), label=object_id - 1, object_id=object_id, view_angle_index=view))
    logger.info("loaded %d frames of %d objects from %s", len(frames), num_objects, directory)

    train, test = split_frames(frames, split_rule)
    return order_frames(train, ordering_mode, seed), order_frames(test, OrderingMode.TEMPORAL)


# ============================================================================
# Synthetic stream
# ============================================================================

DRIFT_DIRECTIONS = ((1, 0), (0, 1), (1, 1), (1, -1))


def _class_pattern(rng: np.random.Generator, size: int) -> np.ndarray:
    """A filled rectangle plus a Gaussian blob, both at random class-specific positions."""
    yy, xx = np.mgrid[0:size, 0:size]
    pattern = np.zeros((size, size), dtype=DTYPE)

    rect_h = int(rng.integers(size // 8, size // 3 + 1))
    rect_w = int(rng.integers(size // 8, size // 3 + 1))
    top = int(rng.integers(0, size - rect_h + 1))
    left = int(rng.integers(0, size - rect_w + 1))
    pattern[top:top + rect_h, left:left + rect_w] = rng.uniform(0.5, 1.0)

    cy, cx = rng.uniform(0, size, size=2)
    sigma = size / 10.0
    pattern += rng.uniform(0.5, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma ** 2))
    return np.clip(pattern, 0.0, 1.0)


def synthetic_frames(
    seed: int,
    num_classes: int,
    frames_per_class: int,
    size: int,
    drift_step: int,
) -> list[Frame]:
    """Class c's pattern translated (with wrap-around) by drift_step pixels per frame along a class-specific direction."""
    if size < 16:
        raise ConfigError(f"synthetic frames need size >= 16, got {size}")
    if num_classes < 1 or frames_per_class < 1:
        raise ConfigError("num_classes and frames_per_class must be positive")
    if drift_step < 0:
        raise ConfigError(f"drift_step must be non-negative, got {drift_step}")

    rng = np.random.default_rng(seed)
    frames = []
    for label in range(num_classes):
        pattern = _class_pattern(rng, size)
        dy, dx = DRIFT_DIRECTIONS[label % len(DRIFT_DIRECTIONS)]
        for view in range(frames_per_class):
            shift = view * drift_step
            image = np.roll(pattern, (shift * dy, shift * dx), axis=(0, 1))
            frames.append(Frame(image=image[None, :, :].copy(), label=label, object_id=label + 1, view_angle_index=view))
    return frames


def synthetic_stream(
    seed: int,
    num_classes: int = 20,
    frames_per_class: int = 72,
    size: int = 64,
    drift_step: int = 1,
    ordering_mode: OrderingMode = OrderingMode.TEMPORAL,
    split_rule: SplitRule = SplitRule(),
) -> tuple[FrameStream, FrameStream]:
    """Deterministic stand-in for COIL-20 with tunable temporal correlation; split like COIL-20."""
    frames = synthetic_frames(seed, num_classes, frames_per_class, size, drift_step)
    train, test = split_frames(frames, split_rule)
    return order_frames(train, ordering_mode, seed), order_frames(test, OrderingMode.TEMPORAL)
