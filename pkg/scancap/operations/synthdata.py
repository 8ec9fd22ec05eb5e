"""Procedural moving-shape videos, their captions and frozen patch encoders.

A scene is fully described by its manifest record; frames, features and the
caption are regenerated from it on demand and are bitwise reproducible.
"""

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from scancap.operations.errors import ConfigError, DataError
from scancap.operations.interface import ManifestInterface
from scancap.operations.model import fuse_dual_features
from scancap.operations.tokenizer import COLORS, DIRECTIONS, EVENT_WORDS, EVENTS, SHAPES

logger = logging.getLogger(__name__)

RGB = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
}
STEP = {"left": (0, -1), "right": (0, 1), "up": (-1, 0), "down": (1, 0)}
FLASH_LEVEL = 0.5
MAX_SPEED = 2
FIT_ATTEMPTS = 3
EVAL_SEED_OFFSET = 500_000


def _shape_mask(shape: str) -> np.ndarray:
    if shape == "square":
        return np.ones((5, 5), dtype=bool)
    if shape == "circle":
        r, c = np.mgrid[:5, :5]
        return (r - 2) ** 2 + (c - 2) ** 2 <= 6.25
    return np.ones((3, 7), dtype=bool)


class SyntheticScene(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    sample_seed: int
    shape: Literal["square", "circle", "bar"]
    color: Literal["red", "green", "blue", "yellow"]
    direction: Literal["left", "right", "up", "down"]
    speed: int = Field(ge=0)
    event: Literal["none", "vanish", "flash"] = "none"
    event_frame: int = -1
    origin_row: int = 0
    origin_col: int = 0

    def parameters(self) -> tuple:
        """Everything except the seed; used to keep splits disjoint."""
        return tuple(v for k, v in self.model_dump().items() if k != "sample_seed")


def event_start(T: int) -> int:
    """First frame (0-based) an event may occupy: the final quarter."""
    return (3 * T) // 4


def _fits(scene: SyntheticScene, speed: int, T: int, H: int, W: int) -> bool:
    h, w = _shape_mask(scene.shape).shape
    dr, dc = STEP[scene.direction]
    for t in (0, T - 1):
        r = scene.origin_row + dr * speed * t
        c = scene.origin_col + dc * speed * t
        if r < 0 or c < 0 or r + h > H or c + w > W:
            return False
    return True


def fit_scene(scene: SyntheticScene, T: int, H: int, W: int) -> SyntheticScene:
    """Halve the speed until the shape stays inside the frame, at most 3 tries."""
    speed = scene.speed
    for attempt in range(FIT_ATTEMPTS):
        if _fits(scene, speed, T, H, W):
            if speed != scene.speed:
                logger.warning(
                    "scene %d: speed reduced from %d to %d to stay in frame",
                    scene.sample_seed,
                    scene.speed,
                    speed,
                )
                return scene.model_copy(update={"speed": speed})
            return scene
        speed //= 2
    raise DataError(
        f"scene {scene.sample_seed}: {scene.shape} leaves the {H}x{W} frame "
        f"after {FIT_ATTEMPTS} attempts"
    )


def render_frames(scene: SyntheticScene, T: int, H: int, W: int) -> np.ndarray:
    """T frames of shape (H, W, 3) with values in [0, 1]."""
    scene = fit_scene(scene, T, H, W)
    if scene.event != "none" and not event_start(T) <= scene.event_frame < T:
        raise DataError(
            f"scene {scene.sample_seed}: event frame {scene.event_frame} outside the "
            f"final quarter of {T} frames"
        )
    mask = _shape_mask(scene.shape)
    h, w = mask.shape
    dr, dc = STEP[scene.direction]
    frames = np.zeros((T, H, W, 3))
    for t in range(T):
        if scene.event == "vanish" and t >= scene.event_frame:
            continue
        r = scene.origin_row + dr * scene.speed * t
        c = scene.origin_col + dc * scene.speed * t
        frames[t, r : r + h, c : c + w][mask] = RGB[scene.color]
    if scene.event == "flash":
        frames[scene.event_frame] = np.clip(frames[scene.event_frame] + FLASH_LEVEL, 0.0, 1.0)
    return frames


def caption_of(scene: SyntheticScene) -> str:
    caption = f"a {scene.color} {scene.shape} moves {scene.direction}"
    if scene.event != "none":
        caption += f" then {EVENT_WORDS[scene.event]}"
    return caption


def caption_grammar() -> list[str]:
    """Every caption the generator can produce."""
    captions = []
    for color in COLORS:
        for shape in SHAPES:
            for direction in DIRECTIONS:
                for event in EVENTS:
                    scene = SyntheticScene(
                        sample_seed=0,
                        shape=shape,
                        color=color,
                        direction=direction,
                        speed=0,
                        event=event,
                    )
                    captions.append(caption_of(scene))
    return captions


def draw_scene(sample_seed: int, T: int, H: int, W: int) -> SyntheticScene:
    rng = np.random.default_rng(sample_seed)
    shape = SHAPES[rng.integers(len(SHAPES))]
    color = COLORS[rng.integers(len(COLORS))]
    direction = DIRECTIONS[rng.integers(len(DIRECTIONS))]
    event = EVENTS[rng.integers(len(EVENTS))] if T >= 2 else "none"
    h, w = _shape_mask(shape).shape
    if h > H or w > W:
        raise ConfigError(f"a {h}x{w} {shape} does not fit a {H}x{W} frame")
    dr, dc = STEP[direction]
    along = W - w if dc else H - h
    max_speed = min(MAX_SPEED, along // max(T - 1, 1))
    speed = int(rng.integers(1, max_speed + 1)) if max_speed >= 1 else 0
    travel = speed * (T - 1)
    start = int(rng.integers(0, along - travel + 1))
    if dr < 0 or dc < 0:
        start += travel
    across = int(rng.integers(0, (H - h if dc else W - w) + 1))
    row, col = (across, start) if dc else (start, across)
    event_frame = int(rng.integers(event_start(T), T)) if event != "none" else -1
    return SyntheticScene(
        sample_seed=sample_seed,
        shape=shape,
        color=color,
        direction=direction,
        speed=speed,
        event=event,
        event_frame=event_frame,
        origin_row=row,
        origin_col=col,
    )


def make_dataset(
    n: int, seed: int, T: int, H: int, W: int, manifest_interface: ManifestInterface | None = None
) -> list[SyntheticScene]:
    if n < 1:
        raise ConfigError(f"dataset size must be at least 1, got {n}")
    scenes = [draw_scene(seed * 1_000_000 + i, T, H, W) for i in range(n)]
    if manifest_interface is not None:
        manifest_interface.write(scenes, T, H, W)
    return scenes


def make_split(
    n_train: int, n_eval: int, seed: int, T: int, H: int, W: int
) -> tuple[list[SyntheticScene], list[SyntheticScene]]:
    """Train and eval scenes from disjoint seed ranges with no shared parameters."""
    train = make_dataset(n_train, seed, T, H, W)
    taken = {scene.parameters() for scene in train}
    held_out: list[SyntheticScene] = []
    offset = seed * 1_000_000 + EVAL_SEED_OFFSET
    while len(held_out) < n_eval:
        scene = draw_scene(offset, T, H, W)
        offset += 1
        if scene.parameters() in taken:
            continue
        taken.add(scene.parameters())
        held_out.append(scene)
    return train, held_out


# --- frozen encoders -----------------------------------------------------------


@dataclass(frozen=True)
class EncoderStub:
    projection: np.ndarray  # (p * p * 3, d)
    bias: np.ndarray  # (d,)
    patch: int

    @property
    def width(self) -> int:
        return self.projection.shape[1]


def make_encoder_stub(seed: int, patch: int, width: int) -> EncoderStub:
    rng = np.random.default_rng(seed)
    fan_in = patch * patch * 3
    projection = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, width))
    bias = rng.uniform(-0.1, 0.1, size=width)
    projection.flags.writeable = False
    bias.flags.writeable = False
    return EncoderStub(projection=projection, bias=bias, patch=patch)


def patchify(frames: np.ndarray, patch: int) -> np.ndarray:
    """(..., H, W, 3) -> (..., N_p, p * p * 3), patches in row-major grid order."""
    H, W = frames.shape[-3], frames.shape[-2]
    if H % patch or W % patch:
        raise ConfigError(f"frame {H}x{W} is not divisible into {patch}x{patch} patches")
    lead = frames.shape[:-3]
    grid = frames.reshape(lead + (H // patch, patch, W // patch, patch, 3))
    grid = np.moveaxis(grid, -4, -3)
    return grid.reshape(lead + ((H // patch) * (W // patch), patch * patch * 3))


def patchify_encode(frames: np.ndarray, stub: EncoderStub) -> np.ndarray:
    """N_p = H W / p^2 features of width d per frame."""
    return patchify(frames, stub.patch) @ stub.projection + stub.bias


def encode_video(
    frames: np.ndarray, semantic: EncoderStub, detail: EncoderStub
) -> np.ndarray:
    """(T, H, W, 3) -> fused (T, N_p, d_s + d_d)."""
    return fuse_dual_features(patchify_encode(frames, semantic), patchify_encode(frames, detail))


def encode_scenes(
    scenes: list[SyntheticScene],
    T: int,
    H: int,
    W: int,
    semantic: EncoderStub,
    detail: EncoderStub,
    dtype=np.float64,
) -> np.ndarray:
    """Feature bank (n, T, N_p, d_v) for a list of scenes."""
    return np.stack(
        [encode_video(render_frames(s, T, H, W), semantic, detail).astype(dtype) for s in scenes]
    )
