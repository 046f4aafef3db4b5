"""Scene loading, 5D blocking, shuffling/splitting, and a synthetic
moving-object scene generator for desk-scale runs.

Scenes follow the CDNet-style directory layout
``<root>/<category>/<scene>/input/in%06d.jpg`` plus
``groundtruth/gt%06d.png`` (1-indexed); the LASIESTA-style layout puts
frames in ``<root>/<scene>/`` and masks in ``<root>/<scene>-GT/``.
Synthetic scenes are written in the CDNet layout so everything downstream
is source-agnostic.
"""

from __future__ import annotations

import colorsys
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .labelspace import CDNET_CODEC, Label, RawAnnotationCodec, relabel

DEFAULT_RESIZE = (240, 320)  # (h, w)


class SceneLoadError(RuntimeError):
    pass


@dataclass
class Scene:
    """Ordered frames (N,h,w,3) in [0,1] paired with label masks (N,h,w)."""

    name: str
    category: str
    frames: np.ndarray
    gt: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.frames) != len(self.gt):
            raise SceneLoadError(
                f"{self.name}: {len(self.frames)} frames but {len(self.gt)} GT masks"
            )
        if self.frames.shape[1:3] != self.gt.shape[1:3]:
            raise SceneLoadError(
                f"{self.name}: frame size {self.frames.shape[1:3]} != GT size {self.gt.shape[1:3]}"
            )

    @property
    def n_frames(self) -> int:
        return len(self.frames)


@dataclass
class FrameBlock:
    """n consecutive frames with the center frame's GT as the target."""

    frames: np.ndarray  # (n, h, w, 3)
    target_gt: np.ndarray  # (h, w)
    target_index: int
    n: int


@dataclass
class BlockTensor:
    """[blocks, n, h, w, c] training tensor with the parallel GT blocks."""

    blocks: np.ndarray  # (B, n, h, w, 3)
    gt_blocks: np.ndarray  # (B, n, h, w)

    @property
    def n(self) -> int:
        return self.blocks.shape[1]

    @property
    def n_blocks(self) -> int:
        return self.blocks.shape[0]

    @property
    def target_gts(self) -> np.ndarray:
        return self.gt_blocks[:, self.n // 2]


@dataclass
class SplitSpec:
    development_scenes: set = field(default_factory=set)
    evaluation_scenes: set = field(default_factory=set)
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        overlap = set(self.development_scenes) & set(self.evaluation_scenes)
        if overlap:
            raise ValueError(f"development and evaluation scenes overlap: {sorted(overlap)}")


def _require_odd(n: int):
    if n < 1 or n % 2 == 0:
        raise ValueError(f"window length n must be odd and >= 1, got {n}")


_FRAME_NUM = re.compile(r"(\d+)")


def _numbered_images(directory: Path) -> list[Path]:
    files = [p for p in directory.iterdir()
             if p.suffix.lower() in (".jpg", ".jpeg", ".png", ".bmp")]

    def key(p):
        m = _FRAME_NUM.search(p.stem)
        return (int(m.group(1)) if m else 0, p.name)

    return sorted(files, key=key)


def _read_frame(path: Path, resize_to) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise SceneLoadError(f"unreadable frame {path}")
    if resize_to is not None:
        h, w = resize_to
        img = cv2.resize(img, (w, h), interpolation=cv2.INTER_LINEAR)
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0


def _read_gt(path: Path, codec: RawAnnotationCodec, resize_to) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise SceneLoadError(f"unreadable GT mask {path}")
    if raw.ndim == 3:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    if resize_to is not None:
        h, w = resize_to
        # nearest-neighbor so the label alphabet is preserved
        raw = cv2.resize(raw, (w, h), interpolation=cv2.INTER_NEAREST)
    return relabel(raw, codec)


def load_scene(root, codec: RawAnnotationCodec = CDNET_CODEC,
               resize_to=DEFAULT_RESIZE, layout: str = "cdnet",
               category: str | None = None) -> Scene:
    """Load one scene directory; frames bilinear-resized, GT nearest."""
    root = Path(root)
    if layout == "cdnet":
        frame_dir, gt_dir = root / "input", root / "groundtruth"
    elif layout == "lasiesta":
        frame_dir, gt_dir = root, root.parent / f"{root.name}-GT"
    else:
        raise ValueError(f"unknown layout {layout!r}")
    if not frame_dir.is_dir() or not gt_dir.is_dir():
        raise SceneLoadError(f"missing frame/GT directory under {root}")
    frame_paths = _numbered_images(frame_dir)
    gt_paths = _numbered_images(gt_dir)
    if not frame_paths:
        raise SceneLoadError(f"no frames in {frame_dir}")
    if len(frame_paths) != len(gt_paths):
        raise SceneLoadError(
            f"{root}: {len(frame_paths)} frames but {len(gt_paths)} GT masks"
        )
    frames = np.stack([_read_frame(p, resize_to) for p in frame_paths])
    gt = np.stack([_read_gt(p, codec, resize_to) for p in gt_paths])
    return Scene(
        name=root.name,
        category=category or (root.parent.name if layout == "cdnet" else "default"),
        frames=frames,
        gt=gt,
    )


def make_training_blocks(scene: Scene, n: int) -> BlockTensor:
    """floor(N/n) non-overlapping blocks of n cohesive frames, in order."""
    _require_odd(n)
    n_blocks = scene.n_frames // n
    if n_blocks == 0:
        raise ValueError(f"scene {scene.name} has {scene.n_frames} frames, needs >= {n}")
    usable = n_blocks * n
    blocks = scene.frames[:usable].reshape(n_blocks, n, *scene.frames.shape[1:])
    gt_blocks = scene.gt[:usable].reshape(n_blocks, n, *scene.gt.shape[1:])
    return BlockTensor(blocks=blocks, gt_blocks=gt_blocks)


def make_sliding_blocks(scene: Scene, n: int) -> list[FrameBlock]:
    """One stride-1 block per eligible target frame; the first and last
    (n-1)/2 frames have no block."""
    _require_odd(n)
    half = (n - 1) // 2
    if scene.n_frames < n:
        raise ValueError(f"scene {scene.name} has {scene.n_frames} frames, needs >= {n}")
    blocks = []
    for t in range(half, scene.n_frames - half):
        blocks.append(FrameBlock(
            frames=scene.frames[t - half:t + half + 1],
            target_gt=scene.gt[t],
            target_index=t,
            n=n,
        ))
    return blocks


def concat_block_tensors(tensors) -> BlockTensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("no block tensors to concatenate")
    return BlockTensor(
        blocks=np.concatenate([t.blocks for t in tensors], axis=0),
        gt_blocks=np.concatenate([t.gt_blocks for t in tensors], axis=0),
    )


def shuffle_and_split(tensor: BlockTensor, spec: SplitSpec):
    """Seeded permutation of the block axis, then an 80/20-style split."""
    if tensor.n_blocks == 0:
        raise ValueError("empty block tensor")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(tensor.n_blocks)
    blocks = tensor.blocks[perm]
    gt_blocks = tensor.gt_blocks[perm]
    n_train = int(round(tensor.n_blocks * (1.0 - spec.validation_fraction)))
    n_train = min(max(n_train, 0), tensor.n_blocks)
    train = BlockTensor(blocks[:n_train], gt_blocks[:n_train])
    val = BlockTensor(blocks[n_train:], gt_blocks[n_train:])
    return train, val


# synthetic scenes -----------------------------------------------------------

@dataclass
class SyntheticConfig:
    h: int = 64
    w: int = 64
    n_frames: int = 30
    object_count: int = 1
    speed: float = 2.0
    shapes: str = "mixed"  # "mixed" | "rect" | "ellipse"
    camera_motion: str = "none"  # "none" | "pan" | "jitter"
    pan_dx: int = 0
    pan_dy: int = 0
    jitter_sigma: float = 1.0
    seed: int = 0


def _textured_background(rng, h, w):
    # two noise octaves: the coarse one gives smooth shading, the fine one
    # keeps enough corner-like structure for feature detectors to latch onto
    coarse = cv2.GaussianBlur(rng.normal(size=(h, w, 3)).astype(np.float32), (0, 0), 3.0)
    fine = cv2.GaussianBlur(rng.normal(size=(h, w, 3)).astype(np.float32), (0, 0), 0.8)
    bg = coarse + 0.4 * fine
    bg -= bg.min()
    bg /= max(bg.max(), 1e-9)
    return (0.15 + 0.7 * bg).astype(np.float32)


def _window_offsets(cfg: SyntheticConfig, rng) -> np.ndarray:
    if cfg.camera_motion == "none":
        return np.zeros((cfg.n_frames, 2), dtype=np.int64)
    if cfg.camera_motion == "pan":
        t = np.arange(cfg.n_frames)
        return np.stack([t * cfg.pan_dx, t * cfg.pan_dy], axis=1)
    if cfg.camera_motion == "jitter":
        off = np.round(rng.normal(scale=cfg.jitter_sigma, size=(cfg.n_frames, 2))).astype(np.int64)
        off[0] = 0
        return off
    raise ValueError(f"unknown camera_motion {cfg.camera_motion!r}")


def _bounce(p: float, low: float, high: float) -> float:
    """Reflect a coordinate into [low, high] (triangle-wave folding)."""
    span = high - low
    if span <= 0:
        return low
    q = (p - low) % (2.0 * span)
    return low + (span - abs(q - span))


def generate_synthetic_scene(cfg: SyntheticConfig, name: str = "synthetic",
                             category: str = "synthetic") -> Scene:
    """Rectangles and ellipses translating over a textured background.

    Camera motion is an integer window translation over a larger canvas, so
    the per-frame GT and the frame-to-frame homographies are exact. The
    offsets and homographies are recorded in scene.meta as oracle metadata.
    """
    if cfg.h < 16 or cfg.w < 16 or cfg.n_frames < 1:
        raise ValueError("degenerate synthetic config")
    rng = np.random.default_rng(cfg.seed)
    offsets = _window_offsets(cfg, rng)
    margin = int(np.abs(offsets).max()) + 4
    ch, cw = cfg.h + 2 * margin, cfg.w + 2 * margin
    canvas = _textured_background(rng, ch, cw)

    objects = []
    for i in range(cfg.object_count):
        size = int(rng.integers(max(6, cfg.h // 4), max(8, cfg.h // 2)))
        if size >= min(cfg.h, cfg.w) - 4:
            raise ValueError("object does not fit inside the frame")
        x0 = margin + int(rng.integers(1, cfg.w - size - 1))
        y0 = margin + int(rng.integers(1, cfg.h - size - 1))
        angle = rng.uniform(0, 2 * np.pi)
        vx, vy = cfg.speed * math.cos(angle), cfg.speed * math.sin(angle)
        # fully saturated hue: always contrasts with the mid-tone textured
        # background, and a continuous hue distribution keeps unseen scenes'
        # colors inside the range spanned by any small training corpus
        hue = float(rng.uniform(0.0, 1.0))
        color = np.array(colorsys.hsv_to_rgb(hue, 1.0, 1.0), dtype=np.float32)
        if cfg.shapes == "mixed":
            shape = "rect" if i % 2 == 0 else "ellipse"
        elif cfg.shapes in ("rect", "ellipse"):
            shape = cfg.shapes
        else:
            raise ValueError(f"unknown shapes {cfg.shapes!r}")
        objects.append({"x": x0, "y": y0, "vx": vx, "vy": vy, "size": size,
                        "color": color, "shape": shape})

    frames = np.empty((cfg.n_frames, cfg.h, cfg.w, 3), dtype=np.float32)
    gt = np.empty((cfg.n_frames, cfg.h, cfg.w), dtype=np.uint8)
    for t in range(cfg.n_frames):
        world = canvas.copy()
        motion = np.zeros((ch, cw), dtype=bool)
        for obj in objects:
            s = obj["size"]
            # reflect off the canvas bounds so a labeled object never stalls
            x = int(round(_bounce(obj["x"] + t * obj["vx"], 0, cw - s - 1)))
            y = int(round(_bounce(obj["y"] + t * obj["vy"], 0, ch - s - 1)))
            footprint = np.zeros((ch, cw), dtype=np.uint8)
            if obj["shape"] == "rect":
                footprint[y:y + s, x:x + s] = 1
            else:
                cv2.ellipse(footprint, (x + s // 2, y + s // 2), (s // 2, s // 3),
                            0, 0, 360, 1, thickness=-1)
            world[footprint.astype(bool)] = obj["color"]
            motion |= footprint.astype(bool)
        ox, oy = margin + int(offsets[t, 0]), margin + int(offsets[t, 1])
        frames[t] = world[oy:oy + cfg.h, ox:ox + cfg.w]
        gt[t] = np.where(motion[oy:oy + cfg.h, ox:ox + cfg.w],
                         np.uint8(Label.MOTION), np.uint8(Label.STATIC))

    homographies = []
    for t in range(1, cfg.n_frames):
        # maps frame t-1 coordinates onto frame t coordinates
        h_mat = np.eye(3)
        h_mat[0, 2] = float(offsets[t - 1, 0] - offsets[t, 0])
        h_mat[1, 2] = float(offsets[t - 1, 1] - offsets[t, 1])
        homographies.append(h_mat)
    return Scene(name=name, category=category, frames=frames, gt=gt,
                 meta={"window_offsets": offsets,
                       "consecutive_homographies": homographies,
                       "objects": objects,
                       "config": cfg})


# disk round-trip in the CDNet layout ----------------------------------------

_GT_ENCODE = {int(Label.STATIC): 0, int(Label.MOTION): 255, int(Label.IGNORE): 170}


def write_scene(scene: Scene, root) -> Path:
    """Write a scene in the CDNet layout (inputs as jpg, GT as png with the
    CDNet grayscale codes). Returns the scene directory."""
    scene_dir = Path(root) / scene.category / scene.name
    (scene_dir / "input").mkdir(parents=True, exist_ok=True)
    (scene_dir / "groundtruth").mkdir(parents=True, exist_ok=True)
    for t in range(scene.n_frames):
        bgr = cv2.cvtColor((scene.frames[t] * 255.0).round().astype(np.uint8),
                           cv2.COLOR_RGB2BGR)
        cv2.imwrite(str(scene_dir / "input" / f"in{t + 1:06d}.jpg"), bgr,
                    [cv2.IMWRITE_JPEG_QUALITY, 97])
        encoded = np.zeros_like(scene.gt[t], dtype=np.uint8)
        for label, value in _GT_ENCODE.items():
            encoded[scene.gt[t] == label] = value
        cv2.imwrite(str(scene_dir / "groundtruth" / f"gt{t + 1:06d}.png"), encoded)
    return scene_dir
