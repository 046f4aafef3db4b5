"""Command-line entry points for reproducible runs.

A single YAML run config drives everything; individual commands take the
config plus a few overrides. Exit codes: 0 success, 1 config error,
2 data error, 3 runtime error.
"""

from __future__ import annotations

import csv
import functools
import logging
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import cv2
import numpy as np
import yaml

from . import metrics, postprocess
from .alignment import align_block, align_frame, HomographyError, InsufficientFeaturesError
from .datasets import (DEFAULT_RESIZE, SceneLoadError, SplitSpec, SyntheticConfig,
                       concat_block_tensors, generate_synthetic_scene, load_scene,
                       make_sliding_blocks, make_training_blocks, shuffle_and_split,
                       write_scene)
from .labelspace import (DecodeError, Label, codec_by_name, relabel_lasiesta)
from .losses import LossConfig
from .model import (ModelConfig, count_parameters, receptive_field_report)
from .network import MotionSegNet, import_pretrained_encoder
from .training import (CheckpointError, TrainConfig, checkpoint, restore,
                       train as run_training, validate, write_history)

log = logging.getLogger(__name__)

EXIT_CONFIG_ERROR = 1
EXIT_DATA_ERROR = 2
EXIT_RUNTIME_ERROR = 3


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


_LAYOUT_CODECS = {"cdnet": "CDNET", "lasiesta": "LASIESTA"}


@dataclass
class RunConfig:
    dataset_root: str = "."
    layout: str = "cdnet"
    split: SplitSpec = field(default_factory=SplitSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    alignment: bool = False
    smooth: bool = False
    threshold: float = 0.4
    output_dir: str = "run"
    vgg_weights: str | None = None

    def __post_init__(self):
        if self.layout not in _LAYOUT_CODECS:
            raise ConfigError(f"unknown dataset layout {self.layout!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be in [0, 1]")

    @property
    def codec(self):
        return codec_by_name(_LAYOUT_CODECS[self.layout])


def run_config_to_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d["split"]["development_scenes"] = sorted(cfg.split.development_scenes)
    d["split"]["evaluation_scenes"] = sorted(cfg.split.evaluation_scenes)
    d["model"]["input_hw"] = list(cfg.model.input_hw)
    return d


def run_config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    try:
        if "split" in d:
            s = dict(d["split"])
            s["development_scenes"] = set(s.get("development_scenes", ()))
            s["evaluation_scenes"] = set(s.get("evaluation_scenes", ()))
            d["split"] = SplitSpec(**s)
        if "model" in d:
            m = dict(d["model"])
            if "input_hw" in m:
                m["input_hw"] = tuple(m["input_hw"])
            d["model"] = ModelConfig(**m)
        if "train" in d:
            t = dict(d["train"])
            if "loss" in t:
                t["loss"] = LossConfig(**t["loss"])
            d["train"] = TrainConfig(**t)
        return RunConfig(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read run config {path}: {exc}") from exc
    return run_config_from_dict(data)


def save_run_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(run_config_to_dict(cfg), fh, sort_keys=False)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG_ERROR)
        except (DataError, SceneLoadError, DecodeError) as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA_ERROR)
        except click.exceptions.Exit:
            raise
        except Exception as exc:
            click.echo(f"runtime error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME_ERROR)
    return wrapper


def _scene_dir(cfg: RunConfig, scene_id: str) -> Path:
    path = Path(cfg.dataset_root) / scene_id
    if not path.is_dir():
        raise DataError(f"scene directory {path} does not exist")
    return path


def _load_scene(cfg: RunConfig, scene_id: str):
    category = scene_id.split("/")[0] if "/" in scene_id else "unknown"
    return load_scene(_scene_dir(cfg, scene_id), codec=cfg.codec,
                      resize_to=cfg.model.input_hw, layout=cfg.layout,
                      category=category)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose):
    """Motion-segmentation research toolkit."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--resume", "resume_path", type=click.Path(exists=True), default=None,
              help="Continue from a checkpoint archive.")
@_handle_errors
def cmd_train(config_path, resume_path):
    """Train a model on the configured development scenes."""
    cfg = load_run_config(config_path)
    if not cfg.split.development_scenes:
        raise ConfigError("no development scenes configured")
    run_dir = Path(cfg.output_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)

    tensors = []
    for scene_id in sorted(cfg.split.development_scenes):
        scene = _load_scene(cfg, scene_id)
        tensors.append(make_training_blocks(scene, cfg.model.n))
    blocks = concat_block_tensors(tensors)
    train_blocks, val_blocks = shuffle_and_split(blocks, cfg.split)

    if resume_path:
        model = restore(resume_path, expected_n=cfg.model.n)
    else:
        model = MotionSegNet(cfg.model)
        if cfg.vgg_weights:
            import_pretrained_encoder(model, cfg.vgg_weights)

    model, history = run_training(model, train_blocks, val_blocks, cfg.train,
                                  checkpoint_dir=run_dir / "checkpoints")
    checkpoint(model, run_dir / "best.pt")
    write_history(history, run_dir / "history.csv")
    save_run_config(cfg, run_dir / "config.yaml")
    click.echo(f"run written to {run_dir} ({len(history)} epochs, "
               f"best val_loss {min(r.val_loss for r in history):.5f})")


def _predict_scene(cfg: RunConfig, model: MotionSegNet, scene, out_dir: Path,
                   probabilities: bool, align: bool):
    out_dir.mkdir(parents=True, exist_ok=True)
    for block in make_sliding_blocks(scene, cfg.model.n):
        frames = block.frames
        if align:
            frames = align_block(block).frames
        prob = model.predict_blocks(frames[None])[0]
        if cfg.smooth:
            prob = postprocess.smooth(prob)
        mask = postprocess.threshold(prob, cfg.threshold)
        idx = block.target_index + 1  # frame files are 1-indexed
        cv2.imwrite(str(out_dir / f"bin{idx:06d}.png"), mask * 255)
        if probabilities:
            np.save(out_dir / f"prob{idx:06d}.npy", prob.astype(np.float32))


@main.command("predict")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_id", required=True,
              help="Scene id as <category>/<scene> under the dataset root.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--probabilities", is_flag=True, help="Also write probability masks (.npy).")
@click.option("--align/--no-align", "align_override", default=None,
              help="Override the config's alignment switch.")
@_handle_errors
def cmd_predict(config_path, checkpoint_path, scene_id, out_dir, probabilities,
                align_override):
    """Write one binary mask per eligible frame of a scene."""
    cfg = load_run_config(config_path)
    try:
        model = restore(checkpoint_path, expected_n=cfg.model.n)
    except CheckpointError as exc:
        raise ConfigError(str(exc)) from exc
    scene = _load_scene(cfg, scene_id)
    align = cfg.alignment if align_override is None else align_override
    _predict_scene(cfg, model, scene, Path(out_dir) / scene_id, probabilities, align)
    click.echo(f"masks written to {Path(out_dir) / scene_id}")


_BIN_RE = re.compile(r"bin(\d+)\.png$")


def _scene_counts(pred_dir: Path, gt: np.ndarray, threshold: float):
    total = metrics.ConfusionCounts()
    unpaired = []
    mask_files = sorted(pred_dir.glob("bin*.png"))
    if not mask_files:
        raise DataError(f"no prediction masks in {pred_dir}")
    for path in mask_files:
        idx = int(_BIN_RE.search(path.name).group(1)) - 1
        if not 0 <= idx < len(gt):
            unpaired.append(path.name)
            continue
        mask = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
        if mask is None or mask.shape != gt[idx].shape:
            raise DataError(f"unreadable or mis-sized mask {path}")
        total = total + metrics.count(mask > 127, gt[idx])
    if unpaired:
        raise DataError(f"predictions without matching GT frames in {pred_dir}: "
                        + ", ".join(unpaired))
    return total


@main.command("evaluate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--pred", "pred_root", required=True, type=click.Path(exists=True),
              help="Root of predicted masks, laid out as <category>/<scene>/bin*.png.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@_handle_errors
def cmd_evaluate(config_path, pred_root, out_dir):
    """Per-scene, per-category, and overall metric reports."""
    cfg = load_run_config(config_path)
    pred_root = Path(pred_root)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    scene_dirs = sorted(p for p in pred_root.glob("*/*") if p.is_dir())
    if not scene_dirs:
        raise DataError(f"no <category>/<scene> prediction directories under {pred_root}")
    for scene_pred in scene_dirs:
        scene_id = f"{scene_pred.parent.name}/{scene_pred.name}"
        scene = _load_scene(cfg, scene_id)
        counts = _scene_counts(scene_pred, scene.gt, cfg.threshold)
        rows.append((scene.category, scene.name, counts, metrics.derive(counts)))

    with open(out_dir / "per_scene.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "scene", "tp", "tn", "fp", "fn",
                         "tpr", "tnr", "fpr", "fnr", "precision", "recall",
                         "pwc", "f_measure"])
        for category, name, c, rep in rows:
            writer.writerow([category, name, c.tp, c.tn, c.fp, c.fn,
                             rep.tpr, rep.tnr, rep.fpr, rep.fnr, rep.precision,
                             rep.recall, rep.pwc, rep.f_measure])

    summary = metrics.aggregate([(cat, name, rep) for cat, name, _, rep in rows])
    with open(out_dir / "per_category.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "f_measure"])
        for category, f in summary["per_category"].items():
            writer.writerow([category, f])
    with open(out_dir / "overall.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["overall_f_measure", "undefined_scenes"])
        writer.writerow([summary["overall"], summary["undefined_count"]])
    click.echo(f"overall F = {summary['overall']:.4f} "
               f"({summary['undefined_count']} undefined scenes skipped)")


@main.command("align")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_id", required=True)
@click.option("--homographies", "dump_h", is_flag=True,
              help="Also write estimated 3x3 matrices, row-major, one per line.")
@_handle_errors
def cmd_align(config_path, scene_id, dump_h):
    """Align every frame of a scene onto its center frame; writes aligned
    frames and validity masks next to the originals."""
    cfg = load_run_config(config_path)
    scene = _load_scene(cfg, scene_id)
    out = _scene_dir(cfg, scene_id) / "input_aligned"
    out.mkdir(exist_ok=True)
    target = scene.frames[scene.n_frames // 2]
    h_mats = []
    for t in range(scene.n_frames):
        frame, validity, h_mat = scene.frames[t], None, np.eye(3)
        if t != scene.n_frames // 2:
            try:
                frame, validity, h_mat = align_frame(scene.frames[t], target)
            except (InsufficientFeaturesError, HomographyError) as exc:
                log.warning("frame %d passed through unwarped (%s)", t, exc)
        if validity is None:
            validity = np.ones(frame.shape[:2], dtype=bool)
        h_mats.append(h_mat)
        bgr = cv2.cvtColor((np.clip(frame, 0, 1) * 255).round().astype(np.uint8),
                           cv2.COLOR_RGB2BGR)
        cv2.imwrite(str(out / f"in{t + 1:06d}.jpg"), bgr,
                    [cv2.IMWRITE_JPEG_QUALITY, 97])
        cv2.imwrite(str(out / f"valid{t + 1:06d}.png"),
                    validity.astype(np.uint8) * 255)
    if dump_h:
        with open(out / "homographies.txt", "w") as fh:
            for h_mat in h_mats:
                fh.write(" ".join(f"{v:.10g}" for v in np.asarray(h_mat).ravel()) + "\n")
    click.echo(f"aligned frames written to {out}")


@main.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--pred", "pred_dir", required=True, type=click.Path(exists=True),
              help="Directory of probability masks (prob*.npy) for one scene.")
@click.option("--scene", "scene_id", required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@_handle_errors
def cmd_sweep(config_path, pred_dir, scene_id, out_path):
    """F-measure over the global threshold grid; reports the best T."""
    cfg = load_run_config(config_path)
    scene = _load_scene(cfg, scene_id)
    preds, gts = [], []
    prob_files = sorted(Path(pred_dir).glob("prob*.npy"))
    if not prob_files:
        raise DataError(f"no probability masks (prob*.npy) in {pred_dir}")
    for path in prob_files:
        idx = int(re.search(r"prob(\d+)\.npy$", path.name).group(1)) - 1
        if not 0 <= idx < scene.n_frames:
            raise DataError(f"probability mask {path.name} has no matching GT frame")
        preds.append(np.load(path))
        gts.append(scene.gt[idx])
    best_t, table = postprocess.sweep_threshold(preds, gts)
    lines = [["threshold", "f_measure"]] + [[t, f] for t, f in table]
    if out_path:
        with open(out_path, "w", newline="") as fh:
            csv.writer(fh).writerows(lines)
    for t, f in table:
        click.echo(f"T={t:.1f}  F={f:.4f}")
    click.echo(f"best T = {best_t:.1f}")


def _write_report_csv(rows, out_path):
    if out_path:
        with open(out_path, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    else:
        for row in rows:
            click.echo(",".join(str(v) for v in row))


@main.command("report-params")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@_handle_errors
def cmd_report_params(config_path, out_path):
    """Per-layer parameter counts as CSV (layer, value, trainable)."""
    model_cfg = load_run_config(config_path).model if config_path else ModelConfig()
    from .model import build_layer_table
    report = count_parameters(build_layer_table(model_cfg))
    rows = [["layer", "value", "trainable"]]
    rows += [[name, params, trainable] for name, params, trainable in report.rows]
    rows.append(["total_trainable", report.trainable_total, True])
    rows.append(["total_frozen", report.frozen_total, False])
    _write_report_csv(rows, out_path)


@main.command("report-rf")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@_handle_errors
def cmd_report_rf(config_path, out_path):
    """Encoder receptive fields as CSV (layer, value, trainable)."""
    model_cfg = load_run_config(config_path).model if config_path else ModelConfig()
    from .model import build_layer_table, layer_by_name
    table = build_layer_table(model_cfg)
    rows = [["layer", "value", "trainable"]]
    rows += [[name, rf, layer_by_name(table, name).trainable]
             for name, rf in receptive_field_report(table)]
    _write_report_csv(rows, out_path)


@main.command("make-synthetic")
@click.option("--out", "out_root", required=True, type=click.Path())
@click.option("--name", default="scene01")
@click.option("--category", default="synthetic")
@click.option("--frames", default=30, type=int)
@click.option("--height", default=64, type=int)
@click.option("--width", default=64, type=int)
@click.option("--objects", default=1, type=int)
@click.option("--camera", default="none", type=click.Choice(["none", "pan", "jitter"]))
@click.option("--pan-dx", default=3, type=int)
@click.option("--seed", default=0, type=int)
@_handle_errors
def cmd_make_synthetic(out_root, name, category, frames, height, width, objects,
                       camera, pan_dx, seed):
    """Generate a synthetic scene and write it in the standard layout."""
    cfg = SyntheticConfig(h=height, w=width, n_frames=frames, object_count=objects,
                          camera_motion=camera, pan_dx=pan_dx, seed=seed)
    scene = generate_synthetic_scene(cfg, name=name, category=category)
    scene_dir = write_scene(scene, out_root)
    click.echo(f"scene written to {scene_dir}")


@main.command("relabel-lasiesta")
@click.option("--gt-dir", "gt_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@_handle_errors
def cmd_relabel_lasiesta(gt_dir, out_dir):
    """Convert color instance GT masks to grayscale static/motion/ignore
    masks in the standard encoding (0/255/170)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    encode = {int(Label.STATIC): 0, int(Label.MOTION): 255, int(Label.IGNORE): 170}
    files = sorted(p for p in Path(gt_dir).iterdir()
                   if p.suffix.lower() in (".png", ".bmp", ".jpg"))
    if not files:
        raise DataError(f"no GT images in {gt_dir}")
    for path in files:
        raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise DataError(f"unreadable GT image {path}")
        if raw.ndim == 3:
            raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
        labels = relabel_lasiesta(raw)
        encoded = np.zeros(labels.shape, dtype=np.uint8)
        for label, value in encode.items():
            encoded[labels == label] = value
        cv2.imwrite(str(out_dir / (path.stem + ".png")), encoded)
    click.echo(f"{len(files)} masks written to {out_dir}")


if __name__ == "__main__":
    main()
