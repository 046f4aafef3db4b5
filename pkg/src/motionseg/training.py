"""Training loop: Adam optimization over shuffled mini-batches of frame
blocks, per-epoch validation (loss + F-measure), patience-based early
stopping with best-weights restoration, and checkpoint archives.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import metrics
from .datasets import BlockTensor
from .labelspace import Label
from .losses import LossConfig, torch_l2_penalty, torch_loss
from .model import ModelConfig
from .network import MotionSegNet

log = logging.getLogger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    mini_batch_size: int = 2
    learning_rate: float = 1e-4
    max_epochs: int = 30
    patience: int = 3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    validation_threshold: float = 0.4

    def __post_init__(self):
        if self.mini_batch_size < 1:
            raise ValueError("mini_batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_f_measure: float
    wall_time: float


class EarlyStopping:
    """Stop once val_loss has not improved for `patience` consecutive
    epochs. Improvement means strictly lower than the best seen so far."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.epochs_since_best = 0
        self._epoch = 0

    def update(self, val_loss: float) -> bool:
        """Record one epoch's val_loss; returns True when training should stop."""
        self._epoch += 1
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = self._epoch
            self.epochs_since_best = 0
        else:
            self.epochs_since_best += 1
        return self.epochs_since_best >= self.patience


def _to_tensors(blocks: BlockTensor, indices=None):
    frames = blocks.blocks if indices is None else blocks.blocks[indices]
    gts = blocks.target_gts if indices is None else blocks.target_gts[indices]
    x = torch.from_numpy(np.ascontiguousarray(frames)).float()
    y = torch.from_numpy(np.ascontiguousarray(gts)).long()
    return x, y


@torch.no_grad()
def validate(model: MotionSegNet, val_blocks: BlockTensor,
             loss_config: LossConfig, threshold: float = 0.4,
             batch_size: int = 4):
    """Forward-only pass over the validation blocks.

    Returns (mean ignore-filtered loss, F-measure of the thresholded
    predictions). F is NaN when no pixel carries a defined label. Model
    weights and mode are left untouched.
    """
    n_blocks = len(val_blocks.blocks)
    if n_blocks == 0:
        raise ValueError("validation set is empty")
    was_training = model.training
    model.eval()
    loss_sum = 0.0
    pixel_count = 0
    preds, gts = [], []
    for i in range(0, n_blocks, batch_size):
        x, y = _to_tensors(val_blocks, slice(i, i + batch_size))
        p = model(x)
        valid = int((y != int(Label.IGNORE)).sum())
        if valid:
            loss_sum += float(torch_loss(p, y, loss_config)) * valid
            pixel_count += valid
        preds.append(p.numpy())
        gts.append(y.numpy())
    if was_training:
        model.train()
    val_loss = loss_sum / pixel_count if pixel_count else 0.0
    if pixel_count == 0:
        log.warning("validate: every pixel is ignored; loss reported as 0")
    pred_arr = np.concatenate(preds)
    gt_arr = np.concatenate(gts).astype(np.uint8)
    counts = metrics.pooled_counts(pred_arr, gt_arr, threshold)
    val_f = metrics.f_measure(counts)
    return val_loss, val_f


def train(model: MotionSegNet, train_blocks: BlockTensor,
          val_blocks: BlockTensor, config: TrainConfig,
          checkpoint_dir=None):
    """Optimize the model; returns (model carrying the best-val_loss
    weights, history of EpochRecord). When checkpoint_dir is given, an
    epoch_%03d archive is written after every epoch."""
    n_train = len(train_blocks.blocks)
    if n_train == 0:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(trainable, lr=config.learning_rate,
                                 betas=(config.beta1, config.beta2),
                                 eps=config.epsilon)
    stopper = EarlyStopping(config.patience)
    best_state = None
    history: list[EpochRecord] = []
    for epoch in range(1, config.max_epochs + 1):
        start = time.monotonic()
        model.train()
        order = rng.permutation(n_train)
        loss_sum = 0.0
        for i in range(0, n_train, config.mini_batch_size):
            batch = order[i:i + config.mini_batch_size]
            x, y = _to_tensors(train_blocks, batch)
            optimizer.zero_grad()
            pred = model(x)
            data_loss = torch_loss(pred, y, config.loss)
            loss = data_loss + torch_l2_penalty(model, config.loss.l2_factor)
            loss.backward()
            optimizer.step()
            loss_sum += float(data_loss.detach()) * len(batch)
        train_loss = loss_sum / n_train
        val_loss, val_f = validate(model, val_blocks, config.loss,
                                   config.validation_threshold)
        history.append(EpochRecord(epoch, train_loss, val_loss, val_f,
                                   time.monotonic() - start))
        log.info("epoch %d: train_loss=%.5f val_loss=%.5f val_F=%.4f",
                 epoch, train_loss, val_loss, val_f)
        improved = val_loss < stopper.best
        stop = stopper.update(val_loss)
        if improved:
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        if checkpoint_dir is not None:
            checkpoint(model, Path(checkpoint_dir) / f"epoch_{epoch:03d}.pt")
        if stop:
            log.info("early stopping after epoch %d (best epoch %d)",
                     epoch, stopper.best_epoch)
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    return model, history


def write_history(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_f_measure", "wall_time"])
        for rec in history:
            writer.writerow([rec.epoch, rec.train_loss, rec.val_loss,
                             rec.val_f_measure, rec.wall_time])


def checkpoint(model: MotionSegNet, path) -> None:
    torch.save({
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "model_config": asdict(model.config),
        "state_dict": model.state_dict(),
    }, path)


def restore(path, expected_n: int | None = None) -> MotionSegNet:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "schema_version" not in payload:
        raise CheckpointError(f"{path} is not a recognized checkpoint archive")
    if payload["schema_version"] != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointError(
            f"checkpoint schema {payload['schema_version']} is not supported "
            f"(expected {CHECKPOINT_SCHEMA_VERSION})"
        )
    cfg_dict = dict(payload["model_config"])
    cfg_dict["input_hw"] = tuple(cfg_dict["input_hw"])
    cfg = ModelConfig(**cfg_dict)
    if expected_n is not None and cfg.n != expected_n:
        raise CheckpointError(f"checkpoint was trained with n={cfg.n}, requested n={expected_n}")
    model = MotionSegNet(cfg)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
