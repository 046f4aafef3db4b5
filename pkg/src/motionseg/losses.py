"""Objective functions: binary cross-entropy and focal loss with ignore
filtering, plus the decoder's l2 kernel penalty.

Both losses are written with a base-2 logarithm by default (base e is a
uniform ln(2) rescaling). The numpy functions are the reference
implementation with closed-form gradients; training uses the torch
variants below, which compute the same values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch

from .labelspace import Label

log = logging.getLogger(__name__)

EPS = 1e-7


@dataclass
class LossConfig:
    kind: str = "focal"  # "bce" or "focal"
    gamma: float = 2.0
    alpha: float = 0.25
    log_base: float = 2.0  # 2 or e
    l2_factor: float = 0.0005

    def __post_init__(self):
        if self.kind not in ("bce", "focal"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")


def filter_ignore(pred: np.ndarray, gt: np.ndarray):
    """Drop every pixel labeled IGNORE from both sequences, keeping the
    pairing. Returns flat (pred', gt') with gt' in {STATIC, MOTION}."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    keep = gt.ravel() != Label.IGNORE
    return pred.ravel()[keep], gt.ravel()[keep]


def p_t(pred_prob, gt_class):
    """Probability assigned to the true class: p1 for MOTION, 1-p1 else."""
    pred_prob = np.asarray(pred_prob, dtype=np.float64)
    motion = np.asarray(gt_class) == Label.MOTION
    return np.where(motion, pred_prob, 1.0 - pred_prob)


def _clamped_pt(pred, gt):
    return np.clip(p_t(pred, gt), EPS, 1.0)


def bce(pred, gt, log_base: float = 2.0) -> float:
    """Mean of -log(p_t) over non-ignored pixels."""
    pred, gt = filter_ignore(pred, gt)
    if pred.size == 0:
        log.warning("bce: no pixels left after ignore filtering, loss is 0")
        return 0.0
    pt = _clamped_pt(pred, gt)
    return float(np.mean(-np.log(pt) / math.log(log_base)))


def focal(pred, gt, gamma: float = 2.0, alpha: float = 0.25,
          log_base: float = 2.0) -> float:
    """Mean of -alpha * (1 - p_t)^gamma * log(p_t) over non-ignored pixels."""
    pred, gt = filter_ignore(pred, gt)
    if pred.size == 0:
        log.warning("focal: no pixels left after ignore filtering, loss is 0")
        return 0.0
    pt = _clamped_pt(pred, gt)
    return float(np.mean(-alpha * (1.0 - pt) ** gamma * np.log(pt) / math.log(log_base)))


def loss_value(pred, gt, config: LossConfig) -> float:
    if config.kind == "bce":
        return bce(pred, gt, config.log_base)
    return focal(pred, gt, config.gamma, config.alpha, config.log_base)


def focal_grad_p1(pred, gt, gamma: float = 2.0, alpha: float = 0.25,
                  log_base: float = 2.0) -> np.ndarray:
    """Closed-form d(per-pixel focal loss)/d(p1), elementwise.

    For gamma = 0 and alpha = 1 this is the BCE gradient.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt)
    pt = _clamped_pt(pred, gt)
    ln_b = math.log(log_base)
    one_minus = 1.0 - pt
    if gamma == 0:
        d_pt = -alpha / (pt * ln_b)
    else:
        d_pt = -alpha * (
            -gamma * one_minus ** (gamma - 1.0) * np.log(pt) / ln_b
            + one_minus ** gamma / (pt * ln_b)
        )
    sign = np.where(np.asarray(gt) == Label.MOTION, 1.0, -1.0)
    return d_pt * sign


def bce_grad_p1(pred, gt, log_base: float = 2.0) -> np.ndarray:
    return focal_grad_p1(pred, gt, gamma=0.0, alpha=1.0, log_base=log_base)


# torch variants used inside the training loop ------------------------------

def torch_loss(pred: torch.Tensor, gt: torch.Tensor, config: LossConfig) -> torch.Tensor:
    """Ignore-filtered loss on probability predictions, differentiable.

    pred: probabilities in [0,1]; gt: integer label mask with IGNORE pixels.
    An all-ignore batch contributes a zero loss (with a warning) so fully
    non-ROI frames do not abort training.
    """
    keep = gt != int(Label.IGNORE)
    if not torch.any(keep):
        log.warning("torch_loss: no pixels left after ignore filtering, loss is 0")
        return pred.sum() * 0.0
    p1 = pred[keep]
    motion = (gt[keep] == int(Label.MOTION)).to(p1.dtype)
    pt = torch.clamp(motion * p1 + (1.0 - motion) * (1.0 - p1), min=EPS, max=1.0)
    log_pt = torch.log(pt) / math.log(config.log_base)
    if config.kind == "bce":
        per_pixel = -log_pt
    else:
        per_pixel = -config.alpha * (1.0 - pt) ** config.gamma * log_pt
    return per_pixel.mean()


def l2_penalty(graph, l2_factor: float) -> float:
    """l2_factor times the summed squared kernel weights of exactly the
    layers flagged for regularization.

    `graph` is either a model exposing l2_regularized_kernels() or a plain
    iterable of kernel arrays/tensors.
    """
    kernels = graph.l2_regularized_kernels() if hasattr(graph, "l2_regularized_kernels") else graph
    total = 0.0
    for k in kernels:
        if isinstance(k, torch.Tensor):
            total += float((k.detach() ** 2).sum())
        else:
            total += float(np.sum(np.asarray(k, dtype=np.float64) ** 2))
    return l2_factor * total


def torch_l2_penalty(graph, l2_factor: float) -> torch.Tensor:
    """Differentiable version of l2_penalty for the training step."""
    kernels = list(graph.l2_regularized_kernels())
    if not kernels:
        return torch.zeros(())
    return l2_factor * sum((k ** 2).sum() for k in kernels)
