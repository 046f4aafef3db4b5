"""Torch implementation of the segmentation graph described by model.py.

The module dict is built straight from the layer table, so layer names,
shapes and trainable flags match the reports. The per-frame encoder is one
set of modules applied to all n streams (weight sharing via reshape).
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .model import (L2_LAYERS, VGG_LAYERS, ModelConfig, build_layer_table,
                    layer_by_name)


class WeightImportError(RuntimeError):
    pass


def _make_module(spec, dropout_rate: float) -> nn.Module | None:
    if spec.kind == "conv2d":
        k = spec.kernel[0]
        return nn.Conv2d(spec.in_channels, spec.out_channels, k, padding=k // 2)
    if spec.kind == "conv3d":
        return nn.Conv3d(spec.in_channels, spec.out_channels, spec.kernel, padding=1)
    if spec.kind == "conv2d_transposed":
        k = spec.kernel[0]
        if spec.stride == 2:
            return nn.ConvTranspose2d(spec.in_channels, spec.out_channels, k,
                                      stride=2, padding=k // 2, output_padding=1)
        return nn.ConvTranspose2d(spec.in_channels, spec.out_channels, k, padding=k // 2)
    if spec.kind == "maxpool":
        return nn.MaxPool2d(2)
    if spec.kind == "dropout":
        return nn.Dropout(dropout_rate)
    if spec.kind == "batchnorm":
        return nn.BatchNorm2d(spec.in_channels)
    return None  # concat has no parameters or module


# EC2 layers applied sequentially per frame, in execution order.
_EC2_SEQUENCE = ("BatchNorm_2", "Conv2D_3", "Conv2D_4", "MaxPooling_2",
                 "BatchNorm_3", "Conv2D_5", "Conv2D_6", "Conv2D_7",
                 "BatchNorm_4", "Conv2D_8", "Dropout_1", "Conv2D_9",
                 "Dropout_2", "Conv2D_10", "Dropout_3", "BatchNorm_5",
                 "Conv2D_11", "Conv2D_12")

_DECODER_SEQUENCE = ("BatchNorm_7", "Conv2DT_1", "Conv2DT_2", "Conv2DT_3",
                     "BatchNorm_8", "Conv2DT_4", "Conv2DT_5", "Conv2DT_6",
                     "BatchNorm_9", "Conv2DT_7", "Conv2DT_8", "Conv2DT_9",
                     "BatchNorm_10", "Conv2DT_10", "Conv2DT_11")


class MotionSegNet(nn.Module):
    """Maps n input frames (B, n, h, w, 3) to a probability mask (B, h, w)."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        torch.manual_seed(config.init_seed)
        self.config = config
        self._table = build_layer_table(config)
        self.layers = nn.ModuleDict()
        self._activation = {}
        for spec in self._table:
            module = _make_module(spec, config.dropout_rate)
            if module is not None:
                self.layers[spec.name] = module
            self._activation[spec.name] = spec.activation
        self._apply_freezing()

    def layer_table(self):
        return self._table

    def _apply_freezing(self):
        for name in VGG_LAYERS:
            if name in self.layers:
                for p in self.layers[name].parameters():
                    p.requires_grad = not self.config.freeze_vgg

    def _run(self, name: str, x: torch.Tensor) -> torch.Tensor:
        x = self.layers[name](x)
        act = self._activation.get(name, "none")
        if act == "relu":
            x = torch.relu(x)
        elif act == "sigmoid":
            x = torch.sigmoid(x)
        return x

    def _frames_to_temporal(self, x, batch, n):
        # (B*n, C, h, w) -> (B, C, n, h, w)
        c, h, w = x.shape[1:]
        return x.reshape(batch, n, c, h, w).permute(0, 2, 1, 3, 4)

    def _temporal_to_frames(self, x):
        # (B, C, n, h, w) -> (B*n, C, h, w)
        b, c, n, h, w = x.shape
        return x.permute(0, 2, 1, 3, 4).reshape(b * n, c, h, w)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 5 or x.shape[1] != self.config.n or x.shape[4] != 3:
            raise ValueError(
                f"expected input (B, {self.config.n}, h, w, 3), got {tuple(x.shape)}"
            )
        batch, n = x.shape[0], x.shape[1]
        y = x.permute(0, 1, 4, 2, 3).reshape(batch * n, 3, x.shape[2], x.shape[3])

        # EC1, shared across streams
        y = self._run("Conv2D_1", y)
        y = self._run("Conv2D_2", y)
        y = self._run("MaxPooling_1", y)
        if "BatchNorm_1" in self.layers:
            y = self._run("BatchNorm_1", y)

        # low-level spatio-temporal stage
        if self.config.use_low_level_conv3d:
            y = self._frames_to_temporal(y, batch, n)
            y = self._run("Conv3D_1", y)
            y = self._run("Conv3D_2", y)
            y = self._temporal_to_frames(y)

        ec2_input = y
        taps = {}
        for name in _EC2_SEQUENCE:
            if name not in self.layers:
                continue
            y = self._run(name, y)
            taps[name] = y

        if self.config.use_fusion:
            pooled = self._run("MaxPooling_3", ec2_input)
            y = torch.cat([pooled, taps["MaxPooling_2"], taps["Conv2D_7"],
                           taps["Dropout_3"], taps["Conv2D_12"]], dim=1)
        if "BatchNorm_6" in self.layers:
            y = self._run("BatchNorm_6", y)

        # high-level spatio-temporal stage, then the center temporal slice
        y = self._frames_to_temporal(y, batch, n)
        y = self._run("Conv3D_3", y)
        y = self._run("Conv3D_4", y)
        y = self._run("Conv3D_5", y)
        y = y[:, :, n // 2]

        for name in _DECODER_SEQUENCE:
            if name in self.layers:
                y = self._run(name, y)
        return y[:, 0]

    def l2_regularized_kernels(self):
        return [self.layers[name].weight for name in L2_LAYERS if name in self.layers]

    @torch.no_grad()
    def predict_blocks(self, frames: np.ndarray, batch_size: int = 4) -> np.ndarray:
        """Probability masks for an array of blocks (B, n, h, w, 3)."""
        was_training = self.training
        self.eval()
        outs = []
        for i in range(0, len(frames), batch_size):
            chunk = torch.from_numpy(np.ascontiguousarray(frames[i:i + batch_size])).float()
            outs.append(self(chunk).cpu().numpy())
        if was_training:
            self.train()
        return np.concatenate(outs, axis=0)


def build(config: ModelConfig) -> MotionSegNet:
    return MotionSegNet(config)


# pre-trained encoder import ---------------------------------------------------

# torchvision-style state-dict indices of the first seven VGG-16 convolutions
_TORCHVISION_VGG_INDICES = (0, 2, 5, 7, 10, 12, 14)


def _archive_arrays(weights_path) -> dict:
    data = np.load(weights_path)
    return {k: data[k] for k in data.files}


def _lookup(arrays: dict, layer_name: str, vgg_index: int, part: str):
    for key in (f"{layer_name.lower()}.{part}", f"features.{vgg_index}.{part}"):
        if key in arrays:
            return arrays[key]
    raise WeightImportError(f"archive is missing weights for layer {layer_name}")


def import_pretrained_encoder(model: MotionSegNet, weights_path) -> MotionSegNet:
    """Initialize Conv2D_1..Conv2D_7 from a VGG-16 weight archive (.npz).

    Keys may be our layer names (conv2d_1.weight) or torchvision's
    (features.0.weight); channels-last kernels are transposed. Layers are
    frozen afterwards when the model config says so.
    """
    arrays = _archive_arrays(weights_path)
    for vgg_index, name in zip(_TORCHVISION_VGG_INDICES, VGG_LAYERS):
        conv = model.layers[name]
        weight = np.asarray(_lookup(arrays, name, vgg_index, "weight"))
        bias = np.asarray(_lookup(arrays, name, vgg_index, "bias"))
        expected = tuple(conv.weight.shape)
        if weight.shape != expected:
            if weight.ndim == 4 and weight.transpose(3, 2, 0, 1).shape == expected:
                weight = weight.transpose(3, 2, 0, 1)  # channels-last archive
            else:
                raise WeightImportError(
                    f"shape mismatch for {name}: archive {weight.shape}, model {expected}"
                )
        if bias.shape != tuple(conv.bias.shape):
            raise WeightImportError(
                f"shape mismatch for {name} bias: archive {bias.shape}, "
                f"model {tuple(conv.bias.shape)}"
            )
        with torch.no_grad():
            conv.weight.copy_(torch.from_numpy(weight.copy()))
            conv.bias.copy_(torch.from_numpy(bias.copy()))
    model._apply_freezing()
    return model
