"""Declarative description of the motion-segmentation network graph.

The layer table built here is the single source of truth: the torch
network (see network.py) is constructed from it, and the dimension,
parameter-count, and receptive-field reports are derived from it, so the
reports always describe the graph that actually runs.

Layout: a shared per-frame 2D encoder (EC1), a low-level 3D-conv stage, a
deeper per-frame encoder (EC2) whose multi-scale feature maps are fused by
depth-wise concatenation, a high-level 3D-conv stage, and a transposed-conv
decoder (DC) ending in a 1x1 sigmoid layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

# Encoder layers eligible for pre-trained VGG-16 weights; frozen when
# freeze_vgg is set.
VGG_LAYERS = ("Conv2D_1", "Conv2D_2", "Conv2D_3", "Conv2D_4",
              "Conv2D_5", "Conv2D_6", "Conv2D_7")

# Decoder layers whose kernels carry the l2 penalty.
L2_LAYERS = ("Conv2DT_4", "Conv2DT_7")

# Sources concatenated by the fusion layer, in depth order.
FUSION_SOURCES = ("MaxPooling_3", "MaxPooling_2", "Conv2D_7", "Dropout_3", "Conv2D_12")


@dataclass
class ModelConfig:
    n: int = 5
    input_hw: tuple = (240, 320)
    base_filters_scale: float = 1.0
    use_low_level_conv3d: bool = True
    use_fusion: bool = True
    use_batch_norm: bool = True
    dropout_rate: float = 0.3
    freeze_vgg: bool = True
    init_seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.n % 2 == 0:
            raise ValueError(f"n must be odd and >= 1, got {self.n}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        h, w = self.input_hw
        if h % 4 or w % 4:
            raise ValueError(f"input height and width must be divisible by 4, got {h}x{w}")
        if self.base_filters_scale <= 0:
            raise ValueError("base_filters_scale must be positive")


@dataclass
class LayerSpec:
    name: str
    kind: str  # conv2d | conv3d | conv2d_transposed | maxpool | dropout | batchnorm | concat
    in_channels: int
    out_channels: int
    out_hw: tuple
    kernel: tuple = ()  # spatial (kh, kw); conv3d adds temporal extent as kernel[2]
    stride: int = 1
    activation: str = "none"
    trainable: bool = True
    l2_factor: float | None = None
    receptive_field: int | None = None  # encoder path only
    params: int = 0
    fusion_sources: tuple = field(default=())


def _scaled(filters: int, scale: float) -> int:
    if scale == 1.0:
        return filters
    return max(4, int(round(filters * scale / 4.0)) * 4)


def _param_count(kind: str, kernel, cin: int, cout: int) -> int:
    if kind in ("conv2d", "conv2d_transposed", "conv3d"):
        k = 1
        for extent in kernel:
            k *= extent
        return k * cin * cout + cout
    if kind == "batchnorm":
        return 4 * cin
    return 0


def build_layer_table(cfg: ModelConfig) -> list[LayerSpec]:
    """All named layers in execution order with resolved dimensions,
    parameter counts, and encoder receptive fields."""
    rows: list[LayerSpec] = []
    h, w = cfg.input_hw
    state = {"c": 3, "h": h, "w": w, "r": 1, "j": 1, "encoder_done": False}
    l2 = 0.0005  # recorded on the flagged decoder kernels

    def add(name, kind, kernel=(), filters=None, stride=1, activation="none",
            l2_factor=None, rf_k=None, fusion_sources=()):
        cin = state["c"]
        cout = filters if filters is not None else cin
        if stride == 2:
            if kind == "conv2d_transposed":
                state["h"] *= 2
                state["w"] *= 2
            else:
                state["h"] //= 2
                state["w"] //= 2
        if rf_k is not None and not state["encoder_done"]:
            # encoder-path receptive field recurrence
            rf = state["r"] + (rf_k - 1) * state["j"]
            state["r"] = rf
            state["j"] *= stride
        else:
            rf = None
        spec = LayerSpec(
            name=name, kind=kind, in_channels=cin, out_channels=cout,
            out_hw=(state["h"], state["w"]), kernel=kernel, stride=stride,
            activation=activation, trainable=True, l2_factor=l2_factor,
            receptive_field=rf,
            params=_param_count(kind, kernel, cin, cout),
            fusion_sources=fusion_sources,
        )
        rows.append(spec)
        state["c"] = cout
        return spec

    def conv(name, filters, k=3, activation="relu"):
        add(name, "conv2d", (k, k), _scaled(filters, cfg.base_filters_scale),
            activation=activation, rf_k=k)

    def conv3d(name, filters, k=3):
        add(name, "conv3d", (k, k, k), _scaled(filters, cfg.base_filters_scale),
            activation="relu", rf_k=k)

    def bn(name, on_encoder_path=True):
        if cfg.use_batch_norm:
            add(name, "batchnorm", rf_k=1 if on_encoder_path else None)

    # EC1 (shared across the n input streams)
    conv("Conv2D_1", 64)
    conv("Conv2D_2", 64)
    add("MaxPooling_1", "maxpool", (2, 2), stride=2, rf_k=2)
    bn("BatchNorm_1")

    # Low-level spatio-temporal stage
    if cfg.use_low_level_conv3d:
        conv3d("Conv3D_1", 64)
        conv3d("Conv3D_2", 64)

    # state at the EC2 input, needed by the fusion pooling branch
    ec2_input = dict(state)

    # EC2 (shared across streams)
    bn("BatchNorm_2")
    conv("Conv2D_3", 128)
    conv("Conv2D_4", 128)
    add("MaxPooling_2", "maxpool", (2, 2), stride=2, rf_k=2)
    bn("BatchNorm_3")
    conv("Conv2D_5", 256)
    conv("Conv2D_6", 256)
    conv("Conv2D_7", 256)
    bn("BatchNorm_4")
    conv("Conv2D_8", 512)
    add("Dropout_1", "dropout", rf_k=1)
    conv("Conv2D_9", 512)
    add("Dropout_2", "dropout", rf_k=1)
    conv("Conv2D_10", 512)
    add("Dropout_3", "dropout", rf_k=1)
    bn("BatchNorm_5")
    conv("Conv2D_11", 512)
    conv("Conv2D_12", 512)

    if cfg.use_fusion:
        # MaxPooling_3 pools the EC2 input feature maps down to h/4 x w/4
        # so they can join the concatenation; its receptive field continues
        # from the EC2 input, not from Conv2D_12.
        pool3 = LayerSpec(
            name="MaxPooling_3", kind="maxpool",
            in_channels=ec2_input["c"], out_channels=ec2_input["c"],
            out_hw=(ec2_input["h"] // 2, ec2_input["w"] // 2),
            kernel=(2, 2), stride=2,
            receptive_field=ec2_input["r"] + (2 - 1) * ec2_input["j"],
            params=0,
        )
        rows.append(pool3)
        by_name = {s.name: s for s in rows}
        fused_depth = sum(by_name[src].out_channels for src in FUSION_SOURCES)
        add("Concatenate", "concat", filters=fused_depth,
            fusion_sources=FUSION_SOURCES)
        bn("BatchNorm_6", on_encoder_path=False)
    else:
        bn("BatchNorm_6", on_encoder_path=False)
    state["encoder_done"] = True

    # High-level spatio-temporal stage
    conv3d("Conv3D_3", 256)
    conv3d("Conv3D_4", 128)
    conv3d("Conv3D_5", 64)

    # Decoder DC; each block starts by normalizing its input
    def tconv(name, filters, k=1, stride=1, activation="relu", l2_factor=None):
        add(name, "conv2d_transposed", (k, k),
            filters if name == "Conv2DT_11" else _scaled(filters, cfg.base_filters_scale),
            stride=stride, activation=activation, l2_factor=l2_factor)

    bn("BatchNorm_7", on_encoder_path=False)
    tconv("Conv2DT_1", 64, k=1)
    tconv("Conv2DT_2", 64, k=3)
    tconv("Conv2DT_3", 512, k=1)
    bn("BatchNorm_8", on_encoder_path=False)
    tconv("Conv2DT_4", 64, k=1, l2_factor=l2)
    tconv("Conv2DT_5", 64, k=5, stride=2)
    tconv("Conv2DT_6", 256, k=1)
    bn("BatchNorm_9", on_encoder_path=False)
    tconv("Conv2DT_7", 64, k=1, l2_factor=l2)
    tconv("Conv2DT_8", 64, k=3)
    tconv("Conv2DT_9", 128, k=1)
    bn("BatchNorm_10", on_encoder_path=False)
    tconv("Conv2DT_10", 64, k=5, stride=2)
    tconv("Conv2DT_11", 1, k=1, activation="sigmoid")

    if cfg.freeze_vgg:
        for spec in rows:
            if spec.name in VGG_LAYERS:
                spec.trainable = False
    return rows


def layer_by_name(table: list[LayerSpec], name: str) -> LayerSpec:
    for spec in table:
        if spec.name == name:
            return spec
    raise KeyError(f"unknown layer {name!r}")


# reports --------------------------------------------------------------------

@dataclass
class ParameterReport:
    rows: list  # (layer name, parameter count, trainable)
    trainable_total: int
    frozen_total: int


def count_parameters(table_or_model) -> ParameterReport:
    """Per-layer parameter counts with trainable flags.

    Accepts a layer table or anything exposing layer_table(). Encoder
    weights are shared across the n input streams, so each layer appears
    once regardless of n.
    """
    table = table_or_model
    if hasattr(table_or_model, "layer_table"):
        table = table_or_model.layer_table()
    rows = []
    trainable_total = frozen_total = 0
    for spec in table:
        if spec.params == 0:
            continue
        rows.append((spec.name, spec.params, spec.trainable))
        if spec.trainable:
            trainable_total += spec.params
        else:
            frozen_total += spec.params
    return ParameterReport(rows, trainable_total, frozen_total)


def dimension_report(table_or_model) -> list:
    """(layer name, h, w, depth) for every named layer in order."""
    table = table_or_model
    if hasattr(table_or_model, "layer_table"):
        table = table_or_model.layer_table()
    return [(s.name, s.out_hw[0], s.out_hw[1], s.out_channels) for s in table]


def receptive_field(table_or_model, layer: str) -> int:
    """Theoretical receptive-field side length of an encoder-path layer."""
    table = table_or_model
    if hasattr(table_or_model, "layer_table"):
        table = table_or_model.layer_table()
    spec = layer_by_name(table, layer)
    if spec.receptive_field is None:
        raise KeyError(f"layer {layer!r} is not on the encoder path")
    return spec.receptive_field


def receptive_field_report(table_or_model) -> list:
    """(layer name, side length) for every encoder-path layer in order."""
    table = table_or_model
    if hasattr(table_or_model, "layer_table"):
        table = table_or_model.layer_table()
    return [(s.name, s.receptive_field) for s in table if s.receptive_field is not None]


# ablations ------------------------------------------------------------------

def make_ablation(cfg: ModelConfig, variant: str, n: int | None = None) -> ModelConfig:
    """Derived configs for the architecture experiments."""
    if variant == "no_low_level_conv3d":
        return replace(cfg, use_low_level_conv3d=False)
    if variant == "no_fusion":
        return replace(cfg, use_fusion=False)
    if variant == "n_override":
        if n is None or n < 1 or n % 2 == 0:
            raise ValueError(f"n override must be odd and >= 1, got {n}")
        return replace(cfg, n=n)
    raise ValueError(f"unknown ablation variant {variant!r}")
