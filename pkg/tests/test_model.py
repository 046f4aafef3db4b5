import pytest

from motionseg.model import (ModelConfig, build_layer_table, count_parameters,
                             dimension_report, layer_by_name, make_ablation,
                             receptive_field, receptive_field_report)

# Frozen per-layer parameter counts for the default configuration.
EXPECTED_PARAMS = {
    "Conv2D_1": 1_792, "Conv2D_2": 36_928, "BatchNorm_1": 256,
    "Conv3D_1": 110_656, "Conv3D_2": 110_656, "BatchNorm_2": 256,
    "Conv2D_3": 73_856, "Conv2D_4": 147_584, "BatchNorm_3": 512,
    "Conv2D_5": 295_168, "Conv2D_6": 590_080, "Conv2D_7": 590_080,
    "BatchNorm_4": 1_024, "Conv2D_8": 1_180_160, "Conv2D_9": 2_359_808,
    "Conv2D_10": 2_359_808, "BatchNorm_5": 2_048, "Conv2D_11": 2_359_808,
    "Conv2D_12": 2_359_808, "BatchNorm_6": 5_888,
    "Conv3D_3": 10_174_720, "Conv3D_4": 884_864, "Conv3D_5": 221_248,
    "BatchNorm_7": 256, "Conv2DT_1": 4_160, "Conv2DT_2": 36_928,
    "Conv2DT_3": 33_280, "BatchNorm_8": 2_048, "Conv2DT_4": 32_832,
    "Conv2DT_5": 102_464, "Conv2DT_6": 16_640, "BatchNorm_9": 1_024,
    "Conv2DT_7": 16_448, "Conv2DT_8": 36_928, "Conv2DT_9": 8_320,
    "BatchNorm_10": 512, "Conv2DT_10": 204_864, "Conv2DT_11": 65,
}

# Frozen encoder receptive-field side lengths.
EXPECTED_RF = {
    "Conv2D_1": 3, "Conv2D_2": 5, "MaxPooling_1": 6, "BatchNorm_1": 6,
    "Conv3D_1": 10, "Conv3D_2": 14, "BatchNorm_2": 14, "Conv2D_3": 18,
    "Conv2D_4": 22, "MaxPooling_2": 24, "BatchNorm_3": 24, "Conv2D_5": 32,
    "Conv2D_6": 40, "Conv2D_7": 48, "BatchNorm_4": 48, "Conv2D_8": 56,
    "Dropout_1": 56, "Conv2D_9": 64, "Dropout_2": 64, "Conv2D_10": 72,
    "Dropout_3": 72, "BatchNorm_5": 72, "Conv2D_11": 80, "Conv2D_12": 88,
    "MaxPooling_3": 16,
}


def default_table():
    return build_layer_table(ModelConfig())


def test_parameter_counts_exact():
    report = count_parameters(default_table())
    got = {name: params for name, params, _ in report.rows}
    assert got == EXPECTED_PARAMS
    assert report.trainable_total == 22_628_289
    assert report.frozen_total == 1_735_488


def test_vgg_rows_frozen_by_default():
    report = count_parameters(default_table())
    flags = {name: trainable for name, _, trainable in report.rows}
    for i in range(1, 8):
        assert flags[f"Conv2D_{i}"] is False
    assert flags["Conv3D_1"] is True
    assert flags["Conv2DT_11"] is True


def test_all_trainable_without_freezing():
    report = count_parameters(build_layer_table(ModelConfig(freeze_vgg=False)))
    assert all(trainable for _, _, trainable in report.rows)
    assert report.frozen_total == 0


def test_receptive_fields_exact():
    got = dict(receptive_field_report(default_table()))
    assert got == EXPECTED_RF
    assert receptive_field(default_table(), "Conv2D_12") == 88
    with pytest.raises(KeyError):
        receptive_field(default_table(), "Conv2DT_5")  # decoder path
    with pytest.raises(KeyError):
        receptive_field(default_table(), "Conv2D_99")


def test_dimension_report_landmarks():
    dims = {name: (h, w, d) for name, h, w, d in dimension_report(default_table())}
    assert dims["MaxPooling_1"] == (120, 160, 64)     # EC1 stream output
    assert dims["Conv3D_2"] == (120, 160, 64)
    assert dims["MaxPooling_2"] == (60, 80, 128)
    assert dims["Conv2D_12"] == (60, 80, 512)
    assert dims["MaxPooling_3"] == (60, 80, 64)
    assert dims["Concatenate"] == (60, 80, 1472)
    assert dims["Conv3D_5"] == (60, 80, 64)
    assert dims["Conv2DT_5"] == (120, 160, 64)
    assert dims["Conv2DT_10"] == (240, 320, 64)
    assert dims["Conv2DT_11"] == (240, 320, 1)


def test_fusion_depth_is_sum_of_sources():
    table = default_table()
    concat = layer_by_name(table, "Concatenate")
    depth = sum(layer_by_name(table, src).out_channels for src in concat.fusion_sources)
    assert concat.out_channels == depth == 1472


def test_fully_convolutional_shapes():
    for hw in [(64, 64), (48, 96), (240, 320)]:
        table = build_layer_table(ModelConfig(input_hw=hw))
        last = table[-1]
        assert last.name == "Conv2DT_11"
        assert last.out_hw == hw
        assert last.out_channels == 1
        assert last.activation == "sigmoid"


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(n=4)
    with pytest.raises(ValueError):
        ModelConfig(dropout_rate=1.0)
    with pytest.raises(ValueError):
        ModelConfig(input_hw=(30, 64))
    with pytest.raises(ValueError):
        ModelConfig(base_filters_scale=0)


def test_no_fusion_ablation():
    cfg = make_ablation(ModelConfig(), "no_fusion")
    table = build_layer_table(cfg)
    names = [s.name for s in table]
    assert "Concatenate" not in names and "MaxPooling_3" not in names
    conv3d_3 = layer_by_name(table, "Conv3D_3")
    assert conv3d_3.in_channels == 512
    assert conv3d_3.params == 3_539_200


def test_no_low_level_conv3d_ablation():
    cfg = make_ablation(ModelConfig(), "no_low_level_conv3d")
    names = [s.name for s in build_layer_table(cfg)]
    assert "Conv3D_1" not in names and "Conv3D_2" not in names
    assert "Conv3D_3" in names


def test_n_override_ablation():
    cfg = make_ablation(ModelConfig(), "n_override", n=3)
    assert cfg.n == 3
    with pytest.raises(ValueError):
        make_ablation(ModelConfig(), "n_override", n=4)
    with pytest.raises(ValueError):
        make_ablation(ModelConfig(), "upside_down")


def test_l2_flags_on_exactly_two_decoder_layers():
    table = default_table()
    flagged = [s.name for s in table if s.l2_factor]
    assert flagged == ["Conv2DT_4", "Conv2DT_7"]


def test_base_filters_scale():
    table = build_layer_table(ModelConfig(base_filters_scale=0.25))
    assert layer_by_name(table, "Conv2D_1").out_channels == 16
    assert layer_by_name(table, "Conv2D_12").out_channels == 128
    assert layer_by_name(table, "Conv2DT_11").out_channels == 1  # never scaled
    full = build_layer_table(ModelConfig())
    assert [s.name for s in table] == [s.name for s in full]
