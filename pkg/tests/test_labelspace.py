import numpy as np
import pytest
from hypothesis import given, strategies as st

from motionseg.labelspace import (CDNET_CODEC, IDENTITY_CODEC, LASIESTA_CODEC,
                                  DecodeError, Label, codec_by_name,
                                  decode_lasiesta_rgb, ignore_fraction,
                                  relabel, relabel_cdnet, relabel_lasiesta)

CDNET_VALUES = [0, 50, 85, 170, 255]


def test_cdnet_relabel_rules():
    raw = np.array([[0, 50], [85, 170], [255, 0]], dtype=np.uint8)
    out = relabel_cdnet(raw)
    assert out.tolist() == [
        [Label.STATIC, Label.STATIC],       # static, hard shadow
        [Label.IGNORE, Label.IGNORE],       # outside ROI, unknown
        [Label.MOTION, Label.STATIC],
    ]


def test_cdnet_all_outside_roi_becomes_all_ignore():
    raw = np.full((8, 8), 85, dtype=np.uint8)
    assert np.all(relabel_cdnet(raw) == Label.IGNORE)


def test_cdnet_undeclared_value_names_value_and_pixel():
    raw = np.zeros((4, 4), dtype=np.uint8)
    raw[2, 3] = 99
    with pytest.raises(DecodeError) as exc:
        relabel_cdnet(raw)
    assert "99" in str(exc.value)
    assert "2" in str(exc.value) and "3" in str(exc.value)


def test_lasiesta_instances_all_map_to_motion():
    raw = np.array([[0, 1], [2, 3], [4, 0]], dtype=np.uint8)
    out = relabel_lasiesta(raw)
    assert out.tolist() == [
        [Label.STATIC, Label.MOTION],
        [Label.MOTION, Label.MOTION],
        [Label.IGNORE, Label.STATIC],
    ]


def test_lasiesta_motion_set_is_union_of_instance_sets():
    rng = np.random.default_rng(7)
    raw = np.zeros((32, 32), dtype=np.uint8)
    inst1 = rng.random((32, 32)) < 0.2
    inst3 = rng.random((32, 32)) < 0.2
    raw[inst1] = 1
    raw[inst3] = 3
    out = relabel_lasiesta(raw)
    assert np.array_equal(out == Label.MOTION, inst1 | inst3)


def test_lasiesta_rgb_decoding():
    rgb = np.zeros((2, 3, 3), dtype=np.uint8)
    rgb[0, 0] = (255, 0, 0)    # instance 1
    rgb[0, 1] = (0, 255, 0)    # instance 2
    rgb[0, 2] = (0, 0, 255)    # instance 3
    rgb[1, 0] = (128, 128, 128)  # unknown/boundary gray
    raw = decode_lasiesta_rgb(rgb)
    assert raw[0].tolist() == [1, 2, 3]
    out = relabel_lasiesta(rgb)
    assert out[0].tolist() == [Label.MOTION] * 3
    assert out[1, 0] == Label.IGNORE
    assert out[1, 1] == Label.STATIC


def test_identity_codec_idempotence():
    mask = np.array([[0, 1], [2, 1]], dtype=np.uint8)
    once = relabel(mask, IDENTITY_CODEC)
    twice = relabel(once.astype(np.uint8), IDENTITY_CODEC)
    assert np.array_equal(once, mask)
    assert np.array_equal(twice, once)


@given(st.lists(st.sampled_from(CDNET_VALUES), min_size=1, max_size=256))
def test_cdnet_output_alphabet_closed_and_counts_conserved(values):
    raw = np.array(values, dtype=np.uint8).reshape(1, -1)
    out = relabel_cdnet(raw)
    assert set(np.unique(out)) <= {int(Label.STATIC), int(Label.MOTION), int(Label.IGNORE)}
    counts = sum(int(np.count_nonzero(out == v)) for v in Label)
    assert counts == raw.size


def test_ignore_fraction():
    assert ignore_fraction(np.zeros((4, 4), dtype=np.uint8)) == 0.0
    assert ignore_fraction(np.full((4, 4), int(Label.IGNORE), dtype=np.uint8)) == 1.0
    mask = np.array([[Label.IGNORE, Label.IGNORE], [Label.STATIC, Label.MOTION]])
    assert ignore_fraction(mask) == 0.5


def test_codec_lookup():
    assert codec_by_name("cdnet") is CDNET_CODEC
    assert codec_by_name("LASIESTA") is LASIESTA_CODEC
    with pytest.raises(KeyError):
        codec_by_name("davis")
