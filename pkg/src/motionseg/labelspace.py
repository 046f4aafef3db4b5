"""Three-valued ground-truth label space and dataset relabeling rules.

Every mask downstream of this module carries exactly the values STATIC,
MOTION and IGNORE. Raw dataset annotations (grayscale codes, instance
colors) are decoded through a codec and collapsed onto that alphabet here,
so no other module ever sees a raw encoding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class Label(IntEnum):
    STATIC = 0
    MOTION = 1
    IGNORE = 2


# Intermediate classes a raw annotation may declare before relabeling.
class RawClass(IntEnum):
    STATIC = 0
    HARD_SHADOW = 1
    OUTSIDE_ROI = 2
    UNKNOWN = 3
    MOTION = 4
    INSTANCE_1 = 5
    INSTANCE_2 = 6
    INSTANCE_3 = 7


class DecodeError(ValueError):
    """Raw mask contains a pixel value the codec does not declare."""


# De-facto CDNet grayscale convention. The annotation classes are named by
# the dataset but their numeric codes are a convention of the published
# files, hence overridable.
CDNET_VALUE_MAP = {
    0: RawClass.STATIC,
    50: RawClass.HARD_SHADOW,
    85: RawClass.OUTSIDE_ROI,
    170: RawClass.UNKNOWN,
    255: RawClass.MOTION,
}

# LASIESTA colors the (at most three) moving object instances in the red,
# green and blue channel; gray marks uncertain pixels. Decoded from RGB
# via the dominant channel, see decode_lasiesta_rgb. This map covers the
# single-channel form used after that reduction.
LASIESTA_VALUE_MAP = {
    0: RawClass.STATIC,
    1: RawClass.INSTANCE_1,
    2: RawClass.INSTANCE_2,
    3: RawClass.INSTANCE_3,
    4: RawClass.UNKNOWN,
}

IDENTITY_VALUE_MAP = {
    int(Label.STATIC): RawClass.STATIC,
    int(Label.MOTION): RawClass.MOTION,
    int(Label.IGNORE): RawClass.UNKNOWN,
}


@dataclass(frozen=True)
class RawAnnotationCodec:
    """Total mapping from raw pixel values to intermediate classes."""

    source: str
    value_map: dict[int, RawClass] = field(default_factory=dict)

    def decode(self, raw: np.ndarray) -> np.ndarray:
        """Map a raw single-channel mask to RawClass values.

        Raises DecodeError naming the first offending value and pixel if
        the mask contains a value outside the codec.
        """
        raw = np.asarray(raw)
        if raw.ndim != 2:
            raise DecodeError(f"expected a single-channel mask, got shape {raw.shape}")
        out = np.full(raw.shape, -1, dtype=np.int16)
        for value, cls in self.value_map.items():
            out[raw == value] = int(cls)
        bad = np.argwhere(out < 0)
        if len(bad):
            r, c = bad[0]
            raise DecodeError(
                f"undeclared raw value {int(raw[r, c])} at pixel ({int(r)}, {int(c)}) "
                f"for codec {self.source!r}"
            )
        return out


CDNET_CODEC = RawAnnotationCodec("CDNET", CDNET_VALUE_MAP)
LASIESTA_CODEC = RawAnnotationCodec("LASIESTA", LASIESTA_VALUE_MAP)
# Used by synthetic scenes, whose GT is already three-valued.
IDENTITY_CODEC = RawAnnotationCodec("SYNTHETIC", IDENTITY_VALUE_MAP)

_CODECS = {c.source: c for c in (CDNET_CODEC, LASIESTA_CODEC, IDENTITY_CODEC)}


def codec_by_name(name: str) -> RawAnnotationCodec:
    try:
        return _CODECS[name.upper()]
    except KeyError:
        raise KeyError(f"unknown codec {name!r}, expected one of {sorted(_CODECS)}")


def decode_lasiesta_rgb(raw_rgb: np.ndarray) -> np.ndarray:
    """Reduce a LASIESTA color GT frame to the single-channel raw form.

    Red/green/blue saturated pixels mark object instances 1..3, gray marks
    uncertain pixels, black is background.
    """
    rgb = np.asarray(raw_rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DecodeError(f"expected an RGB mask, got shape {rgb.shape}")
    r = rgb[..., 0].astype(np.int32)
    g = rgb[..., 1].astype(np.int32)
    b = rgb[..., 2].astype(np.int32)
    out = np.zeros(rgb.shape[:2], dtype=np.uint8)
    out[(r > 127) & (g > 127) & (b > 127)] = 4  # gray/white: uncertain
    out[(r > 127) & (g <= 127) & (b <= 127)] = 1
    out[(g > 127) & (r <= 127) & (b <= 127)] = 2
    out[(b > 127) & (r <= 127) & (g <= 127)] = 3
    return out


_CDNET_RELABEL = {
    RawClass.STATIC: Label.STATIC,
    RawClass.HARD_SHADOW: Label.STATIC,
    RawClass.OUTSIDE_ROI: Label.IGNORE,
    RawClass.UNKNOWN: Label.IGNORE,
    RawClass.MOTION: Label.MOTION,
}

_LASIESTA_RELABEL = {
    RawClass.STATIC: Label.STATIC,
    RawClass.UNKNOWN: Label.IGNORE,
    RawClass.INSTANCE_1: Label.MOTION,
    RawClass.INSTANCE_2: Label.MOTION,
    RawClass.INSTANCE_3: Label.MOTION,
}


def _apply_relabel(classes: np.ndarray, table: dict[RawClass, Label], source: str) -> np.ndarray:
    out = np.full(classes.shape, -1, dtype=np.int16)
    for raw_cls, label in table.items():
        out[classes == int(raw_cls)] = int(label)
    bad = np.argwhere(out < 0)
    if len(bad):
        r, c = bad[0]
        raise DecodeError(
            f"class {RawClass(int(classes[r, c])).name} at pixel ({int(r)}, {int(c)}) "
            f"has no relabel rule for {source}"
        )
    return out.astype(np.uint8)


def relabel_cdnet(raw: np.ndarray, codec: RawAnnotationCodec = CDNET_CODEC) -> np.ndarray:
    """Relabel a decoded CDNet mask: hard shadow -> static, unknown and
    outside-ROI -> ignore."""
    return _apply_relabel(codec.decode(raw), _CDNET_RELABEL, "CDNET")


def relabel_lasiesta(raw: np.ndarray, codec: RawAnnotationCodec = LASIESTA_CODEC) -> np.ndarray:
    """Relabel a decoded LASIESTA mask: every object instance -> motion."""
    if raw.ndim == 3:
        raw = decode_lasiesta_rgb(raw)
    return _apply_relabel(codec.decode(raw), _LASIESTA_RELABEL, "LASIESTA")


def relabel(raw: np.ndarray, codec: RawAnnotationCodec) -> np.ndarray:
    """Relabel through whichever rule set matches the codec source."""
    if codec.source == "CDNET":
        return relabel_cdnet(raw, codec)
    if codec.source == "LASIESTA":
        return relabel_lasiesta(raw, codec)
    if codec.source == "SYNTHETIC":
        return _apply_relabel(
            codec.decode(raw),
            {RawClass.STATIC: Label.STATIC, RawClass.MOTION: Label.MOTION,
             RawClass.UNKNOWN: Label.IGNORE},
            "SYNTHETIC",
        )
    raise KeyError(f"no relabel rule for codec source {codec.source!r}")


def ignore_fraction(mask: np.ndarray) -> float:
    """Share of IGNORE pixels in a label mask."""
    mask = np.asarray(mask)
    return float(np.count_nonzero(mask == Label.IGNORE) / mask.size)
