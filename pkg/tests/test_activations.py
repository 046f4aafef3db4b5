import numpy as np
import pytest
from hypothesis import given, strategies as st

from motionseg import activations


def test_hand_values():
    assert activations.sigmoid(0.0) == pytest.approx(0.5)
    assert activations.relu(-3.0) == 0.0
    assert activations.relu(2.5) == 2.5
    assert activations.tanh(0.0) == 0.0


@pytest.mark.parametrize("z", [-2.0, 0.0, 2.0])
def test_tanh_sigmoid_identity(z):
    assert activations.tanh(z) == pytest.approx(2.0 * activations.sigmoid(2.0 * z) - 1.0)


@given(st.floats(-50, 50))
def test_ranges(z):
    s = activations.sigmoid(z)
    assert 0.0 < s < 1.0 or s in (0.0, 1.0)  # saturation at float limits
    assert -1.0 <= activations.tanh(z) <= 1.0
    r = activations.relu(z)
    assert r >= 0.0
    assert activations.relu(r) == r  # idempotent


def test_softmax_normalizes():
    z = np.array([[1.0, 2.0, 3.0], [10.0, 10.0, 10.0]])
    out = activations.softmax(z)
    assert np.allclose(out.sum(axis=-1), 1.0, atol=1e-9)
    assert np.allclose(out[1], 1.0 / 3.0)


def test_apply_dispatch():
    assert activations.apply("relu", -1.0) == 0.0
    with pytest.raises(KeyError):
        activations.apply("swish", 0.0)
