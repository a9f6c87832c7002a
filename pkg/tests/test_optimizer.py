import numpy as np
import pytest

from src.core.errors import DimensionMismatchError
from src.core.training.optimizer import AdamState, adam_step


def test_first_step_moves_by_learning_rate():
    params = {"w": np.array([[1.0, -2.0]])}
    adam_step(AdamState(), params, {"w": np.array([[0.5, -3.0]])}, lr=0.1)
    np.testing.assert_allclose(params["w"], [[0.9, -1.9]], atol=1e-7)


def test_updates_in_place_and_counts_steps():
    table = np.ones((2, 2))
    params = {"w": table}
    state = AdamState()
    for _ in range(3):
        adam_step(state, params, {"w": np.ones((2, 2))}, lr=0.01)
    assert params["w"] is table
    assert state.step == 3
    assert np.all(table < 1.0)


def test_matches_reference_recurrence():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(3, 2))
    expected = w.copy()
    m, v = np.zeros_like(w), np.zeros_like(w)
    state = AdamState()
    params = {"w": w}
    for t in range(1, 6):
        grad = rng.normal(size=w.shape)
        m = 0.9 * m + (1.0 - 0.9) * grad
        v = 0.999 * v + (1.0 - 0.999) * grad * grad
        expected -= 0.05 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        adam_step(state, params, {"w": grad}, lr=0.05)
    np.testing.assert_allclose(params["w"], expected, atol=1e-12)


def test_minimizes_quadratic():
    params = {"w": np.array([[5.0, -3.0]])}
    state = AdamState()
    for _ in range(2000):
        adam_step(state, params, {"w": 2 * params["w"]}, lr=0.05)
    assert np.all(np.abs(params["w"]) < 0.5)


def test_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        adam_step(AdamState(), {"w": np.zeros((2, 2))}, {"w": np.zeros((2, 3))}, lr=0.1)
