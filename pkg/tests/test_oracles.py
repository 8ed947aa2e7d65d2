"""The oracles get their own sanity tests on hand-checkable inputs, so a
cross-check failure elsewhere points at the library and not the oracle."""

import numpy as np
import pytest

from distgap.oracles import finite_diff_grads, floyd_warshall, max_rel_err, w1_lp

from conftest import path_graph


def test_floyd_warshall_path_graph():
    g = path_graph(5)
    d = floyd_warshall(g.adjacency)
    expected = np.abs(np.subtract.outer(np.arange(5), np.arange(5)))
    np.testing.assert_array_equal(d, expected)


def test_floyd_warshall_single_node():
    d = floyd_warshall(np.zeros((1, 1), dtype=bool))
    np.testing.assert_array_equal(d, [[0]])


def test_floyd_warshall_disconnected():
    adj = np.zeros((4, 4), dtype=bool)
    adj[0, 1] = adj[1, 0] = True
    adj[2, 3] = adj[3, 2] = True
    d = floyd_warshall(adj)
    expected = np.array([
        [0, 1, -1, -1],
        [1, 0, -1, -1],
        [-1, -1, 0, 1],
        [-1, -1, 1, 0],
    ])
    np.testing.assert_array_equal(d, expected)


def test_w1_lp_point_masses():
    p = np.array([1.0, 0.0, 0.0, 0.0])
    q = np.array([0.0, 0.0, 0.0, 1.0])
    assert w1_lp(p, q) == pytest.approx(3.0, abs=1e-9)


def test_w1_lp_identical():
    p = np.array([0.25, 0.5, 0.25])
    assert w1_lp(p, p) == pytest.approx(0.0, abs=1e-9)


def test_w1_lp_hand_value():
    # Move 0.5 from bin 0 and 0.5 from bin 1 to bin 2: cost 1.0 + 0.5.
    p = np.array([0.5, 0.5, 0.0])
    q = np.array([0.0, 0.0, 1.0])
    assert w1_lp(p, q) == pytest.approx(1.5, abs=1e-9)


def test_w1_lp_pads_unequal_supports():
    assert w1_lp(np.array([1.0]), np.array([0.0, 0.0, 1.0])) == pytest.approx(2.0, abs=1e-9)


def test_finite_diff_quadratic():
    def loss(params):
        return float((params["x"] ** 2).sum())

    x = np.array([0.5, -1.5, 2.0])
    grads = finite_diff_grads(loss, {"x": x})
    np.testing.assert_allclose(grads["x"], 2 * x, atol=1e-7)
    # The probe must restore parameters in place.
    np.testing.assert_array_equal(x, [0.5, -1.5, 2.0])


def test_finite_diff_constant():
    grads = finite_diff_grads(lambda p: 3.0, {"x": np.ones((2, 2))})
    np.testing.assert_allclose(grads["x"], 0.0, atol=1e-9)


def test_finite_diff_multiple_tensors():
    def loss(params):
        return float(params["a"].sum() * 2.0 + params["b"].sum() * -3.0)

    grads = finite_diff_grads(loss, {"a": np.zeros(2), "b": np.zeros(3)})
    np.testing.assert_allclose(grads["a"], 2.0, atol=1e-7)
    np.testing.assert_allclose(grads["b"], -3.0, atol=1e-7)


def test_max_rel_err_hand_values():
    a = {"w": np.array([1.0, 0.0])}
    b = {"w": np.array([1.001, 0.0])}
    assert max_rel_err(a, b) == pytest.approx(0.001 / 1.001, rel=1e-6)
    assert max_rel_err(a, a) == 0.0
