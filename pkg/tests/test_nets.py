"""MLP forward semantics, the optimizer, and diagonal-Gaussian identities."""

import numpy as np
import pytest

from crossimit import autodiff as ad
from crossimit.nets import (
    AdamState,
    DiagGaussian,
    Mlp,
    adam_step,
    kl_between,
    mlp_from_blob,
    mlp_to_blob,
    param_count,
    sample_reparam,
)


def test_zero_parameters_give_zero_output():
    net = Mlp([3, 5, 2], "tanh", params=np.zeros(param_count([3, 5, 2])))
    out = net(np.array([1.0, -2.0, 0.5]))
    np.testing.assert_array_equal(out, np.zeros(2))


def test_identity_linear_layer():
    n = 4
    params = np.concatenate([np.eye(n).reshape(-1), np.zeros(n)])
    net = Mlp([n, n], "tanh", params=params)
    x = np.array([0.3, -1.2, 4.0, 0.0])
    np.testing.assert_array_equal(net(x), x)


def test_forward_matches_independent_straight_line_evaluation():
    widths = [3, 7, 5, 2]
    net = Mlp(widths, "tanh", init_seed=11)
    x = np.random.default_rng(2).normal(size=(4, 3))

    # straight-line re-evaluation, written independently of Mlp.forward
    p = net.params
    w1 = p[:21].reshape(3, 7)
    b1 = p[21:28]
    w2 = p[28 : 28 + 35].reshape(7, 5)
    b2 = p[63:68]
    w3 = p[68 : 68 + 10].reshape(5, 2)
    b3 = p[78:80]
    expected = np.tanh(np.tanh(x @ w1 + b1) @ w2 + b2) @ w3 + b3

    np.testing.assert_allclose(net(x), expected, rtol=0, atol=0)
    np.testing.assert_allclose(net.forward_t(x, net.param_tensor()).data, expected)


def test_param_count_invariant():
    assert param_count([3, 7, 5, 2]) == (3 + 1) * 7 + (7 + 1) * 5 + (5 + 1) * 2


def test_dimension_mismatch_raises():
    net = Mlp([3, 2], "tanh", init_seed=0)
    with pytest.raises(ValueError):
        net(np.zeros(4))
    with pytest.raises(ValueError):
        net.forward_t(np.zeros((1, 4)), net.param_tensor())


def test_adam_zero_gradient_keeps_parameters():
    state = AdamState.for_params(3, lr=0.1)
    params = np.array([1.0, -2.0, 0.5])
    new = adam_step(state, params, np.zeros(3))
    np.testing.assert_array_equal(new, params)


def test_adam_first_step_moves_by_learning_rate():
    # bias-corrected moments make the first update m_hat/sqrt(v_hat) = sign(g)
    state = AdamState.for_params(1, lr=0.1)
    new = adam_step(state, np.array([0.0]), np.array([1.0]))
    assert abs(new[0] + 0.1) < 1e-8
    assert state.step == 1


def test_adam_non_finite_gradient_rejected():
    state = AdamState.for_params(1, lr=0.1)
    with pytest.raises(FloatingPointError):
        adam_step(state, np.zeros(1), np.array([np.nan]))


def test_adam_descends_convex_quadratic():
    state = AdamState.for_params(2, lr=0.05)
    p = np.array([3.0, -2.0])
    losses = []
    for _ in range(400):
        losses.append(float(p @ p))
        p = adam_step(state, p, 2.0 * p)
    # monotone in 50-step window means (Adam oscillates pointwise near the optimum)
    windows = [np.mean(losses[i : i + 50]) for i in range(0, 400, 50)]
    assert all(a > b for a, b in zip(windows, windows[1:]))
    assert losses[-1] < 1e-2


def test_reparam_zero_noise_returns_mean():
    g = DiagGaussian(np.array([1.0, -2.0]), np.array([0.3, -1.0]))
    np.testing.assert_array_equal(sample_reparam(g, np.zeros(2)), g.mean)


def test_reparam_unit_noise_with_zero_log_std():
    g = DiagGaussian(np.array([1.0, -2.0]), np.zeros(2))
    np.testing.assert_allclose(sample_reparam(g, np.ones(2)), [2.0, -1.0])


def test_reparam_monte_carlo_mean():
    rng = np.random.default_rng(5)
    g = DiagGaussian(np.array([0.7]), np.array([0.2]))
    n = 100_000
    draws = np.array([sample_reparam(g, rng.standard_normal(1))[0] for _ in range(n)])
    sigma = float(np.exp(g.log_std[0]))
    assert abs(draws.mean() - 0.7) < 3.0 * sigma / np.sqrt(n)


def test_log_std_clamped_to_range():
    g = DiagGaussian(np.zeros(2), np.array([-20.0, 20.0]))
    np.testing.assert_array_equal(g.log_std, [-5.0, 2.0])


def test_density_integrates_to_one_by_quadrature():
    g = DiagGaussian(np.array([0.4]), np.array([-0.2]))
    xs = np.linspace(-8.0, 8.0, 20001)
    dens = np.exp([g.log_prob(np.array([x])) for x in xs]).reshape(-1)
    integral = np.trapezoid(dens, xs)
    assert abs(integral - 1.0) < 1e-3


def test_kl_between_matches_closed_form_special_case():
    p = DiagGaussian(np.array([1.0]), np.array([0.0]))
    q = DiagGaussian(np.array([0.0]), np.array([0.0]))
    np.testing.assert_allclose(kl_between(p, q), 0.5)


def test_checkpoint_blob_round_trip_is_bit_exact():
    net = Mlp([4, 8, 3], "relu", init_seed=21)
    restored = mlp_from_blob(mlp_to_blob(net))
    assert restored.widths == net.widths
    assert restored.activation == net.activation
    np.testing.assert_array_equal(restored.params, net.params)


def test_checkpoint_blob_version_checked():
    blob = mlp_to_blob(Mlp([2, 2], "tanh", init_seed=0))
    blob["format_version"] = 99
    with pytest.raises(ValueError):
        mlp_from_blob(blob)
