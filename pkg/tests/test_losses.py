"""Loss family gradients, closed-form moments, and batched sampling."""

import math

import numpy as np
import pytest

from fedregret.adversary import make_schedule
from fedregret.core import ConfigError, RngStream, UNBOUNDED, gaussian, point_mass
from fedregret.losses import (
    AnalyticUnavailable,
    draw_sample,
    draw_step_batch,
    draw_with_generator,
    evaluate_batch,
    expected_gradient,
    expected_loss,
    gradient_variance,
    gradient_variance_sup,
    make_loss_model,
    realized_loss,
    stochastic_gradient,
)

QUAD = make_loss_model({"family": "mean_quadratic"}, 3)
LINREG = make_loss_model({"family": "gaussian_linreg", "feature_variance": 2.0}, 3)


def logistic_model(dimension=3, horizon=4, clients=2):
    schedule = make_schedule(
        {"kind": "static_iid", "mean": [0.5] * dimension, "variance": 1.0},
        clients, dimension, horizon)
    spec = {"family": "empirical_logistic", "separator": [1.0] * dimension}
    return make_loss_model(spec, dimension, schedule)


def numeric_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# ---------------------------------------------------------------------------
# single-sample interface

def test_stochastic_gradients_match_finite_differences():
    x = np.array([0.3, -0.7, 1.1])
    xi_quad = np.array([1.0, 0.0, -1.0])
    g = stochastic_gradient(QUAD, x, xi_quad)
    gn = numeric_gradient(lambda p: realized_loss(QUAD, p, xi_quad), x)
    assert np.abs(g - gn).max() < 1e-6

    xi_lin = (np.array([0.5, 1.5, -0.5]), 0.7)
    g = stochastic_gradient(LINREG, x, xi_lin)
    gn = numeric_gradient(lambda p: realized_loss(LINREG, p, xi_lin), x)
    assert np.abs(g - gn).max() < 1e-5

    model = logistic_model()
    xi_log = (np.array([0.4, -0.2, 0.9]), -1.0)
    g = stochastic_gradient(model, x, xi_log)
    gn = numeric_gradient(lambda p: realized_loss(model, p, xi_log), x)
    assert np.abs(g - gn).max() < 1e-6


def test_expected_loss_closed_forms():
    params = gaussian([1.0, 0.0, 0.0], 2.0)
    x = np.array([0.0, 0.0, 0.0])
    # quadratic: 0.5 ||x - mu||^2 + 0.5 var
    assert expected_loss(QUAD, params, x) == pytest.approx(0.5 + 1.0)
    # linreg: 0.5 s ||x - w||^2 + 0.5 var
    assert expected_loss(LINREG, params, x) == pytest.approx(0.5 * 2.0 + 1.0)
    with pytest.raises(AnalyticUnavailable):
        expected_loss(logistic_model(), params, x)


def test_expected_loss_matches_sample_mean():
    params = gaussian([1.0, -1.0, 0.5], 1.5)
    x = np.array([0.2, 0.2, 0.2])
    for model in (QUAD, LINREG):
        gen = RngStream(5).generator("mc", model.family)
        samples = draw_with_generator(model, params, gen, 400_000)
        if model.family == "mean_quadratic":
            vals = 0.5 * ((samples - x) ** 2).sum(axis=1)
        else:
            a, b = samples
            vals = 0.5 * (a @ x - b) ** 2
        closed = expected_loss(model, params, x)
        se = vals.std() / math.sqrt(vals.size)
        assert abs(vals.mean() - closed) < 5 * se


def test_expected_gradient_closed_forms():
    params = gaussian([1.0, 0.0, 0.0], 2.0)
    x = np.array([0.5, 0.5, 0.5])
    assert np.allclose(expected_gradient(QUAD, params, x), x - params.mean)
    assert np.allclose(expected_gradient(LINREG, params, x), 2.0 * (x - params.mean))
    with pytest.raises(AnalyticUnavailable):
        expected_gradient(logistic_model(), params, x)


def test_gradient_variance_formulas():
    params = gaussian([1.0, 0.0, 0.0], 2.0)
    # quadratic: variance of g = x - xi is the data variance, x-independent
    assert gradient_variance(QUAD, params, np.zeros(3)) == 2.0
    assert gradient_variance(QUAD, params, np.full(3, 9.0)) == 2.0
    # linreg at x = w only the label-noise term survives: d * s * var
    at_w = gradient_variance(LINREG, params, params.mean.copy())
    assert at_w == pytest.approx(3 * 2.0 * 2.0)
    # displacement adds s^2 (d+1) ||x - w||^2
    x = params.mean + np.array([1.0, 0.0, 0.0])
    assert gradient_variance(LINREG, params, x) == pytest.approx(4.0 * 4.0 + 12.0)


def test_gradient_variance_sup_domain_rules():
    params = gaussian([1.0, 0.0, 0.0], 2.0)
    assert gradient_variance_sup(QUAD, params, UNBOUNDED) == 2.0
    with pytest.raises(ConfigError, match="unbounded"):
        gradient_variance_sup(LINREG, params, UNBOUNDED)
    reach = 2.0 + 1.0
    want = 4.0 * (3 + 1) * reach ** 2 + 3 * 2.0 * 2.0
    assert gradient_variance_sup(LINREG, params, 2.0) == pytest.approx(want)
    # logistic gradients are bounded by the feature norm everywhere
    model = logistic_model()
    assert gradient_variance_sup(model, params, UNBOUNDED) == pytest.approx(2.0 + 1.0)


def test_logistic_smoothness_from_schedule():
    schedule = make_schedule(
        {"kind": "static_heterogeneous", "means": [[2.0, 0.0], [0.0, 1.0]],
         "variances": [1.0, 4.0]}, 2, 2, 3)
    model = make_loss_model(
        {"family": "empirical_logistic", "separator": [1.0, 0.0]}, 2, schedule)
    # L = max over (t, m) of (var/d + ||mean||^2) / 4
    assert model.L == pytest.approx(max(1.0 / 2 + 4.0, 4.0 / 2 + 1.0) / 4.0)
    with pytest.raises(ConfigError, match="separator"):
        make_loss_model({"family": "empirical_logistic", "separator": [1.0]}, 2, schedule)
    with pytest.raises(ConfigError, match="schedule"):
        make_loss_model({"family": "empirical_logistic", "separator": [1.0, 0.0]}, 2)


def test_make_loss_model_validation():
    with pytest.raises(ConfigError, match="unknown loss family"):
        make_loss_model({"family": "hinge"}, 2)
    with pytest.raises(ConfigError, match="unknown loss_spec fields"):
        make_loss_model({"family": "mean_quadratic", "scale": 2.0}, 2)
    with pytest.raises(ConfigError):
        make_loss_model({"family": "gaussian_linreg", "feature_variance": -1.0}, 2)


# ---------------------------------------------------------------------------
# sampling

def test_draw_sample_keyed_determinism():
    params = gaussian([0.0, 0.0, 0.0], 1.0)
    a = draw_sample(QUAD, params, RngStream(3), "data", 7, n=4)
    b = draw_sample(QUAD, params, RngStream(3), "data", 7, n=4)
    c = draw_sample(QUAD, params, RngStream(3), "data", 8, n=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_draw_step_batch_prefix_property():
    """A longer replicate block starts with exactly the shorter block's bits,
    so chunked execution can slice any rows out of a common virtual block."""
    means = np.array([[0.5, 0.0], [0.0, -0.5], [1.0, 1.0]])
    varts = np.array([1.0, 2.0, 0.5])
    stream = RngStream(21)
    for model in (QUAD, make_loss_model({"family": "gaussian_linreg"}, 2)):
        small = draw_step_batch(model, stream, ("data", 5), 2, slice(None), means, varts)
        big = draw_step_batch(model, stream, ("data", 5), 16, np.array([0, 1]), means, varts)
        tail = draw_step_batch(model, stream, ("data", 5), 16, np.array([7]), means, varts)
        whole = draw_step_batch(model, stream, ("data", 5), 16, slice(None), means, varts)
        for key in small:
            assert np.array_equal(small[key], big[key])
            assert np.array_equal(tail[key], whole[key][7:8])


def test_logistic_labels_follow_separator():
    model = logistic_model(dimension=2)
    means = np.tile(np.array([4.0, 0.0]), (2, 1))
    varts = np.array([0.01, 0.01])
    out = draw_step_batch(model, RngStream(2), ("data", 1), 512, slice(None), means, varts)
    # features sit far on the separator's positive side, labels mostly +1
    assert out["y"].shape == (512, 2)
    assert set(np.unique(out["y"])) <= {-1.0, 1.0}
    assert out["y"].mean() > 0.9


def test_evaluate_batch_matches_single_sample_ops():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(4, 3, 2))
    means = rng.normal(size=(3, 2))
    varts = np.array([1.0, 0.5, 2.0])
    stream = RngStream(13)
    model2 = make_loss_model({"family": "gaussian_linreg", "feature_variance": 1.5}, 2)
    logistic2 = logistic_model(dimension=2)
    for model in (make_loss_model({"family": "mean_quadratic"}, 2), model2, logistic2):
        samples = draw_step_batch(model, stream, ("data", 2), 4, slice(None), means, varts)
        losses, grads = evaluate_batch(model, X, samples)
        assert losses.shape == (4, 3)
        assert grads.shape == (4, 3, 2)
        for r in range(4):
            for m in range(3):
                if model.family == "mean_quadratic":
                    xi = samples["xi"][r, m]
                elif model.family == "gaussian_linreg":
                    xi = (samples["a"][r, m], samples["b"][r, m])
                else:
                    xi = (samples["a"][r, m], samples["y"][r, m])
                assert losses[r, m] == pytest.approx(realized_loss(model, X[r, m], xi),
                                                     abs=1e-12)
                assert np.allclose(grads[r, m], stochastic_gradient(model, X[r, m], xi),
                                   atol=1e-12)


def test_point_mass_batch_is_exact():
    means = np.array([[1.0], [2.0]])
    varts = np.zeros(2)
    out = draw_step_batch(make_loss_model({"family": "mean_quadratic"}, 1),
                          RngStream(1), ("data", 1), 3, slice(None), means, varts)
    assert np.array_equal(out["xi"], np.tile(means, (3, 1, 1)))
