"""Loss families: sampling, gradients, and closed-form expectations.

Three families share one functional form f(x, xi) per family while the
adversary moves the sampling distribution of xi:

 - mean_quadratic: f(x, xi) = 0.5 ||x - xi||^2, xi ~ schedule distribution.
 - gaussian_linreg: f(x, (a, b)) = 0.5 (a.x - b)^2 with isotropic zero-mean
   Gaussian features a and b = a.w + noise; the schedule's mean vector plays
   the regression target w and its variance the label-noise variance.
 - empirical_logistic: f(x, (a, y)) = log(1 + exp(-y a.x)) with Gaussian
   features from the schedule and labels flipped through a fixed separator.
   No closed-form expectations exist; oracles fall back to Monte Carlo or a
   frozen surrogate sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, DistParams, RngStream, UNBOUNDED

FAMILIES = ("mean_quadratic", "gaussian_linreg", "empirical_logistic")


class AnalyticUnavailable(RuntimeError):
    """No closed-form expectation for this family; use a Monte Carlo oracle."""


@dataclass(frozen=True)
class LossModel:
    """A loss family instance with its curvature constants.

    L is the smoothness of the expected per-(t,m) losses, mu the strong
    convexity constant (0 when merely convex).
    """

    family: str
    dimension: int
    L: float
    mu: float
    feature_variance: float = 0.0
    separator: np.ndarray | None = None

    def __post_init__(self):
        if self.separator is not None:
            sep = np.asarray(self.separator, dtype=float)
            sep.setflags(write=False)
            object.__setattr__(self, "separator", sep)


def make_loss_model(loss_spec: dict, dimension: int, schedule=None) -> LossModel:
    """Build a LossModel from a config loss_spec.

    empirical_logistic needs the adversary schedule to bound smoothness by the
    largest feature second moment it will ever present.
    """
    if not isinstance(loss_spec, dict):
        raise ConfigError("loss_spec must be an object")
    family = loss_spec.get("family")
    known_keys = {
        "mean_quadratic": {"family"},
        "gaussian_linreg": {"family", "feature_variance"},
        "empirical_logistic": {"family", "separator"},
    }
    if family not in known_keys:
        raise ConfigError(f"unknown loss family {family!r}; expected one of {FAMILIES}")
    extra = set(loss_spec) - known_keys[family]
    if extra:
        raise ConfigError(f"unknown loss_spec fields for {family}: {sorted(extra)}")

    if family == "mean_quadratic":
        return LossModel(family, dimension, L=1.0, mu=1.0)

    if family == "gaussian_linreg":
        s = float(loss_spec.get("feature_variance", 1.0))
        if not np.isfinite(s) or s <= 0:
            raise ConfigError("gaussian_linreg feature_variance must be positive")
        return LossModel(family, dimension, L=s, mu=0.0, feature_variance=s)

    sep = np.asarray(loss_spec.get("separator", ()), dtype=float)
    if sep.shape != (dimension,):
        raise ConfigError("empirical_logistic requires a separator vector matching dimension")
    if schedule is None:
        raise ConfigError("empirical_logistic needs the adversary schedule to bound smoothness")
    means, variances = schedule.tables()
    second_moment = variances / dimension + (means ** 2).sum(axis=-1)
    L = float(second_moment.max()) / 4.0
    if L <= 0:
        raise ConfigError("empirical_logistic smoothness degenerates: features are all zero")
    return LossModel(family, dimension, L=L, mu=0.0, separator=sep)


def _sigmoid(z):
    # stable logistic function
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# single-sample interface

def stochastic_gradient(model: LossModel, x: np.ndarray, xi) -> np.ndarray:
    """Gradient of f(., xi) at x for one sample."""
    x = np.asarray(x, dtype=float)
    if model.family == "mean_quadratic":
        return x - np.asarray(xi, dtype=float)
    if model.family == "gaussian_linreg":
        a, b = xi
        a = np.asarray(a, dtype=float)
        return (float(a @ x) - float(b)) * a
    a, y = xi
    a = np.asarray(a, dtype=float)
    margin = float(a @ x)
    return (-y * float(_sigmoid(np.asarray(-y * margin)))) * a


def realized_loss(model: LossModel, x: np.ndarray, xi) -> float:
    x = np.asarray(x, dtype=float)
    if model.family == "mean_quadratic":
        diff = x - np.asarray(xi, dtype=float)
        return 0.5 * float(diff @ diff)
    if model.family == "gaussian_linreg":
        a, b = xi
        r = float(np.asarray(a, dtype=float) @ x) - float(b)
        return 0.5 * r * r
    a, y = xi
    margin = float(np.asarray(a, dtype=float) @ x)
    return float(np.logaddexp(0.0, -y * margin))


def expected_loss(model: LossModel, params: DistParams, x: np.ndarray) -> float:
    """E_xi f(x, xi) in closed form. Raises AnalyticUnavailable for logistic."""
    x = np.asarray(x, dtype=float)
    diff = x - params.mean
    if model.family == "mean_quadratic":
        return 0.5 * float(diff @ diff) + 0.5 * params.variance
    if model.family == "gaussian_linreg":
        s = model.feature_variance
        return 0.5 * s * float(diff @ diff) + 0.5 * params.variance
    raise AnalyticUnavailable("empirical_logistic has no closed-form expected loss")


def expected_gradient(model: LossModel, params: DistParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if model.family == "mean_quadratic":
        return x - params.mean
    if model.family == "gaussian_linreg":
        return model.feature_variance * (x - params.mean)
    raise AnalyticUnavailable("empirical_logistic has no closed-form expected gradient")


def gradient_variance(model: LossModel, params: DistParams, x: np.ndarray) -> float:
    """E ||g - E g||^2 of the sampled gradient at the point x."""
    x = np.asarray(x, dtype=float)
    if model.family == "mean_quadratic":
        # g = x - xi, so the gradient variance is the data variance, any x
        return float(params.variance)
    if model.family == "gaussian_linreg":
        s = model.feature_variance
        d = model.dimension
        z = x - params.mean
        return s * s * (d + 1) * float(z @ z) + d * s * params.variance
    raise AnalyticUnavailable("empirical_logistic has no closed-form gradient variance")


def gradient_variance_sup(model: LossModel, params: DistParams, radius) -> float:
    """sup over the domain of the gradient variance.

    `radius` is a positive float or core.UNBOUNDED. Families whose variance
    grows with ||x|| reject unbounded domains.
    """
    if model.family == "mean_quadratic":
        return float(params.variance)
    if model.family == "gaussian_linreg":
        if radius == UNBOUNDED:
            raise ConfigError(
                "gaussian_linreg gradient variance is unbounded on an unbounded domain"
            )
        s = model.feature_variance
        d = model.dimension
        reach = float(radius) + float(np.linalg.norm(params.mean))
        return s * s * (d + 1) * reach * reach + d * s * params.variance
    # logistic gradients satisfy ||g|| <= ||a|| regardless of x, so the
    # feature second moment bounds the variance even without projection
    return params.variance + float(params.mean @ params.mean)


def draw_sample(model: LossModel, params: DistParams, stream: RngStream, *context, n: int = 1):
    """Draw n samples in the family's xi structure, keyed by context.

    Returns an (n, d) array for mean_quadratic, or a tuple of arrays
    ((n, d), (n,)) for the regression and classification families.
    """
    gen = stream.generator(*context)
    return draw_with_generator(model, params, gen, n)


def draw_with_generator(model: LossModel, params: DistParams, gen: np.random.Generator, n: int):
    """Sequential draws from a live generator; used by Monte Carlo oracles."""
    d = model.dimension
    mean = params.mean
    var = params.variance
    if model.family == "mean_quadratic":
        z = gen.standard_normal((n, d))
        return mean + math.sqrt(var / d) * z
    if model.family == "gaussian_linreg":
        z = gen.standard_normal((n, d + 1))
        a = math.sqrt(model.feature_variance) * z[:, :d]
        b = a @ mean + math.sqrt(var) * z[:, d]
        return a, b
    z = gen.standard_normal((n, d))
    u = gen.random(n)
    a = mean + math.sqrt(var / d) * z
    y = np.where(u < _sigmoid(a @ model.separator), 1.0, -1.0)
    return a, y


# ---------------------------------------------------------------------------
# batched per-step interface used by the engine

def draw_step_batch(model: LossModel, stream: RngStream, context: tuple, block_rows: int,
                    rows, means_t: np.ndarray, vars_t: np.ndarray) -> dict:
    """Draw one step's samples for a block of replicates.

    The normal block is keyed by `context` alone and shaped
    (block_rows, M, k); `rows` selects which replicate rows this call keeps.
    Because Philox output is a fixed counter stream, any prefix of the block
    is bit-identical across block sizes, which makes chunked and batched
    execution reproduce single-replicate runs exactly.
    """
    M, d = means_t.shape
    if model.family == "mean_quadratic":
        z = stream.generator(*context).standard_normal((block_rows, M, d))[rows]
        scale = np.sqrt(vars_t / d)
        return {"xi": means_t + scale[:, None] * z}
    if model.family == "gaussian_linreg":
        z = stream.generator(*context).standard_normal((block_rows, M, d + 1))[rows]
        a = math.sqrt(model.feature_variance) * z[..., :d]
        noise = np.sqrt(vars_t) * z[..., d]
        b = (a * means_t).sum(axis=-1) + noise
        return {"a": a, "b": b}
    z = stream.generator(*context).standard_normal((block_rows, M, d))[rows]
    u = stream.generator(*context, "labels").random((block_rows, M))[rows]
    scale = np.sqrt(vars_t / d)
    a = means_t + scale[:, None] * z
    y = np.where(u < _sigmoid(a @ model.separator), 1.0, -1.0)
    return {"a": a, "y": y}


def evaluate_batch(model: LossModel, X: np.ndarray, samples: dict):
    """Realized losses and gradients for iterate block X of shape (R, M, d).

    Returns (losses (R, M), gradients (R, M, d)).
    """
    if model.family == "mean_quadratic":
        diff = X - samples["xi"]
        return 0.5 * (diff ** 2).sum(axis=-1), diff
    if model.family == "gaussian_linreg":
        a, b = samples["a"], samples["b"]
        r = (a * X).sum(axis=-1) - b
        return 0.5 * r * r, r[..., None] * a
    a, y = samples["a"], samples["y"]
    margin = (a * X).sum(axis=-1)
    losses = np.logaddexp(0.0, -y * margin)
    grads = (-y * _sigmoid(-y * margin))[..., None] * a
    return losses, grads
