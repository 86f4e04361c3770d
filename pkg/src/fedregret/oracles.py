"""Exact and Monte Carlo oracles: comparators, heterogeneity, gradient variance.

The regret and every bound term are defined against expected losses, so this
module is the single source of "truth" values:

 - families with quadratic expected losses (mean_quadratic, gaussian_linreg)
   get exact closed forms driven by the schedule's moment tables;
 - empirical_logistic gets a frozen large-sample surrogate whose draws are
   keyed by the experiment seed, reused consistently for comparators, regret,
   and heterogeneity so all identities hold exactly under the surrogate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import losses as losses_mod
from .core import RngStream, UNBOUNDED

ZETA_ASCENT_STARTS = 32
ZETA_BOUNDARY_SAMPLES = 10_000
SURROGATE_BUDGET = 2 ** 21  # max total surrogate sample count (T * N * M)


class OracleError(RuntimeError):
    """Comparator or heterogeneity computation failed."""


class InsufficientBudgetError(RuntimeError):
    """Monte Carlo budget too small for the requested tolerance."""


def _project_ball(x: np.ndarray, radius) -> np.ndarray:
    if radius == UNBOUNDED:
        return x
    norms = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    factor = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return x * factor


# ---------------------------------------------------------------------------
# global-loss oracles

class QuadraticOracle:
    """Per-step global expected losses of the form 0.5 c ||x - w_t||^2 + off_t."""

    method = "closed_form"

    def __init__(self, curvature: float, centers: np.ndarray, offsets: np.ndarray):
        self.curvature = float(curvature)
        self.centers = np.asarray(centers, dtype=float)
        self.offsets = np.asarray(offsets, dtype=float)
        self.horizon = self.centers.shape[0]

    def value(self, t: int, X: np.ndarray):
        """f_t at one or many points; X has shape (..., d)."""
        diff = np.asarray(X, dtype=float) - self.centers[t - 1]
        out = 0.5 * self.curvature * (diff * diff).sum(axis=-1) + self.offsets[t - 1]
        return float(out) if out.ndim == 0 else out

    def values_at(self, x: np.ndarray) -> np.ndarray:
        """f_t(x) for every t; returns (T,)."""
        diff = self.centers - np.asarray(x, dtype=float)
        return 0.5 * self.curvature * (diff * diff).sum(axis=-1) + self.offsets

    def gradient(self, t: int, x: np.ndarray) -> np.ndarray:
        return self.curvature * (np.asarray(x, dtype=float) - self.centers[t - 1])

    def minimizer(self, t: int, radius) -> np.ndarray:
        return _project_ball(self.centers[t - 1].copy(), radius)

    def cumulative_minimizer(self, radius) -> np.ndarray:
        # equal curvature every step, so the unconstrained argmin of the sum
        # is the average center, and ball projection preserves optimality
        return _project_ball(self.centers.mean(axis=0), radius)


class SurrogateOracle:
    """Frozen-sample stand-in for families without closed-form expectations.

    A fixed block of samples per (t, m), keyed by ("surrogate", t) under the
    experiment seed, defines every expected quantity. Estimates are tagged
    method="surrogate" in reports.
    """

    method = "surrogate"

    def __init__(self, model, schedule, stream: RngStream, sample_count: int | None = None):
        means, variances = schedule.tables()
        T, M, d = means.shape
        if sample_count is None:
            sample_count = max(128, min(2048, SURROGATE_BUDGET // max(T * M, 1)))
        if T * M * sample_count > 8 * SURROGATE_BUDGET:
            raise OracleError(
                "surrogate oracle would need too many frozen samples; "
                "reduce the horizon or the surrogate sample count")
        self.model = model
        self.horizon = T
        self.sample_count = int(sample_count)
        feats = np.empty((T, sample_count, M, d))
        labels = np.empty((T, sample_count, M))
        for t in range(1, T + 1):
            samples = losses_mod.draw_step_batch(
                model, stream, ("surrogate", t), sample_count, slice(None),
                means[t - 1], variances[t - 1])
            feats[t - 1] = samples["a"]
            labels[t - 1] = samples["y"]
        self._feats = feats
        self._labels = labels

    def value(self, t: int, X: np.ndarray):
        X = np.asarray(X, dtype=float)
        lead = X.shape[:-1]
        d = X.shape[-1]
        flat = X.reshape(-1, d)
        a = self._feats[t - 1].reshape(-1, d)
        y = self._labels[t - 1].reshape(-1)
        margins = flat @ a.T
        vals = np.logaddexp(0.0, -y[None, :] * margins).mean(axis=1)
        out = vals.reshape(lead) if lead else float(vals[0])
        return out

    def values_at(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.value(t, x) for t in range(1, self.horizon + 1)])

    def gradient(self, t: int, x: np.ndarray) -> np.ndarray:
        a = self._feats[t - 1].reshape(-1, x.shape[-1])
        y = self._labels[t - 1].reshape(-1)
        margins = a @ np.asarray(x, dtype=float)
        coef = -y * losses_mod._sigmoid(-y * margins)
        return (coef[:, None] * a).mean(axis=0)

    def client_gradients(self, t: int, X: np.ndarray) -> np.ndarray:
        """Per-client surrogate expected gradients at points X (B, d) -> (B, M, d)."""
        X = np.asarray(X, dtype=float)
        feats = self._feats[t - 1]          # (N, M, d)
        y = self._labels[t - 1]             # (N, M)
        margins = np.einsum("nmd,bd->bnm", feats, X)
        coef = -y[None] * losses_mod._sigmoid(-y[None] * margins)
        return np.einsum("bnm,nmd->bmd", coef, feats) / feats.shape[0]

    def _solve(self, grad, radius, scale: float) -> np.ndarray:
        L = max(self.model.L, 1e-12)
        x = np.zeros(self._feats.shape[-1])
        step = 1.0 / L
        for _ in range(20_000):
            g = grad(x)
            x_next = _project_ball(x - step * g, radius)
            move = float(np.linalg.norm(x_next - x))
            x = x_next
            if move <= 1e-12 * (1.0 + float(np.linalg.norm(x))):
                return x
        raise OracleError(
            f"comparator solver failed to converge (last move {move:g}, scale {scale:g})")

    def minimizer(self, t: int, radius) -> np.ndarray:
        if radius == UNBOUNDED:
            raise OracleError("empirical_logistic comparators require a bounded domain")
        return self._solve(lambda x: self.gradient(t, x), radius, 1.0)

    def cumulative_minimizer(self, radius) -> np.ndarray:
        if radius == UNBOUNDED:
            raise OracleError("empirical_logistic comparators require a bounded domain")

        def grad(x):
            g = np.zeros_like(x)
            for t in range(1, self.horizon + 1):
                g += self.gradient(t, x)
            return g / self.horizon

        return self._solve(grad, radius, float(self.horizon))


def make_global_oracle(model, schedule, radius, stream: RngStream):
    """Choose the oracle implementation the loss family supports."""
    means, variances = schedule.tables()
    if model.family in ("mean_quadratic", "gaussian_linreg"):
        c = 1.0 if model.family == "mean_quadratic" else model.feature_variance
        centers = means.mean(axis=1)
        spread = ((means - centers[:, None, :]) ** 2).sum(axis=-1).mean(axis=1)
        offsets = 0.5 * c * spread + 0.5 * variances.mean(axis=1)
        return QuadraticOracle(c, centers, offsets)
    return SurrogateOracle(model, schedule, stream)


# ---------------------------------------------------------------------------
# comparators

@dataclass
class ComparatorSet:
    """Best-in-hindsight and per-step minimizers with solver diagnostics."""

    xstar: np.ndarray             # (d,) argmin of the cumulative expected loss
    per_step: np.ndarray          # (T, d) argmin of each f_t
    value_at_xstar: np.ndarray    # (T,) f_t(x*)
    min_values: np.ndarray        # (T,) f_t(x_t*)
    method: str                   # "closed_form" | "surrogate"
    residual_xstar: float
    residual_per_step: float


def _tangential_residual(g: np.ndarray, x: np.ndarray, radius) -> float:
    """First-order optimality residual for a minimizer on the ball.

    Interior points must zero the gradient. Boundary points must zero the
    tangential component, and the radial component may only point inward
    (an outward gradient means moving back inside would improve).
    """
    nx = float(np.linalg.norm(x))
    if radius == UNBOUNDED or nx < float(radius) * (1 - 1e-9):
        return float(np.linalg.norm(g))
    xhat = x / max(nx, 1e-300)
    radial = float(g @ xhat)
    tangential = g - radial * xhat
    return math.hypot(float(np.linalg.norm(tangential)), max(radial, 0.0))


def compute_comparators(oracle, radius) -> ComparatorSet:
    """Solve the hindsight and per-step problems under the given oracle."""
    T = oracle.horizon
    xstar = oracle.cumulative_minimizer(radius)
    per_step = np.stack([oracle.minimizer(t, radius) for t in range(1, T + 1)])
    value_at_xstar = oracle.values_at(xstar)
    min_values = np.array([oracle.value(t, per_step[t - 1]) for t in range(1, T + 1)])

    grad_sum = np.zeros_like(xstar)
    res_step = 0.0
    for t in range(1, T + 1):
        grad_sum += oracle.gradient(t, xstar)
        res_step = max(res_step,
                       _tangential_residual(oracle.gradient(t, per_step[t - 1]),
                                            per_step[t - 1], radius))
    res_star = _tangential_residual(grad_sum / T, xstar, radius)

    neg = value_at_xstar - min_values
    worst = float(neg.min())
    if worst < -1e-9 * (1.0 + float(np.abs(value_at_xstar).max())):
        raise OracleError(
            f"per-step minimizer beats its own minimum by {-worst:g}; comparator solver failed")

    return ComparatorSet(
        xstar=xstar,
        per_step=per_step,
        value_at_xstar=value_at_xstar,
        min_values=min_values,
        method=oracle.method,
        residual_xstar=res_star,
        residual_per_step=res_step,
    )


# ---------------------------------------------------------------------------
# heterogeneity and variance profiles

@dataclass
class HeterogeneityProfile:
    """Per-step heterogeneity and gradient-variance arrays with exact averages."""

    zeta_sq: np.ndarray     # (T,) spatial: max_x mean_m ||grad gap||^2
    k_sq: np.ndarray        # (T,) temporal: f_t(x*) - f_t(x_t*)
    sigma_sq: np.ndarray    # (T,) mean_m sup_x gradient variance
    zeta_bar_sq: float
    k_bar_sq: float
    sigma_bar_sq: float
    zeta_max_sq: float
    k_max_sq: float
    sigma_max_sq: float
    methods: dict = field(default_factory=dict)

    @staticmethod
    def from_arrays(zeta_sq, k_sq, sigma_sq, methods) -> "HeterogeneityProfile":
        zeta_sq = np.asarray(zeta_sq, dtype=float)
        k_sq = np.asarray(k_sq, dtype=float)
        sigma_sq = np.asarray(sigma_sq, dtype=float)
        return HeterogeneityProfile(
            zeta_sq=zeta_sq, k_sq=k_sq, sigma_sq=sigma_sq,
            zeta_bar_sq=float(np.mean(zeta_sq)),
            k_bar_sq=float(np.mean(k_sq)),
            sigma_bar_sq=float(np.mean(sigma_sq)),
            zeta_max_sq=float(np.max(zeta_sq)),
            k_max_sq=float(np.max(k_sq)),
            sigma_max_sq=float(np.max(sigma_sq)),
            methods=dict(methods),
        )


def _closed_form_zeta(model, schedule) -> np.ndarray:
    means, _ = schedule.tables()
    c = 1.0 if model.family == "mean_quadratic" else model.feature_variance
    centers = means.mean(axis=1)
    spread = ((means - centers[:, None, :]) ** 2).sum(axis=-1).mean(axis=1)
    return c * c * spread


def variance_profile(model, schedule, radius) -> np.ndarray:
    """sigma_t^2 = mean_m sup_x Var(grad f(x, xi)) under the (t, m) distribution."""
    means, variances = schedule.tables()
    T, M, d = means.shape
    if model.family == "mean_quadratic":
        return variances.mean(axis=1)
    if model.family == "gaussian_linreg":
        if radius == UNBOUNDED:
            raise OracleError(
                "gaussian_linreg gradient variance is unbounded on an unbounded domain")
        s = model.feature_variance
        reach = float(radius) + np.sqrt((means ** 2).sum(axis=-1))
        per_client = s * s * (d + 1) * reach ** 2 + d * s * variances
        return per_client.mean(axis=1)
    # logistic: ||grad|| <= ||a|| everywhere, so the feature second moment
    # bounds the variance uniformly in x
    per_client = variances + (means ** 2).sum(axis=-1)
    return per_client.mean(axis=1)


def max_gradient_gap(grads_at, dimension: int, radius: float, stream: RngStream,
                     context=("zeta-search",), starts: int = ZETA_ASCENT_STARTS,
                     boundary_samples: int = ZETA_BOUNDARY_SAMPLES) -> float:
    """max over the ball of phi(x) = mean_m ||g_m(x) - gbar(x)||^2.

    grads_at maps points (B, d) to per-client gradients (B, M, d). The max of
    this convex function sits on the boundary; a dense boundary sample is
    cross-checked against multi-start projected ascent with finite-difference
    gradients, and the larger value wins.
    """
    radius = float(radius)

    def phi(P: np.ndarray) -> np.ndarray:
        G = grads_at(P)
        dev = G - G.mean(axis=1, keepdims=True)
        return (dev * dev).sum(axis=(1, 2)) / G.shape[1]

    gen = stream.generator(*context)
    z = gen.standard_normal((max(boundary_samples, starts), dimension))
    norms = np.maximum(np.sqrt((z * z).sum(axis=1, keepdims=True)), 1e-300)
    boundary = radius * z / norms
    vals = phi(boundary)
    best = float(vals.max())

    h = 1e-5 * (1.0 + radius)
    eye = np.eye(dimension)
    for i in range(starts):
        x = boundary[i].copy()
        step = radius / 8.0
        fx = float(phi(x[None])[0])
        for _ in range(120):
            probes = np.concatenate([x + h * eye, x - h * eye])
            pv = phi(probes)
            g = (pv[:dimension] - pv[dimension:]) / (2.0 * h)
            gnorm = float(np.linalg.norm(g))
            if gnorm < 1e-14:
                break
            cand = _project_ball(x + step * (g / gnorm), radius)
            fc = float(phi(cand[None])[0])
            if fc > fx:
                x, fx = cand, fc
            else:
                step *= 0.5
                if step < 1e-10 * radius:
                    break
        # convexity puts the max on the sphere; snap outward before scoring
        nx = float(np.linalg.norm(x))
        if 0 < nx < radius:
            x = x * (radius / nx)
            fx = max(fx, float(phi(x[None])[0]))
        best = max(best, fx)
    return best


def spatial_heterogeneity(model, schedule, t: int, radius, oracle=None,
                          stream: RngStream | None = None) -> float:
    """zeta_t^2 for one step: exact when the gradient gaps are x-independent,
    otherwise a boundary-search maximum (requires a bounded domain)."""
    if model.family in ("mean_quadratic", "gaussian_linreg"):
        return float(_closed_form_zeta(model, schedule)[t - 1])
    if radius == UNBOUNDED:
        raise OracleError(
            "spatial heterogeneity with x-dependent gradients needs a bounded domain")
    if oracle is None or stream is None:
        raise OracleError("x-dependent spatial heterogeneity needs the surrogate oracle")
    return max_gradient_gap(
        lambda P: oracle.client_gradients(t, P), model.dimension, radius,
        stream, context=("zeta-search", t))


def compute_profile(model, schedule, radius, comparators: ComparatorSet,
                    oracle=None, stream: RngStream | None = None) -> HeterogeneityProfile:
    """All three per-step profiles plus exact aggregates."""
    T = schedule.horizon
    k_sq = comparators.value_at_xstar - comparators.min_values
    scale = 1.0 + float(np.abs(comparators.value_at_xstar).max())
    if float(k_sq.min()) < -1e-9 * scale:
        raise OracleError("temporal heterogeneity came out negative; comparator solve failed")
    k_sq = np.maximum(k_sq, 0.0)

    methods = {"k_sq": comparators.method, "sigma_sq": "closed_form"}
    if model.family in ("mean_quadratic", "gaussian_linreg"):
        zeta_sq = _closed_form_zeta(model, schedule)
        methods["zeta_sq"] = "closed_form"
    else:
        zeta_sq = np.array([
            spatial_heterogeneity(model, schedule, t, radius, oracle, stream)
            for t in range(1, T + 1)
        ])
        methods["zeta_sq"] = "approximate"
        methods["sigma_sq"] = "upper_bound"
    sigma_sq = variance_profile(model, schedule, radius)
    return HeterogeneityProfile.from_arrays(zeta_sq, k_sq, sigma_sq, methods)


def temporal_heterogeneity(comparators: ComparatorSet, t: int) -> float:
    """K_t^2 = f_t(x*) - f_t(x_t*) from an already-solved comparator set."""
    return float(max(comparators.value_at_xstar[t - 1] - comparators.min_values[t - 1], 0.0))


# ---------------------------------------------------------------------------
# Monte Carlo estimators

def _loss_values(model, x: np.ndarray, samples) -> np.ndarray:
    if model.family == "mean_quadratic":
        diff = samples - x
        return 0.5 * (diff * diff).sum(axis=-1)
    if model.family == "gaussian_linreg":
        a, b = samples
        r = a @ x - b
        return 0.5 * r * r
    a, y = samples
    return np.logaddexp(0.0, -y * (a @ x))


def mc_expected_loss(model, params, x, budget: int, stream: RngStream,
                     *context) -> tuple[float, float]:
    """Monte Carlo estimate of E f(x, xi) with its standard error.

    Draws are keyed by `context`, chunked internally; the estimate is
    deterministic given (seed, context, budget).
    """
    if budget < 2:
        raise ValueError("Monte Carlo budget must be at least 2")
    x = np.asarray(x, dtype=float)
    gen = stream.generator(*context)
    chunk = 1 << 15
    n = 0
    s1 = 0.0
    s2 = 0.0
    remaining = int(budget)
    while remaining > 0:
        k = min(chunk, remaining)
        samples = losses_mod.draw_with_generator(model, params, gen, k)
        vals = _loss_values(model, x, samples)
        s1 += float(vals.sum())
        s2 += float((vals * vals).sum())
        n += k
        remaining -= k
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0) * (n / (n - 1))
    return mean, math.sqrt(var / n)


def mc_gradient_moments(model, params, x, budget: int, stream: RngStream,
                        *context) -> dict:
    """Monte Carlo mean gradient and total gradient variance at a point."""
    if budget < 2:
        raise ValueError("Monte Carlo budget must be at least 2")
    x = np.asarray(x, dtype=float)
    gen = stream.generator(*context)
    chunk = 1 << 15
    d = model.dimension
    n = 0
    gsum = np.zeros(d)
    sqsum = 0.0
    sq2sum = 0.0
    remaining = int(budget)
    while remaining > 0:
        k = min(chunk, remaining)
        samples = losses_mod.draw_with_generator(model, params, gen, k)
        grads = _grad_values(model, x, samples)
        gsum += grads.sum(axis=0)
        sq = (grads * grads).sum(axis=1)
        sqsum += float(sq.sum())
        sq2sum += float((sq * sq).sum())
        n += k
        remaining -= k
    gmean = gsum / n
    second = sqsum / n
    variance = max(second - float(gmean @ gmean), 0.0)
    # SE of the squared-norm mean dominates the variance estimator error
    se_second = math.sqrt(max(sq2sum / n - second * second, 0.0) / n)
    return {"mean": gmean, "variance": variance, "se": se_second, "n": n}


def _grad_values(model, x: np.ndarray, samples) -> np.ndarray:
    if model.family == "mean_quadratic":
        return x - samples
    if model.family == "gaussian_linreg":
        a, b = samples
        return (a @ x - b)[:, None] * a
    a, y = samples
    coef = -y * losses_mod._sigmoid(-y * (a @ x))
    return coef[:, None] * a
