"""Configuration types, step-size schedules, and counter-keyed randomness.

Everything downstream is deterministic given an ExperimentConfig: random
draws are keyed by (seed, purpose, step) and a block row index, never by
call order, so batched and single-replicate executions see identical bits.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

import numpy as np

UNBOUNDED = "unbounded"

_MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Raised for invalid or inconsistent experiment configuration."""


class UnsupportedDistributionError(ConfigError):
    """Raised when a distribution family outside the supported set is requested."""


# ---------------------------------------------------------------------------
# distributions

@dataclass(frozen=True)
class DistParams:
    """Per-(step, client) data distribution.

    kind is "gaussian" (isotropic, `variance` = total variance E||xi - mean||^2)
    or "point_mass" (variance must be 0).
    """

    kind: str
    mean: np.ndarray
    variance: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        if mean.ndim != 1:
            raise ConfigError("distribution mean must be a 1-d vector")
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        if self.kind not in ("gaussian", "point_mass"):
            raise UnsupportedDistributionError(f"unsupported distribution family: {self.kind!r}")
        if not np.isfinite(self.variance) or self.variance < 0:
            raise ConfigError("distribution variance must be finite and >= 0")
        if self.kind == "point_mass" and self.variance != 0:
            raise ConfigError("point mass distribution cannot carry variance")

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]


def gaussian(mean, variance: float) -> DistParams:
    mean = np.asarray(mean, dtype=float)
    if variance == 0:
        return DistParams("point_mass", mean, 0.0)
    return DistParams("gaussian", mean, float(variance))


def point_mass(value) -> DistParams:
    return DistParams("point_mass", np.asarray(value, dtype=float), 0.0)


# ---------------------------------------------------------------------------
# counter-keyed RNG

def _splitmix64(x: int) -> int:
    """One step of the splitmix64 mixer; full 64-bit avalanche."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _token_to_int(token) -> int:
    if isinstance(token, (int, np.integer)):
        return int(token) & _MASK64
    if isinstance(token, str):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"RNG context tokens must be int or str, got {type(token).__name__}")


@dataclass(frozen=True)
class RngStream:
    """Keyed source of numpy Generators.

    `generator(*context)` derives a 128-bit Philox key from the seed and the
    context tokens. Identical (seed, context) pairs give identical bits no
    matter when or where the call happens, which is what makes replicate
    batching and thread scheduling invisible in the output.
    """

    seed: int

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)):
            raise ConfigError("seed must be an integer")
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)

    def key_words(self, *context) -> tuple[int, int]:
        state = _splitmix64(self.seed)
        for token in context:
            state = _splitmix64(state ^ _token_to_int(token))
        lo = _splitmix64(state)
        hi = _splitmix64(lo)
        return lo, hi

    def key(self, *context) -> int:
        lo, hi = self.key_words(*context)
        return lo | (hi << 64)

    def generator(self, *context) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key(*context)))


def sample(stream: RngStream, params: DistParams, *context, n: int = 1) -> np.ndarray:
    """Draw n points from `params`, keyed by `context`. Returns (n, d).

    Isotropic Gaussian: mean + sqrt(variance/d) * z. Point mass: the mean,
    repeated. Call order is irrelevant; only (seed, context) matters.
    """
    if n < 1:
        raise ConfigError("sample count must be >= 1")
    d = params.dimension
    if params.kind == "point_mass" or params.variance == 0.0:
        return np.tile(params.mean, (n, 1))
    z = stream.generator(*context).standard_normal((n, d))
    return params.mean + math.sqrt(params.variance / d) * z


# ---------------------------------------------------------------------------
# step sizes

@dataclass(frozen=True)
class StepSizePolicy:
    """Step-size schedule selector.

    kinds: "constant" (needs eta), "theory_convex", "decaying_strongly_convex",
    "custom_sequence" (needs values). `unsafe=True` skips the theory caps for
    constant/custom policies.
    """

    kind: str
    eta: float | None = None
    values: tuple[float, ...] | None = None
    unsafe: bool = False

    _KINDS = ("constant", "theory_convex", "decaying_strongly_convex", "custom_sequence")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ConfigError(f"unknown step size policy {self.kind!r}")
        if self.kind == "constant" and (self.eta is None or self.eta <= 0):
            raise ConfigError("constant policy requires eta > 0")
        if self.kind == "custom_sequence":
            if not self.values:
                raise ConfigError("custom_sequence policy requires a values list")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.eta is not None:
            out["eta"] = float(self.eta)
        if self.values is not None:
            out["values"] = list(self.values)
        if self.unsafe:
            out["unsafe"] = True
        return out

    @staticmethod
    def from_dict(obj) -> "StepSizePolicy":
        if isinstance(obj, StepSizePolicy):
            return obj
        if isinstance(obj, str):
            return StepSizePolicy(kind=obj)
        if not isinstance(obj, dict):
            raise ConfigError("step_size_policy must be a string or an object")
        known = {"kind", "eta", "values", "unsafe"}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown step_size_policy fields: {sorted(extra)}")
        return StepSizePolicy(
            kind=obj.get("kind", ""),
            eta=obj.get("eta"),
            values=tuple(obj["values"]) if "values" in obj else None,
            unsafe=bool(obj.get("unsafe", False)),
        )


@dataclass(frozen=True)
class TheoryConstants:
    """Problem constants the tuned schedules need.

    L: smoothness of the expected losses; mu: strong convexity (0 if merely
    convex); D: ||x_1 - x*||; sigma_bar_sq / k_bar_sq: horizon averages of the
    gradient-variance and temporal-heterogeneity profiles.
    """

    L: float
    mu: float = 0.0
    D: float = 0.0
    sigma_bar_sq: float = 0.0
    k_bar_sq: float = 0.0


def _stability_cap(L: float, tau: int) -> float:
    # binding precondition for the drift analysis: 1/(8L), tightened by
    # 1/(4 sqrt(6) L (tau-1)) once local steps accumulate between syncs
    cap = 1.0 / (8.0 * L)
    if tau > 1:
        cap = min(cap, 1.0 / (4.0 * math.sqrt(6.0) * L * (tau - 1)))
    return cap


def resolve_step_sizes(
    policy: StepSizePolicy,
    horizon: int,
    sync_period: int,
    num_clients: int,
    constants: TheoryConstants,
) -> np.ndarray:
    """Materialize the per-step schedule eta_1..eta_T.

    Raises ConfigError when a constant/custom schedule violates the theory
    precondition (unless the policy is flagged unsafe), when the decaying
    schedule is asked for without strong convexity, or when the tuned convex
    schedule degenerates.
    """
    T, tau = horizon, sync_period
    L = constants.L
    if L <= 0 or not np.isfinite(L):
        raise ConfigError("smoothness constant L must be positive and finite")

    if policy.kind == "constant":
        eta = float(policy.eta)
        cap = _stability_cap(L, tau)
        if not policy.unsafe and eta > cap * (1 + 1e-12):
            raise ConfigError(
                f"step size violates theory precondition: eta={eta:g} exceeds cap {cap:g} "
                f"for L={L:g}, tau={tau} (set unsafe=true to override)"
            )
        etas = np.full(T, eta)

    elif policy.kind == "theory_convex":
        terms = [1.0 / (8.0 * L), 1.0 / (4.0 * math.sqrt(6.0) * L * max(tau - 1, 1))]
        denom = T * (constants.sigma_bar_sq / num_clients + L * constants.k_bar_sq)
        # tuned term drops out when there is no variance or temporal drift
        if denom > 0:
            if constants.D <= 0:
                raise ConfigError(
                    "theory_convex schedule degenerates: initial point coincides with "
                    "the comparator (D = 0) while noise terms are active"
                )
            terms.append(constants.D / math.sqrt(denom))
        etas = np.full(T, min(terms))

    elif policy.kind == "decaying_strongly_convex":
        mu = constants.mu
        if mu <= 0:
            raise ConfigError("decaying_strongly_convex requires mu > 0")
        t = np.arange(1, T + 1, dtype=float)
        etas = 2.0 / (mu * t)
        if tau > 1:
            etas = np.minimum(etas, 1.0 / (4.0 * L * (tau - 1)))

    elif policy.kind == "custom_sequence":
        values = np.asarray(policy.values, dtype=float)
        if values.shape != (T,):
            raise ConfigError(f"custom_sequence length {values.size} does not match horizon {T}")
        if not policy.unsafe and tau > 1:
            cap = 1.0 / (4.0 * L * (tau - 1))
            if np.any(values > cap * (1 + 1e-12)):
                raise ConfigError(
                    f"step size violates theory precondition: custom sequence exceeds "
                    f"drift cap {cap:g} for tau={tau} (set unsafe=true to override)"
                )
        etas = values.copy()

    else:  # pragma: no cover - guarded in StepSizePolicy
        raise ConfigError(f"unknown step size policy {policy.kind!r}")

    if np.any(~np.isfinite(etas)) or np.any(etas <= 0):
        raise ConfigError("resolved step sizes must be positive and finite")
    if np.any(np.diff(etas) > 1e-15):
        raise ConfigError("resolved step sizes must be non-increasing")
    etas.setflags(write=False)
    return etas


# ---------------------------------------------------------------------------
# experiment configuration

@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment; mirrors the JSON config format."""

    num_clients: int
    horizon: int
    sync_period: int
    dimension: int
    step_size_policy: StepSizePolicy
    loss_spec: dict
    adversary_spec: dict
    projection_radius: float | str = UNBOUNDED
    replicates: int = 1
    seed: int = 0
    initial_point: tuple[float, ...] | None = None
    sync_phase: int = 0  # advanced: shifts which steps trigger averaging

    def __post_init__(self):
        if self.num_clients < 1:
            raise ConfigError("num_clients must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.sync_period < 1:
            raise ConfigError("sync_period must be >= 1")
        if self.dimension < 1:
            raise ConfigError("dimension must be >= 1")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not (0 <= self.sync_phase < self.sync_period):
            raise ConfigError("sync_phase must lie in [0, sync_period)")
        if isinstance(self.projection_radius, str):
            if self.projection_radius != UNBOUNDED:
                raise ConfigError(f'projection_radius must be a positive number or "{UNBOUNDED}"')
        else:
            r = float(self.projection_radius)
            if not np.isfinite(r) or r <= 0:
                raise ConfigError("projection_radius must be positive and finite")
            object.__setattr__(self, "projection_radius", r)
        policy = StepSizePolicy.from_dict(self.step_size_policy)
        object.__setattr__(self, "step_size_policy", policy)
        if self.initial_point is not None:
            x1 = tuple(float(v) for v in self.initial_point)
            if len(x1) != self.dimension:
                raise ConfigError("initial_point length does not match dimension")
            object.__setattr__(self, "initial_point", x1)
        if not isinstance(self.loss_spec, dict) or "family" not in self.loss_spec:
            raise ConfigError('loss_spec must be an object with a "family" field')
        if not isinstance(self.adversary_spec, dict) or "kind" not in self.adversary_spec:
            raise ConfigError('adversary_spec must be an object with a "kind" field')

    # -- derived values

    @property
    def bounded(self) -> bool:
        return self.projection_radius != UNBOUNDED

    @property
    def radius(self) -> float:
        if not self.bounded:
            raise ConfigError("domain is unbounded; no radius available")
        return float(self.projection_radius)

    def start_point(self) -> np.ndarray:
        if self.initial_point is None:
            return np.zeros(self.dimension)
        x1 = np.asarray(self.initial_point, dtype=float)
        if self.bounded and float(np.linalg.norm(x1)) > self.radius * (1 + 1e-12):
            raise ConfigError("initial_point lies outside the projection ball")
        return x1

    def sync_steps(self) -> np.ndarray:
        """Boolean mask over t=1..T: True where averaging runs after the update."""
        t = np.arange(1, self.horizon + 1)
        return (t - 1 - self.sync_phase) % self.sync_period == 0

    def stream(self) -> RngStream:
        return RngStream(self.seed)

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)

    # -- serialization

    def to_dict(self) -> dict:
        out = {
            "num_clients": self.num_clients,
            "horizon": self.horizon,
            "sync_period": self.sync_period,
            "dimension": self.dimension,
            "step_size_policy": self.step_size_policy.to_dict(),
            "projection_radius": self.projection_radius,
            "replicates": self.replicates,
            "seed": self.seed,
            "loss_spec": json.loads(json.dumps(self.loss_spec)),
            "adversary_spec": json.loads(json.dumps(self.adversary_spec)),
        }
        if self.initial_point is not None:
            out["initial_point"] = list(self.initial_point)
        if self.sync_phase:
            out["sync_phase"] = self.sync_phase
        return out

    @staticmethod
    def from_dict(obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        required = {
            "num_clients", "horizon", "sync_period", "dimension",
            "step_size_policy", "loss_spec", "adversary_spec",
        }
        missing = required - set(obj)
        if missing:
            raise ConfigError(f"config missing required fields: {sorted(missing)}")
        known = required | {
            "projection_radius", "replicates", "seed", "initial_point", "sync_phase",
        }
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        kwargs = dict(obj)
        kwargs["step_size_policy"] = StepSizePolicy.from_dict(obj["step_size_policy"])
        if "initial_point" in kwargs and kwargs["initial_point"] is not None:
            kwargs["initial_point"] = tuple(kwargs["initial_point"])
        return ExperimentConfig(**kwargs)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def load_config(path_or_obj) -> ExperimentConfig:
    """Load an ExperimentConfig from a JSON file path or a parsed dict."""
    if isinstance(path_or_obj, dict):
        return ExperimentConfig.from_dict(path_or_obj)
    with open(path_or_obj, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(obj)
