"""Adversary schedules: deterministic maps from (step, client) to data moments.

Every schedule is oblivious. It is fixed before the run, never reads
iterates, and reduces to two tables: per-(t, m) mean vectors (T, M, d) and
per-(t, m) total variances (T, M). All heterogeneity and bound oracles work
off these tables.
"""

from __future__ import annotations

import numpy as np

from .core import ConfigError, DistParams, gaussian

KINDS = (
    "static_iid",
    "static_heterogeneous",
    "drifting_means",
    "cyclic_means",
    "piecewise_shift",
    "dirac_adversarial",
)


def _client_means(obj, num_clients: int, dimension: int, label: str) -> np.ndarray:
    """Canonicalize a mean spec: (d,) shared across clients, or (M, d)."""
    arr = np.asarray(obj, dtype=float)
    if arr.shape == (dimension,):
        arr = np.tile(arr, (num_clients, 1))
    if arr.shape != (num_clients, dimension):
        raise ConfigError(
            f"{label} must be a vector of length {dimension} or a {num_clients} x "
            f"{dimension} array, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{label} entries must be finite")
    return arr


def _client_variances(obj, num_clients: int, label: str) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == 0:
        arr = np.full(num_clients, float(arr))
    if arr.shape != (num_clients,):
        raise ConfigError(f"{label} must be a scalar or a length-{num_clients} list")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ConfigError(f"{label} entries must be finite and >= 0")
    return arr


class AdversarySchedule:
    """Materialized schedule bound to a (num_clients, dimension, horizon) box."""

    def __init__(self, kind: str, num_clients: int, dimension: int, horizon: int,
                 means: np.ndarray, variances: np.ndarray):
        if means.shape != (horizon, num_clients, dimension):
            raise ConfigError("schedule mean table has the wrong shape")
        if variances.shape != (horizon, num_clients):
            raise ConfigError("schedule variance table has the wrong shape")
        means = np.ascontiguousarray(means, dtype=float)
        variances = np.ascontiguousarray(variances, dtype=float)
        means.setflags(write=False)
        variances.setflags(write=False)
        self.kind = kind
        self.num_clients = num_clients
        self.dimension = dimension
        self.horizon = horizon
        self._means = means
        self._variances = variances

    def tables(self) -> tuple[np.ndarray, np.ndarray]:
        """(means (T, M, d), variances (T, M)); read-only views."""
        return self._means, self._variances

    def _check_index(self, t: int, m: int):
        if not 1 <= t <= self.horizon:
            raise ConfigError(f"step index t={t} out of range [1, {self.horizon}]")
        if not 1 <= m <= self.num_clients:
            raise ConfigError(f"client index m={m} out of range [1, {self.num_clients}]")

    def dist_params(self, t: int, m: int) -> DistParams:
        """Distribution handed to client m at step t (1-indexed)."""
        self._check_index(t, m)
        return gaussian(self._means[t - 1, m - 1], float(self._variances[t - 1, m - 1]))

    def analytic_moments(self, t: int, m: int) -> dict:
        """Exact first and second moments of the (t, m) distribution."""
        self._check_index(t, m)
        return {
            "mean": self._means[t - 1, m - 1].copy(),
            "variance": float(self._variances[t - 1, m - 1]),
        }


def make_schedule(spec: dict, num_clients: int, dimension: int, horizon: int) -> AdversarySchedule:
    """Build a schedule from a config adversary_spec."""
    if not isinstance(spec, dict):
        raise ConfigError("adversary_spec must be an object")
    kind = spec.get("kind")
    M, d, T = num_clients, dimension, horizon

    known_keys = {
        "static_iid": {"kind", "mean", "variance"},
        "static_heterogeneous": {"kind", "means", "variances"},
        "drifting_means": {"kind", "base", "velocity", "variance"},
        "cyclic_means": {"kind", "base", "amplitude", "period", "direction", "variance"},
        "piecewise_shift": {"kind", "shift_times", "segment_means", "variance"},
        "dirac_adversarial": {"kind", "points"},
    }
    if kind not in known_keys:
        raise ConfigError(f"unknown adversary kind {kind!r}; expected one of {KINDS}")
    extra = set(spec) - known_keys[kind]
    if extra:
        raise ConfigError(f"unknown adversary_spec fields for {kind}: {sorted(extra)}")

    if kind == "static_iid":
        mean = np.asarray(spec.get("mean", np.zeros(d)), dtype=float)
        if mean.shape != (d,):
            raise ConfigError(f"static_iid mean must have length {d}")
        var = float(spec.get("variance", 1.0))
        means = np.tile(mean, (T, M, 1))
        variances = np.full((T, M), var)

    elif kind == "static_heterogeneous":
        base = _client_means(spec.get("means"), M, d, "static_heterogeneous means")
        var = _client_variances(spec.get("variances", 1.0), M, "variances")
        means = np.tile(base, (T, 1, 1))
        variances = np.tile(var, (T, 1))

    elif kind == "drifting_means":
        base = _client_means(spec.get("base", np.zeros(d)), M, d, "drifting_means base")
        velocity = np.asarray(spec.get("velocity"), dtype=float)
        if velocity.shape != (d,):
            raise ConfigError(f"drifting_means velocity must have length {d}")
        var = _client_variances(spec.get("variance", 1.0), M, "variance")
        ts = np.arange(1, T + 1, dtype=float)
        means = base[None, :, :] + ts[:, None, None] * velocity[None, None, :]
        variances = np.tile(var, (T, 1))

    elif kind == "cyclic_means":
        base = _client_means(spec.get("base", np.zeros(d)), M, d, "cyclic_means base")
        amplitude = float(spec.get("amplitude", 1.0))
        period = int(spec.get("period", 2))
        if period < 1:
            raise ConfigError("cyclic_means period must be >= 1")
        direction = np.asarray(spec.get("direction", np.eye(d)[0]), dtype=float)
        if direction.shape != (d,):
            raise ConfigError(f"cyclic_means direction must have length {d}")
        var = _client_variances(spec.get("variance", 1.0), M, "variance")
        ts = np.arange(1, T + 1, dtype=float)
        phase = amplitude * np.cos(2.0 * np.pi * (ts - 1.0) / period)
        means = base[None, :, :] + phase[:, None, None] * direction[None, None, :]
        variances = np.tile(var, (T, 1))

    elif kind == "piecewise_shift":
        shift_times = [int(v) for v in spec.get("shift_times", ())]
        if any(s <= 1 or s > T for s in shift_times) or sorted(set(shift_times)) != shift_times:
            raise ConfigError("piecewise_shift shift_times must be strictly increasing in (1, horizon]")
        segments = spec.get("segment_means")
        if not isinstance(segments, (list, tuple)) or len(segments) != len(shift_times) + 1:
            raise ConfigError("piecewise_shift needs len(shift_times)+1 segment_means")
        seg_means = np.stack([
            _client_means(seg, M, d, f"segment_means[{i}]") for i, seg in enumerate(segments)
        ])
        var = _client_variances(spec.get("variance", 1.0), M, "variance")
        ts = np.arange(1, T + 1)
        seg_idx = np.searchsorted(np.asarray(shift_times), ts, side="right")
        means = seg_means[seg_idx]
        variances = np.tile(var, (T, 1))

    else:  # dirac_adversarial
        points = np.asarray(spec.get("points"), dtype=float)
        if points.ndim == 1:
            points = points[None, :]
        if points.ndim != 2 or points.shape[1] != d or points.shape[0] < 1:
            raise ConfigError(f"dirac_adversarial points must be a nonempty list of length-{d} vectors")
        idx = (np.arange(1, T + 1) - 1) % points.shape[0]
        means = np.tile(points[idx][:, None, :], (1, M, 1))
        variances = np.zeros((T, M))

    return AdversarySchedule(kind, M, d, T, means, variances)
