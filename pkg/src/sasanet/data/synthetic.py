"""Synthetic tasks with analytically known subset expectations and Shapley values."""
from __future__ import annotations

import numpy as np

from .dataset import DataError, Dataset
from .schema import CONTINUOUS, continuous_schema


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LinearTaskTruth:
    """Closed forms for y = w.x + noise with independent standard-normal features.

    Independence and zero means make both the conditional label expectation
    and the Shapley attribution of that expectation exactly per-feature:
    E[y | x_S] = sum_{i in S} w_i x_i and phi_i(x) = w_i x_i.
    """

    def __init__(self, weights: np.ndarray, noise_std: float):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.noise_std = float(noise_std)

    def subset_expectation(self, x: np.ndarray, indices) -> float:
        idx = list(indices)
        return float(np.sum(self.weights[idx] * np.asarray(x)[idx]))

    def shapley(self, x: np.ndarray) -> np.ndarray:
        return self.weights * np.asarray(x, dtype=np.float64)

    @property
    def mean_label(self) -> float:
        return 0.0


def synth_linear_regression(n_features: int, weights, noise_std: float,
                            n_samples: int, seed: int) -> tuple[Dataset, LinearTaskTruth]:
    if n_features < 2:
        raise DataError("linear task needs at least 2 features")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (n_features,):
        raise DataError(f"weights shape {weights.shape} != ({n_features},)")
    if noise_std < 0:
        raise DataError("noise_std must be non-negative")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_samples, n_features))
    y = x @ weights + (noise_std * rng.standard_normal(n_samples) if noise_std > 0 else 0.0)
    ds = Dataset(continuous_schema(n_features), x, y, normalized=True)
    return ds, LinearTaskTruth(weights, noise_std)


class SubsetExpectationOracle:
    """Monte-Carlo E[y | x_S] for y ~ Bernoulli(sigmoid(w.x)).

    Hidden features are integrated out with a fixed block of standard-normal
    draws per subset, keyed by (seed, subset), so repeated queries are
    deterministic. The full subset needs no draws and is exact.
    """

    def __init__(self, weights: np.ndarray, seed: int, n_draws: int = 100_000):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.seed = int(seed)
        self.n_draws = int(n_draws)
        self._hidden_cache: dict[tuple[int, ...], np.ndarray] = {}

    def _hidden_term_draws(self, observed: tuple[int, ...]) -> np.ndarray:
        cached = self._hidden_cache.get(observed)
        if cached is not None:
            return cached
        hidden = [j for j in range(self.weights.shape[0]) if j not in observed]
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, *observed, 7919]))
        draws = rng.standard_normal((self.n_draws, len(hidden))) @ self.weights[hidden]
        self._hidden_cache[observed] = draws
        return draws

    def subset_expectation(self, x: np.ndarray, indices) -> float:
        observed = tuple(sorted(int(i) for i in indices))
        x = np.asarray(x, dtype=np.float64)
        known = float(np.sum(self.weights[list(observed)] * x[list(observed)]))
        if len(observed) == self.weights.shape[0]:
            return float(_sigmoid(np.array([known]))[0])
        return float(np.mean(_sigmoid(known + self._hidden_term_draws(observed))))

    @property
    def mean_label(self) -> float:
        # E[sigmoid(w.z)] = 0.5 by symmetry of z around 0; report the exact value
        return 0.5


def synth_binary_classification(n_features: int, weights, n_samples: int,
                                seed: int, oracle_draws: int = 100_000
                                ) -> tuple[Dataset, SubsetExpectationOracle]:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (n_features,):
        raise DataError(f"weights shape {weights.shape} != ({n_features},)")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_samples, n_features))
    p = _sigmoid(x @ weights)
    y = (rng.random(n_samples) < p).astype(np.float64)
    ds = Dataset(continuous_schema(n_features), x, y, normalized=True)
    return ds, SubsetExpectationOracle(weights, seed=seed, n_draws=oracle_draws)


def mask_to_size(n_features: int, sample_index: int, k: int, seed: int) -> np.ndarray:
    """Uniform random k-subset, deterministic per (sample id, k, seed)."""
    if not 0 <= k <= n_features:
        raise DataError(f"subset size {k} out of range [0, {n_features}]")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    if k == n_features:
        return np.arange(n_features, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(sample_index), int(k)]))
    return np.sort(rng.choice(n_features, size=k, replace=False)).astype(np.int64)


def shift_distribution(dataset: Dataset, seed: int, bias: np.ndarray | None = None
                       ) -> tuple[Dataset, np.ndarray]:
    """Add one fixed per-dimension bias to every sample's continuous features.

    The bias is drawn uniform on [-1, 1], i.e. the same scale as normalized
    inputs; pass ``bias`` explicitly to override (zeros gives the identity).
    """
    if not dataset.normalized:
        raise DataError("shift_distribution expects a normalized dataset")
    n = dataset.n_features
    if bias is None:
        rng = np.random.default_rng(seed)
        bias = rng.uniform(-1.0, 1.0, size=n)
    bias = np.asarray(bias, dtype=np.float64)
    if bias.shape != (n,):
        raise DataError(f"bias shape {bias.shape} != ({n},)")
    mask = np.array([f.kind == CONTINUOUS for f in dataset.schema.features], dtype=np.float64)
    values = dataset.values + bias * mask
    return Dataset(dataset.schema, values, dataset.labels.copy(), normalized=True), bias * mask
