"""Fidelity and efficiency experiments on a trained model.

Masking removes each sample's most influential features (per method) and
measures how fast performance degrades on the native subset; adding starts
from the empty set. Because the model evaluates subsets directly there is
no replacement noise, and the efficiency identity keeps holding on every
masked input.
"""
from __future__ import annotations

import platform
import time

import numpy as np

from ..data.synthetic import mask_to_size
from ..model import SasanetModel
from ..oracle import ModelValueFunction, kernel_shap
from .metrics import MetricError, metrics_suite, task_for_link


class ExperimentError(ValueError):
    pass


# ---------------------------------------------------------------------------
# attribution methods: fn(model, values_row, subset_ids, sample_index) -> scores
# ---------------------------------------------------------------------------

def self_attribution_method():
    def fn(model, values_row, subset, sample_index):
        return model.attribution(values_row, subset).phi

    fn.method_name = "sasanet"
    return fn


class _SubsetValueFunction:
    """Game over the positions of a feature subset, evaluated natively."""

    def __init__(self, model, values_row, subset):
        self.inner = ModelValueFunction(model, values_row)
        self.subset = np.asarray(subset, dtype=np.int64)
        self.n = self.subset.size

    def _lift(self, mask: int) -> int:
        out = 0
        for pos in range(self.n):
            if mask >> pos & 1:
                out |= 1 << int(self.subset[pos])
        return out

    def __call__(self, mask: int) -> float:
        return self.inner(self._lift(mask))

    def eval_masks(self, masks) -> np.ndarray:
        return self.inner.eval_masks([self._lift(int(m)) for m in masks])


class _SubsetBackgroundValueFunction:
    """Post-hoc style game over subset positions: coalition members keep the
    sample's values, the rest are replaced from background rows and the
    outputs averaged. This is how a fixed-input explainer has to treat the
    model, replacement noise included."""

    def __init__(self, model, values_row, subset, background):
        self.model = model
        self.subset = np.asarray(subset, dtype=np.int64)
        self.n = self.subset.size
        self.x_sub = np.asarray(values_row, dtype=np.float64)[self.subset]
        self.bg_sub = np.asarray(background, dtype=np.float64)[:, self.subset]
        self._ids = np.tile(self.subset, (self.bg_sub.shape[0], 1))

    def __call__(self, mask: int) -> float:
        return float(self.eval_masks([mask])[0])

    def eval_masks(self, masks) -> np.ndarray:
        out = np.empty(len(masks))
        for t, mask in enumerate(masks):
            rows = self.bg_sub.copy()
            keep = [p for p in range(self.n) if int(mask) >> p & 1]
            rows[:, keep] = self.x_sub[keep]
            _, f = self.model.attribution_batch(self._ids, rows)
            out[t] = float(np.mean(f))
        return out


def kernel_shap_method(n_coalitions: int | None = None, seed: int = 0,
                       background: np.ndarray | None = None):
    """KernelSHAP as a reranking method. Without a background it plays the
    model's native subset game; with one it runs in standard post-hoc
    replacement mode."""

    def fn(model, values_row, subset, sample_index):
        subset = np.asarray(subset, dtype=np.int64)
        if background is None:
            v = _SubsetValueFunction(model, values_row, subset)
        else:
            v = _SubsetBackgroundValueFunction(model, values_row, subset, background)
        if subset.size == 1:
            return np.array([v(1) - v(0)])
        budget = n_coalitions
        if budget is not None and budget < subset.size + 2:
            budget = subset.size + 2
        result = kernel_shap(v, subset.size, budget,
                             seed=np.random.SeedSequence([seed, sample_index, subset.size]).generate_state(1)[0])
        return result.phi

    fn.method_name = "kernelshap"
    return fn


def random_attribution_method(seed: int = 0):
    def fn(model, values_row, subset, sample_index):
        rng = np.random.default_rng(np.random.SeedSequence([seed, sample_index, len(subset)]))
        return rng.standard_normal(len(subset))

    fn.method_name = "random"
    return fn


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _rank_key(scores: np.ndarray, rank_by: str) -> np.ndarray:
    return np.abs(scores) if rank_by == "magnitude" else scores


def _batched_metrics(model: SasanetModel, subsets: list[np.ndarray], values: np.ndarray,
                     labels: np.ndarray, task: str) -> dict[str, float]:
    sizes = {s.size for s in subsets}
    preds = np.empty(len(subsets))
    for size in sizes:
        rows = [i for i, s in enumerate(subsets) if s.size == size]
        if size == 0:
            preds[rows] = model.predict(values[rows[0]], [])
            continue
        ids = np.stack([subsets[i] for i in rows])
        preds[rows] = model.predict_batch(ids, np.take_along_axis(values[rows], ids, axis=1))
    try:
        return metrics_suite(preds, labels, task)
    except MetricError:
        return {}


def masking_experiment(model: SasanetModel, methods: dict, values: np.ndarray,
                       labels: np.ndarray, k_max: int = 5, recompute: bool = True,
                       rank_by: str = "magnitude") -> list[dict]:
    """Per-sample top-k removal curves for each attribution method.

    With ``recompute`` (default) the ranking is refreshed on the remaining
    subset after every removal; otherwise the full-set ranking is fixed up
    front. Row k=0 is the unmasked baseline shared by all methods.
    """
    values = np.asarray(values, dtype=np.float64)
    b, n = values.shape
    if k_max >= n:
        raise ExperimentError(f"k_max={k_max} must be smaller than n_features={n}")
    task = task_for_link(model.config.link)
    rows: list[dict] = []
    base = _batched_metrics(model, [np.arange(n)] * b, values, labels, task)
    mode = "recompute" if recompute else "fixed"
    for name, fn in methods.items():
        removal_chains = []
        for i in range(b):
            if recompute:
                remaining = list(range(n))
                chain = []
                for _ in range(k_max):
                    scores = fn(model, values[i], np.array(remaining), i)
                    drop = remaining[int(np.argmax(_rank_key(np.asarray(scores), rank_by)))]
                    remaining.remove(drop)
                    chain.append(drop)
            else:
                scores = fn(model, values[i], np.arange(n), i)
                chain = list(np.argsort(-_rank_key(np.asarray(scores), rank_by),
                                        kind="mergesort")[:k_max])
            removal_chains.append(chain)
        rows.append({"method": name, "k": 0, **base, "mode": mode, "rank_by": rank_by})
        for k in range(1, k_max + 1):
            subsets = [np.array(sorted(set(range(n)) - set(chain[:k])), dtype=np.int64)
                       for chain in removal_chains]
            rows.append({"method": name, "k": k,
                         **_batched_metrics(model, subsets, values, labels, task),
                         "mode": mode, "rank_by": rank_by})
    return rows


def adding_experiment(model: SasanetModel, methods: dict, values: np.ndarray,
                      labels: np.ndarray, k_max: int = 5,
                      rank_by: str = "magnitude") -> list[dict]:
    """Top-k insertion curves: start from the empty set and add each
    sample's highest-attributed features per the full-set ranking."""
    values = np.asarray(values, dtype=np.float64)
    b, n = values.shape
    if k_max > n:
        raise ExperimentError(f"k_max={k_max} must be at most n_features={n}")
    task = task_for_link(model.config.link)
    rows: list[dict] = []
    for name, fn in methods.items():
        rankings = []
        for i in range(b):
            scores = fn(model, values[i], np.arange(n), i)
            rankings.append(np.argsort(-_rank_key(np.asarray(scores), rank_by), kind="mergesort"))
        for k in range(1, k_max + 1):
            subsets = [np.sort(r[:k]).astype(np.int64) for r in rankings]
            rows.append({"method": name, "k": k,
                         **_batched_metrics(model, subsets, values, labels, task),
                         "rank_by": rank_by})
    return rows


def subset_size_eval(model: SasanetModel, values: np.ndarray, labels: np.ndarray,
                     seed: int = 0) -> list[dict]:
    """Metrics after masking every sample to each fixed subset size.

    Size 0 collapses to the constant bias prediction: ranking metrics are
    reported as null there (regression metrics stay defined).
    """
    values = np.asarray(values, dtype=np.float64)
    b, n = values.shape
    task = task_for_link(model.config.link)
    rows: list[dict] = []
    for k in range(0, n + 1):
        if k == 0:
            if task == "regression":
                preds = np.full(b, model.predict(values[0], []))
                rows.append({"k": 0, **metrics_suite(preds, labels, task)})
            else:
                rows.append({"k": 0, "ap": None, "auc": None})
            continue
        subsets = [mask_to_size(n, i, k, seed) for i in range(b)]
        rows.append({"k": k, **_batched_metrics(model, subsets, values, labels, task)})
    return rows


def timing_self_attribution():
    def fn(model, values_row):
        return model.attribution(values_row)

    fn.method_name = "sasanet"
    return fn


def timing_kernel_shap(n_coalitions: int | None = None, seed: int = 0):
    from ..oracle import kernel_shap_for_model

    def fn(model, values_row):
        return kernel_shap_for_model(model, values_row, n_coalitions, seed)

    fn.method_name = "kernelshap"
    return fn


def timing_experiment(model: SasanetModel, interpreters: dict, values: np.ndarray,
                      n_samples: int = 1000) -> list[dict]:
    """Wall-clock per-sample attribution cost, one sample at a time.

    A warm-up call is issued per method before the clock starts. The
    hardware note travels with the rows since the numbers are
    machine-dependent.
    """
    values = np.asarray(values, dtype=np.float64)
    take = min(n_samples, values.shape[0])
    note = f"{platform.machine()} {platform.system()} python{platform.python_version()}"
    rows = []
    for name, fn in interpreters.items():
        if take == 0:
            rows.append({"method": name, "n_samples": 0, "total_seconds": 0.0,
                         "per_sample_seconds": 0.0, "hardware": note})
            continue
        fn(model, values[0])  # warm-up
        start = time.perf_counter()
        for i in range(take):
            fn(model, values[i])
        total = time.perf_counter() - start
        rows.append({"method": name, "n_samples": take, "total_seconds": total,
                     "per_sample_seconds": total / take, "hardware": note})
    return rows
