"""Ranking and regression metrics, implemented directly.

AUC is the rank statistic (ties get half credit), AP the step-interpolated
area under precision-recall at unique score thresholds. Both match their
O(n^2) pairwise / threshold-by-threshold definitions exactly.
"""
from __future__ import annotations

import numpy as np


class MetricError(ValueError):
    pass


def _check_binary(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if not np.all((labels == 0) | (labels == 1)):
        raise MetricError("classification labels must be 0/1")
    return labels


def auc_score(labels, scores) -> float:
    labels = _check_binary(labels)
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if labels.shape != scores.shape:
        raise MetricError(f"length mismatch: {labels.shape} vs {scores.shape}")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC is undefined with a single class")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(labels, scores) -> float:
    labels = _check_binary(labels)
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if labels.shape != scores.shape:
        raise MetricError(f"length mismatch: {labels.shape} vs {scores.shape}")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricError("AP is undefined without positive labels")
    order = np.argsort(-scores, kind="mergesort")
    y = labels[order]
    s = scores[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1.0 - y)
    # keep only the last entry of each tied-score block
    cut = np.nonzero(np.diff(s))[0]
    ends = np.concatenate([cut, [s.size - 1]])
    recall = tp[ends] / n_pos
    precision = tp[ends] / (tp[ends] + fp[ends])
    # sequential accumulation over descending thresholds
    ap = 0.0
    prev_recall = 0.0
    for r, p in zip(recall, precision):
        ap += (r - prev_recall) * p
        prev_recall = r
    return float(ap)


def rmse(targets, predictions) -> float:
    targets = np.asarray(targets, dtype=np.float64).ravel()
    predictions = np.asarray(predictions, dtype=np.float64).ravel()
    return float(np.sqrt(np.mean((targets - predictions) ** 2)))


def mae(targets, predictions) -> float:
    targets = np.asarray(targets, dtype=np.float64).ravel()
    predictions = np.asarray(predictions, dtype=np.float64).ravel()
    return float(np.mean(np.abs(targets - predictions)))


def metrics_suite(scores, labels, task: str) -> dict[str, float]:
    """task 'classification' -> AP/AUC; 'regression' -> RMSE/MAE."""
    if task == "classification":
        return {"ap": average_precision(labels, scores), "auc": auc_score(labels, scores)}
    if task == "regression":
        return {"rmse": rmse(labels, scores), "mae": mae(labels, scores)}
    raise MetricError(f"unknown task '{task}'")


def task_for_link(link: str) -> str:
    return "classification" if link == "logistic" else "regression"
