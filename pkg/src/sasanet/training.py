"""Permutation sampling, losses, and the optimization loop.

Each training sample draws one fresh uniform permutation per step. One
causal pass of the marginal module yields every prefix contribution; the
prefix sums regress toward the label (value part) and the attribution head
is tied, slot by slot, to the realized contributions (distillation part).
The distillation target is detached so the attribution head cannot drag the
marginal module away from its own optimum.

``distill_scope`` controls which inputs the attribution head is tied on:
``"prefix"`` (default) ties the head on every prefix subset of the sampled
permutation, so subset inputs of every size are trained; ``"full"`` ties it
on the complete feature set only, which is exactly the k = N slice of the
prefix scheme.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import nn
from .nn import Tensor
from .data.dataset import Dataset
from .model import ModelConfig, SasanetModel

LOSS_VARIANTS = ("combined-sq", "bce-marginal")
DISTILL_SCOPES = ("prefix", "full")


class TrainingError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


@dataclass
class TrainConfig:
    lambda_s: float = 1.0
    lambda_v: float = 1.0
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 20
    seed: int = 0
    loss_variant: str = "combined-sq"
    distill_scope: str = "prefix"
    lr_schedule: str = "constant"  # or "cosine"
    shuffle: bool = True

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise TrainingError("; ".join(problems))

    def validate(self) -> list[str]:
        problems = []
        if self.lambda_s < 0:
            problems.append(f"lambda_s must be >= 0, got {self.lambda_s}")
        if self.lambda_v < 0:
            problems.append(f"lambda_v must be >= 0, got {self.lambda_v}")
        if self.learning_rate <= 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            problems.append(f"epochs must be >= 0, got {self.epochs}")
        if self.loss_variant not in LOSS_VARIANTS:
            problems.append(f"loss_variant must be one of {LOSS_VARIANTS}, got '{self.loss_variant}'")
        if self.distill_scope not in DISTILL_SCOPES:
            problems.append(f"distill_scope must be one of {DISTILL_SCOPES}, got '{self.distill_scope}'")
        if self.lr_schedule not in ("constant", "cosine"):
            problems.append(f"lr_schedule must be 'constant' or 'cosine', got '{self.lr_schedule}'")
        return problems

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def sample_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation of range(n) (Fisher-Yates, via the generator)."""
    if n < 1:
        raise TrainingError(f"permutation length must be >= 1, got {n}")
    return rng.permutation(n)


def bce_with_logits(z: Tensor, y) -> Tensor:
    """Elementwise -[y log sigmoid(z) + (1-y) log(1 - sigmoid(z))], stable."""
    return nn.softplus(z) - nn.mul(z, y)


# ---------------------------------------------------------------------------
# standalone losses
# ---------------------------------------------------------------------------

def loss_marginal(model: SasanetModel, values_row: np.ndarray, order, y: float) -> Tensor:
    """Binary log loss of the marginal module's cumulative output on one order."""
    if y not in (0.0, 1.0, 0, 1):
        raise TrainingError(f"classification label must be 0 or 1, got {y}")
    order = np.asarray(order, dtype=np.int64)
    vals = np.asarray(values_row, dtype=np.float64)[order]
    deltas = model.deltas(order.reshape(1, -1), vals.reshape(1, -1))
    fc = nn.reduce_sum(deltas) + model.phi0
    return bce_with_logits(fc, float(y))


def loss_value(model: SasanetModel, values_row: np.ndarray, order, y: float) -> Tensor:
    """Per-sample subset value loss: log loss under the logistic link,
    squared error under the identity link. Averaged over the training
    stream this drives the subset output toward the conditional label mean."""
    if model.config.link == "logistic":
        return loss_marginal(model, values_row, order, y)
    order = np.asarray(order, dtype=np.int64)
    vals = np.asarray(values_row, dtype=np.float64)[order]
    deltas = model.deltas(order.reshape(1, -1), vals.reshape(1, -1))
    fc = nn.reduce_sum(deltas) + model.phi0
    diff = fc - float(y)
    return nn.mul(diff, diff)


def realized_contribution_sums(model: SasanetModel, values_row: np.ndarray,
                               subset, perms: np.ndarray) -> np.ndarray:
    """(M, m) matrix: entry [o, i] is the contribution of subset feature i
    (in subset listing order) under sampled permutation o. No tape."""
    subset = np.asarray(subset, dtype=np.int64)
    perms = np.asarray(perms, dtype=np.int64)
    m = subset.size
    ordered_ids = subset[perms]  # (M, m) actual feature ids in evaluation order
    vals = np.asarray(values_row, dtype=np.float64)[ordered_ids]
    with nn.no_grad():
        deltas = model.deltas(ordered_ids, vals).data
    out = np.empty_like(deltas)
    rows = np.arange(perms.shape[0])[:, None]
    out[rows, perms] = deltas  # scatter back to subset listing order
    return out


def loss_distill_direct(model: SasanetModel, values_row: np.ndarray, subset,
                        perms: np.ndarray, phi_override: np.ndarray | None = None,
                        targets_override: np.ndarray | None = None) -> Tensor:
    """Mean over features of the squared gap between each feature's
    attribution and its realized contribution, averaged over drawn
    permutations. The targets are constants (detached teacher).
    ``phi_override`` evaluates the same quadratic at arbitrary attribution
    values (closed-form minimizer checks); ``targets_override`` pins the
    teacher, which finite-difference gradient checks need."""
    subset = np.asarray(subset, dtype=np.int64)
    perms = np.asarray(perms, dtype=np.int64)
    if perms.ndim != 2 or perms.shape[0] == 0:
        raise TrainingError("loss_distill_direct needs a non-empty (M, m) permutation array")
    if targets_override is not None:
        targets = np.asarray(targets_override, dtype=np.float64)
    else:
        targets = realized_contribution_sums(model, values_row, subset, perms)  # (M, m)
    if phi_override is not None:
        phi = Tensor(np.asarray(phi_override, dtype=np.float64))
    else:
        vals = np.asarray(values_row, dtype=np.float64)[subset]
        matrix = model.positional_from_embeddings(
            model.embed(subset.reshape(1, -1), vals.reshape(1, -1)))
        phi = nn.reduce_mean(nn.reshape(matrix, matrix.shape[1:]), axis=1)  # (m,)
    res = nn.reshape(phi, (1, subset.size)) - Tensor(targets)
    return nn.reduce_mean(nn.reduce_sum(nn.mul(res, res), axis=1) * (1.0 / subset.size))


def loss_distill_positional(model: SasanetModel, values_row: np.ndarray, subset,
                            perms: np.ndarray,
                            matrix_override: np.ndarray | None = None,
                            targets_override: np.ndarray | None = None) -> Tensor:
    """Slot-conditioned variant: each drawn permutation ties the attribution
    of the feature occupying slot k to the contribution realized there."""
    subset = np.asarray(subset, dtype=np.int64)
    perms = np.asarray(perms, dtype=np.int64)
    if perms.ndim != 2 or perms.shape[0] == 0:
        raise TrainingError("loss_distill_positional needs a non-empty (M, m) permutation array")
    m = subset.size
    if targets_override is not None:
        deltas = np.asarray(targets_override, dtype=np.float64)
    else:
        ordered_ids = subset[perms]
        vals_p = np.asarray(values_row, dtype=np.float64)[ordered_ids]
        with nn.no_grad():
            deltas = model.deltas(ordered_ids, vals_p).data  # (M, m) in slot order
    if matrix_override is not None:
        matrix = Tensor(np.asarray(matrix_override, dtype=np.float64))
    else:
        vals = np.asarray(values_row, dtype=np.float64)[subset]
        matrix = nn.reshape(model.positional_from_embeddings(
            model.embed(subset.reshape(1, -1), vals.reshape(1, -1))), (m, m))
    # matrix rows follow subset listing order; gather row perms[o, k] at col k
    picked = nn.gather_rows(matrix, perms.reshape(-1))       # (M*m, m)
    cols = np.tile(np.arange(m), perms.shape[0]).reshape(-1, 1)
    picked = nn.take_along(picked, cols, axis=1)             # (M*m, 1)
    res = nn.reshape(picked, perms.shape) - Tensor(deltas)
    return nn.reduce_mean(nn.mul(res, res))


def loss_combined(model: SasanetModel, feat_ids: np.ndarray, values: np.ndarray,
                  labels: np.ndarray, config: TrainConfig,
                  teacher_override: np.ndarray | None = None) -> tuple[Tensor | float, dict]:
    """Single-permutation batch loss.

    ``feat_ids``/``values`` rows are already in each sample's drawn
    permutation order. Returns the scalar loss and the detached parts.
    ``teacher_override`` pins the distillation targets to given constants
    instead of the freshly detached contributions (finite-difference
    gradient checks need the teacher held fixed).
    """
    b, n = feat_ids.shape
    labels = np.asarray(labels, dtype=np.float64).reshape(b, 1)
    parts = {"value": 0.0, "distill": 0.0}
    if config.lambda_v == 0.0 and config.lambda_s == 0.0:
        return 0.0, parts

    e = model.embed(feat_ids, values)
    deltas = model.deltas_from_embeddings(e)                 # (B, n)
    total = None

    if config.lambda_v > 0:
        prefix_logits = nn.cumsum(deltas, axis=1) + model.phi0
        if config.loss_variant == "bce-marginal" and model.config.link == "logistic":
            per_prefix = bce_with_logits(prefix_logits, labels)
        else:
            diff = prefix_logits - labels
            per_prefix = nn.mul(diff, diff)
        value_term = nn.reduce_mean(nn.reduce_sum(per_prefix, axis=1))
        parts["value"] = value_term.item()
        total = value_term * config.lambda_v

    if config.lambda_s > 0:
        # detached: the head must not pull the teacher
        if teacher_override is not None:
            teacher = Tensor(np.asarray(teacher_override, dtype=np.float64))
        else:
            teacher = Tensor(deltas.data)
        if config.distill_scope == "full":
            matrix = model.positional_from_embeddings(e)     # (B, n, n)
            idx = np.arange(n).reshape(1, n, 1)
            diag = nn.reshape(nn.take_along(matrix, idx, axis=2), (b, n))
            res = diag - teacher
            distill_term = nn.reduce_mean(nn.reduce_sum(nn.mul(res, res), axis=1))
        else:
            diag = model.positional_prefix_diagonal(e)       # (B, k, j)
            res = diag - nn.reshape(teacher, (b, 1, n))
            kj = np.tril(np.ones((n, n))) / np.arange(1, n + 1)[:, None]
            weighted = nn.mul(nn.mul(res, res), Tensor(kj[None, :, :]))
            distill_term = nn.reduce_mean(nn.reduce_sum(weighted, axis=(1, 2)))
        parts["distill"] = distill_term.item()
        term = distill_term * config.lambda_s
        total = term if total is None else total + term

    return total, parts


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def _train_metric(model: SasanetModel, dataset: Dataset, cap: int = 2048) -> float:
    rows = np.arange(min(len(dataset), cap))
    ids = np.tile(np.arange(dataset.n_features), (rows.size, 1))
    _, f = model.attribution_batch(ids, dataset.values[rows])
    y = dataset.labels[rows]
    if model.config.link == "identity":
        return float(np.sqrt(np.mean((f - y) ** 2)))
    p = 1.0 / (1.0 + np.exp(-np.clip(f, -500, 500)))
    eps = 1e-12
    return float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))


def train(dataset: Dataset, config: TrainConfig, model: SasanetModel | None = None,
          model_config: ModelConfig | None = None,
          diagnostics_dir=None) -> tuple[SasanetModel, list[dict]]:
    """Optimize a model on the dataset; returns it with the per-epoch history.

    All randomness descends from ``config.seed``: child streams for model
    init, batch shuffling, and per-sample permutations, so a rerun with the
    same inputs reproduces the parameter trajectory bit for bit.
    """
    if len(dataset) == 0:
        raise TrainingError("dataset is empty")
    if model is None:
        model = SasanetModel(dataset.schema, model_config or ModelConfig(), seed=config.seed)
        model.fit_bias(dataset.labels)

    n = dataset.n_features
    params = model.parameters()
    opt = nn.AdamState(params, lr=config.learning_rate)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    perm_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 3]))
    history: list[dict] = []

    base_lr = config.learning_rate
    for epoch in range(config.epochs):
        if config.lr_schedule == "cosine" and config.epochs > 1:
            frac = epoch / (config.epochs - 1)
            opt.lr = 0.02 * base_lr + 0.98 * base_lr * 0.5 * (1.0 + np.cos(np.pi * frac))
        order = shuffle_rng.permutation(len(dataset)) if config.shuffle else np.arange(len(dataset))
        epoch_loss = epoch_value = epoch_distill = 0.0
        n_batches = 0
        for lo in range(0, len(dataset), config.batch_size):
            rows = order[lo:lo + config.batch_size]
            batch_vals = dataset.values[rows]
            perms = np.stack([sample_permutation(n, perm_rng) for _ in range(rows.size)])
            values_perm = np.take_along_axis(batch_vals, perms, axis=1)
            loss, parts = loss_combined(model, perms, values_perm, dataset.labels[rows], config)
            if isinstance(loss, Tensor):
                if not np.isfinite(loss.data):
                    ckpt = None
                    if diagnostics_dir is not None:
                        ckpt = Path(diagnostics_dir) / "diverged.ckpt"
                        model.save(ckpt)
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, batch {n_batches}", ckpt)
                nn.zero_grads(params)
                nn.backward(loss)
                nn.adam_step(params, opt)
                epoch_loss += loss.item()
            epoch_value += parts["value"]
            epoch_distill += parts["distill"]
            n_batches += 1
        history.append({
            "epoch": epoch,
            "loss": epoch_loss / n_batches,
            "value_part": epoch_value / n_batches,
            "distill_part": epoch_distill / n_batches,
            "train_metric": _train_metric(model, dataset),
        })
    return model, history


def history_to_csv(history: list[dict], path) -> None:
    import csv

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["epoch", "loss", "value_part", "distill_part", "train_metric"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in history:
            writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in cols[1:]])


def save_train_config(config: TrainConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
