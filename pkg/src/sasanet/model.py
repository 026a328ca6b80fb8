"""Set-input attribution network.

Two attention modules share per-feature value embeddings:

* the marginal module is order-aware (position embeddings plus a learned
  null-context token) and emits one scalar contribution per feature given
  the features placed before it;
* the attribution module is order-free: a learned query pools the feature
  set into a sample representation, and a feed-forward head maps each
  (feature embedding, sample representation) pair to one attribution value
  per position slot. Averaging a feature's row over the occupied slots
  gives its attribution, and the prediction is their sum plus a frozen
  bias fitted to the training labels.

Causal masking makes one pass over an ordered feature list equivalent to
evaluating every prefix subset separately, which both the training loss and
the permutation oracles exploit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import nn
from .nn import Tensor, no_grad
from .data.schema import CATEGORICAL, FeatureSchema

LINKS = ("logistic", "identity")


class ModelError(ValueError):
    pass


@dataclass
class ModelConfig:
    embedding_dimension: int = 64
    continuous_embedding: tuple = (16, 16, 64)
    marginal_mlp: tuple = (128, 128, 128)
    marginal_attention_dimension: int = 8
    marginal_attention_heads: int = 4
    shapley_mlp: tuple = (128, 128, 128)
    shapley_attention_dimension: int = 8
    shapley_attention_heads: int = 8
    link: str = "logistic"
    leaky_relu_slope: float = 0.01
    init_std: float = 0.02
    init_scheme: str = "normal"
    empty_prefix: str = "learned"  # or "zero"
    dtype: str = "float64"

    def __post_init__(self):
        if self.link not in LINKS:
            raise ModelError(f"link must be one of {LINKS}, got '{self.link}'")
        if self.empty_prefix not in ("learned", "zero"):
            raise ModelError(f"empty_prefix must be 'learned' or 'zero', got '{self.empty_prefix}'")
        if tuple(self.continuous_embedding)[-1] != self.embedding_dimension:
            raise ModelError("continuous_embedding must end at embedding_dimension "
                             f"({self.continuous_embedding} vs {self.embedding_dimension})")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("continuous_embedding", "marginal_mlp", "shapley_mlp"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for k in ("continuous_embedding", "marginal_mlp", "shapley_mlp"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass(frozen=True)
class AttributionResult:
    feature_indices: tuple[int, ...]
    positional: np.ndarray  # (m, m): row = feature in listing order, col = position slot
    phi: np.ndarray         # (m,): row means of positional
    phi0: float
    f: float                # phi0 + phi.sum(), same summation order as np.sum(phi)
    score: float            # link(f)


def _apply_link(f: np.ndarray | float, link: str):
    if link == "identity":
        return f
    z = np.asarray(f, dtype=np.float64)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return float(out[0]) if scalar else out


def link_inverse(p: float, link: str) -> float:
    if link == "identity":
        return float(p)
    p = min(max(float(p), 1e-9), 1 - 1e-9)
    return math.log(p / (1.0 - p))


class SasanetModel:
    def __init__(self, schema: FeatureSchema, config: ModelConfig, seed: int = 0):
        self.schema = schema
        self.config = config
        self.n_features = schema.n_features
        self.phi0 = 0.0
        d = config.embedding_dimension
        self.d = d
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
        store = nn.ParamStore(rng, init_std=config.init_std, init_scheme=config.init_scheme)
        self._store = store

        self._tables: dict[int, Tensor] = {}
        self._cont_mlps: dict[int, nn.MLP] = {}
        cont_dims = [1] + list(config.continuous_embedding)
        for j, feat in enumerate(schema.features):
            if feat.kind == CATEGORICAL:
                self._tables[j] = store.new(f"embed.{j}.table", (feat.embedding_rows, d),
                                            fan=(feat.embedding_rows, d))
            else:
                self._cont_mlps[j] = nn.MLP(store, f"embed.{j}.mlp", cont_dims,
                                            slope=config.leaky_relu_slope)

        n = self.n_features
        self.pos_emb = store.new("marginal.pos", (n + 1, d), fan=(n + 1, d))
        if config.empty_prefix == "learned":
            self.null_context = store.new("marginal.null", (1, 1, d), fan=(d, d))
        else:
            self.null_context = None
        self.marg_attn = nn.MultiHeadAttention(
            store, "marginal.attn", d,
            config.marginal_attention_heads, config.marginal_attention_dimension, d)
        self.marg_mlp = nn.MLP(store, "marginal.mlp",
                               [2 * d] + list(config.marginal_mlp) + [1],
                               slope=config.leaky_relu_slope)

        self.shap_seed = store.new("shapley.seed", (1, 1, d), fan=(d, d))
        self.shap_attn = nn.MultiHeadAttention(
            store, "shapley.attn", d,
            config.shapley_attention_heads, config.shapley_attention_dimension, d)
        self.shap_head = nn.MLP(store, "shapley.head",
                                [2 * d] + list(config.shapley_mlp) + [n],
                                slope=config.leaky_relu_slope)

    # ------------------------------------------------------------------
    # parameters / bias
    # ------------------------------------------------------------------
    def parameters(self) -> dict[str, Tensor]:
        return self._store.params

    def fit_bias(self, labels: np.ndarray) -> float:
        """Freeze the bias to link^-1(mean train label)."""
        self.phi0 = link_inverse(float(np.mean(labels)), self.config.link)
        return self.phi0

    # ------------------------------------------------------------------
    # embeddings
    # ------------------------------------------------------------------
    def embed(self, feat_ids: np.ndarray, values: np.ndarray) -> Tensor:
        """(B, m) feature ids + raw values -> (B, m, d) embeddings.

        Positions are grouped by feature id so each feature's table or MLP
        runs once per batch.
        """
        feat_ids = np.asarray(feat_ids)
        values = np.asarray(values, dtype=np.float64)
        if feat_ids.shape != values.shape or feat_ids.ndim != 2:
            raise ModelError(f"embed: ids {feat_ids.shape} and values {values.shape} must be equal 2-D shapes")
        b, m = feat_ids.shape
        flat_ids = feat_ids.reshape(-1)
        flat_vals = values.reshape(-1)
        out = Tensor(np.zeros((b * m, self.d)))
        for j in np.unique(flat_ids):
            j = int(j)
            rows = np.nonzero(flat_ids == j)[0]
            feat = self.schema[j]
            if feat.kind == CATEGORICAL:
                emb = nn.embedding_lookup(self._tables[j], flat_vals[rows].astype(np.int64))
            else:
                emb = self._cont_mlps[j](Tensor(flat_vals[rows].reshape(-1, 1)))
            out = nn.scatter_add_rows(out, rows, emb)
        return nn.reshape(out, (b, m, self.d))

    def embed_sample(self, values_row: np.ndarray) -> np.ndarray:
        """(N,) raw sample -> (N, d) embedding matrix, no tape."""
        with no_grad():
            ids = np.arange(self.n_features).reshape(1, -1)
            return self.embed(ids, np.asarray(values_row).reshape(1, -1)).data[0]

    # ------------------------------------------------------------------
    # marginal-contribution module (order-aware)
    # ------------------------------------------------------------------
    def _null_block(self, b: int) -> Tensor:
        if self.null_context is not None:
            return Tensor(np.zeros((b, 1, self.d))) + self.null_context
        return Tensor(np.zeros((b, 1, self.d)))

    def deltas_from_embeddings(self, e: Tensor) -> Tensor:
        """(B, m, d) ordered embeddings -> (B, m) marginal contributions.

        Entry k sees the null token plus positions <= k only, so one pass
        equals m separate prefix evaluations.
        """
        b, m, d = e.shape
        seq = nn.concat([self._null_block(b), e], axis=1)
        pos = nn.reshape(nn.narrow(self.pos_emb, 0, 0, m + 1), (1, m + 1, d))
        z = seq + pos
        q = nn.narrow(z, 1, 1, m)
        r = self.marg_attn(q, z, nn.causal_block_mask(m, extra_visible=1))
        h = nn.concat([e, r], axis=2)
        return nn.reshape(self.marg_mlp(h), (b, m))

    def deltas(self, feat_ids: np.ndarray, values: np.ndarray) -> Tensor:
        return self.deltas_from_embeddings(self.embed(feat_ids, values))

    def marginal_contributions(self, values_row: np.ndarray, order) -> np.ndarray:
        """Per-feature contributions for one sample under one evaluation order."""
        order = np.asarray(order, dtype=np.int64)
        if order.size == 0:
            return np.empty(0)
        with no_grad():
            vals = np.asarray(values_row, dtype=np.float64)[order]
            return self.deltas(order.reshape(1, -1), vals.reshape(1, -1)).data[0]

    def f_c(self, values_row: np.ndarray, order) -> float:
        """Cumulative marginal-contribution output: phi0 + sum of deltas."""
        return self.phi0 + float(np.sum(self.marginal_contributions(values_row, order)))

    # ------------------------------------------------------------------
    # attribution module (order-free)
    # ------------------------------------------------------------------
    def prefix_reps_from_embeddings(self, e: Tensor) -> Tensor:
        """(B, m, d) -> (B, m, d); slot k pools features 0..k with a learned query."""
        b, m, d = e.shape
        q = Tensor(np.zeros((b, m, d))) + self.shap_seed
        return self.shap_attn(q, e, nn.causal_block_mask(m))

    def _head_split(self, e_part: Tensor, s_part: Tensor) -> Tensor:
        """The attribution head with its first layer applied to the feature
        and context halves separately; identical to running the head on
        their concatenation but broadcast-friendly on pair grids."""
        head = self.shap_head
        first = head.layers[0]
        we = nn.narrow(first.w, 0, 0, self.d)
        ws = nn.narrow(first.w, 0, self.d, self.d)
        h = nn.matmul(e_part, we) + nn.matmul(s_part, ws) + first.b
        if len(head.layers) == 1:
            return h
        h = nn.leaky_relu(h, head.slope)
        for layer in head.layers[1:-1]:
            h = nn.leaky_relu(layer(h), head.slope)
        return head.layers[-1](h)

    def positional_from_embeddings(self, e: Tensor) -> Tensor:
        """(B, m, d) -> (B, m, m) positional attribution matrices."""
        b, m, d = e.shape
        s_full = nn.narrow(self.prefix_reps_from_embeddings(e), 1, m - 1, 1)
        rows = self._head_split(e, s_full)
        return nn.narrow(rows, 2, 0, m)

    def pair_head_from_embeddings(self, e: Tensor, s: Tensor, m_cols: int | None = None) -> Tensor:
        """Head over all (prefix k, feature j) pairs -> (B, m, m, cols).

        Entry [b, k, j, c] is feature j's value in slot c within the prefix
        subset of size k+1. Entries with j > k refer to features outside the
        prefix and must be masked by the caller.
        """
        b, m, d = e.shape
        out = self._head_split(nn.reshape(e, (b, 1, m, d)), nn.reshape(s, (b, m, 1, d)))
        return nn.narrow(out, 3, 0, m_cols if m_cols is not None else m)

    def positional_prefix_diagonal(self, e: Tensor) -> Tensor:
        """(B, m, d) -> (B, m, m) with [b, k, j] = slot-j value of feature j
        within the prefix subset 0..k (valid for j <= k)."""
        b, m, d = e.shape
        s = self.prefix_reps_from_embeddings(e)
        pair = self.pair_head_from_embeddings(e, s, m_cols=m)
        idx = np.arange(m).reshape(1, 1, m, 1)
        return nn.reshape(nn.take_along(pair, idx, axis=3), (b, m, m))

    # ------------------------------------------------------------------
    # public inference
    # ------------------------------------------------------------------
    def attribution_batch(self, feat_ids: np.ndarray, values: np.ndarray
                          ) -> tuple[np.ndarray, np.ndarray]:
        """Batched (phi, f) for same-size subsets; rows follow the listing order."""
        with no_grad():
            matrix = self.positional_from_embeddings(self.embed(feat_ids, values)).data
        m = matrix.shape[2]
        phi = matrix.sum(axis=2) / m
        return phi, self.phi0 + phi.sum(axis=1)

    def predict_batch(self, feat_ids: np.ndarray, values: np.ndarray) -> np.ndarray:
        _, f = self.attribution_batch(feat_ids, values)
        return _apply_link(f, self.config.link)

    def attribution(self, values_row: np.ndarray, indices=None) -> AttributionResult:
        """Full result for one sample restricted to ``indices`` (default: all)."""
        if indices is None:
            indices = range(self.n_features)
        idx = np.asarray(list(indices), dtype=np.int64)
        if idx.size == 0:
            f = self.phi0
            return AttributionResult((), np.zeros((0, 0)), np.zeros(0), self.phi0,
                                     f, float(_apply_link(np.float64(f), self.config.link)))
        vals = np.asarray(values_row, dtype=np.float64)[idx]
        with no_grad():
            matrix = self.positional_from_embeddings(
                self.embed(idx.reshape(1, -1), vals.reshape(1, -1))).data[0]
        phi = matrix.sum(axis=1) / matrix.shape[1]
        f = self.phi0 + float(np.sum(phi))
        return AttributionResult(tuple(int(i) for i in idx), matrix, phi, self.phi0,
                                 f, float(_apply_link(np.float64(f), self.config.link)))

    def predict(self, values_row: np.ndarray, indices=None) -> float:
        return self.attribution(values_row, indices).score

    def prefix_values_perms(self, values_row: np.ndarray, perms: np.ndarray,
                            chunk: int = 1024) -> np.ndarray:
        """(B, m) ordered index rows -> (B, m+1) outputs on every prefix subset.

        Column k is the model output on the first k indices of each row;
        column 0 is the bias. Embeddings are computed once per sample and
        gathered per permutation.
        """
        perms = np.asarray(perms, dtype=np.int64)
        b, m = perms.shape
        e_sample = self.embed_sample(values_row)
        out = np.empty((b, m + 1))
        out[:, 0] = self.phi0
        kj_mask = np.tril(np.ones((m, m)))  # j <= k
        kc_mask = np.tril(np.ones((m, m)))  # c <= k
        pair_mask = kj_mask[:, :, None] * kc_mask[:, None, :]
        counts = np.arange(1, m + 1, dtype=np.float64)
        with no_grad():
            for lo in range(0, b, chunk):
                sl = slice(lo, min(lo + chunk, b))
                e = Tensor(e_sample[perms[sl]])
                s = self.prefix_reps_from_embeddings(e)
                pair = self.pair_head_from_embeddings(e, s, m_cols=m).data
                sums = (pair * pair_mask).sum(axis=(2, 3))
                out[sl, 1:] = self.phi0 + sums / counts
        return out

    def prefix_values(self, values_row: np.ndarray, order) -> np.ndarray:
        """Outputs on the prefix chain of one ordering; entry 0 is the bias."""
        order = np.asarray(order, dtype=np.int64)
        if order.size == 0:
            return np.array([self.phi0])
        return self.prefix_values_perms(values_row, order.reshape(1, -1))[0]

    # ------------------------------------------------------------------
    # checkpoint
    # ------------------------------------------------------------------
    def save(self, path) -> None:
        tensors = {name: p.data for name, p in self.parameters().items()}
        meta = {
            "config": self.config.to_dict(),
            "schema": self.schema.to_dict(),
            "phi0": self.phi0,
        }
        nn.save_checkpoint(path, tensors, meta)

    @classmethod
    def load(cls, path) -> "SasanetModel":
        tensors, meta = nn.load_checkpoint(path)
        schema = FeatureSchema.from_dict(meta["schema"])
        model = cls(schema, ModelConfig.from_dict(meta["config"]), seed=0)
        params = model.parameters()
        missing = set(params) - set(tensors)
        extra = set(tensors) - set(params)
        if missing or extra:
            raise nn.CheckpointError(f"checkpoint does not match architecture "
                                     f"(missing={sorted(missing)}, extra={sorted(extra)})")
        for name, p in params.items():
            if tensors[name].shape != p.data.shape:
                raise nn.CheckpointError(f"shape mismatch for '{name}': "
                                         f"{tensors[name].shape} vs {p.data.shape}")
            p.data = tensors[name].astype(p.data.dtype)
        model.phi0 = float(meta["phi0"])
        return model
