"""Shared fixtures: desk-scale trained models (session-scoped, trained once)
and a finite-difference gradient checker."""
from __future__ import annotations

import numpy as np
import pytest

from sasanet.data.synthetic import synth_binary_classification, synth_linear_regression
from sasanet.model import ModelConfig, SasanetModel
from sasanet.training import TrainConfig, train

LINEAR_W = np.array([1.5, -2.0, 1.0, -1.0, 0.8, -0.8, 1.2, 0.9])
BINARY_W = np.array([1.2, -1.5, 0.9, -0.7, 1.0, -1.1, 0.6, 0.8])
TOY_W = np.array([0.9, -1.1, 0.7, 0.8, -0.6, 0.5])


def desk_config(link: str, n_outputs_hint: int = 8) -> ModelConfig:
    return ModelConfig(
        embedding_dimension=32, continuous_embedding=(16, 16, 32),
        marginal_mlp=(64, 64, 64), shapley_mlp=(64, 64, 64),
        marginal_attention_dimension=8, marginal_attention_heads=4,
        shapley_attention_dimension=8, shapley_attention_heads=8,
        link=link, init_scheme="xavier")


def small_config(link: str = "identity", init_std: float = 0.3,
                 init_scheme: str = "normal") -> ModelConfig:
    return ModelConfig(
        embedding_dimension=16, continuous_embedding=(8, 16),
        marginal_mlp=(32, 32), shapley_mlp=(32, 32),
        marginal_attention_dimension=4, marginal_attention_heads=2,
        shapley_attention_dimension=4, shapley_attention_heads=2,
        link=link, init_std=init_std, init_scheme=init_scheme)


@pytest.fixture(scope="session")
def linear_task():
    """Trained regression model on the analytic linear task (N=8)."""
    ds, truth = synth_linear_regression(8, LINEAR_W, 0.1, 12000, seed=42)
    train_ds, test_ds = ds.take(np.arange(10000)), ds.take(np.arange(10000, 12000))
    tc = TrainConfig(learning_rate=2e-3, batch_size=128, epochs=14, seed=7,
                     distill_scope="full", lr_schedule="cosine")
    model, history = train(train_ds, tc, model_config=desk_config("identity"))
    return {"model": model, "train": train_ds, "test": test_ds, "truth": truth,
            "history": history, "weights": LINEAR_W}


@pytest.fixture(scope="session")
def binary_task():
    """Trained classifier on the synthetic logistic task (N=8), calibrated
    (per-prefix log loss) so subset probabilities track the oracle."""
    ds, oracle = synth_binary_classification(8, BINARY_W, 12000, seed=21)
    train_ds, test_ds = ds.take(np.arange(10000)), ds.take(np.arange(10000, 12000))
    tc = TrainConfig(learning_rate=2e-3, batch_size=128, epochs=14, seed=3,
                     loss_variant="bce-marginal", distill_scope="full",
                     lr_schedule="cosine")
    model, history = train(train_ds, tc, model_config=desk_config("logistic"))
    return {"model": model, "train": train_ds, "test": test_ds, "oracle": oracle,
            "history": history, "weights": BINARY_W}


@pytest.fixture(scope="session")
def toy_task():
    """N=6 regression toy trained with subset-tied (prefix) distillation, for
    the exhaustive order-average checks."""
    ds, truth = synth_linear_regression(6, TOY_W, 0.02, 17000, seed=11)
    train_ds, test_ds = ds.take(np.arange(16000)), ds.take(np.arange(16000, 17000))
    tc = TrainConfig(learning_rate=2e-3, batch_size=128, epochs=30, seed=5,
                     distill_scope="prefix", lr_schedule="cosine")
    model, history = train(train_ds, tc, model_config=desk_config("identity"))
    return {"model": model, "train": train_ds, "test": test_ds, "truth": truth,
            "weights": TOY_W}


@pytest.fixture()
def random_small_model():
    """Untrained small model with sizable weights, for structural probes."""
    from sasanet.data.schema import continuous_schema

    model = SasanetModel(continuous_schema(6), small_config(), seed=7)
    model.phi0 = 0.25
    return model


def gradcheck(loss_fn, params: dict, n_probes: int = 50, seed: int = 0,
              h: float = 1e-5, rel_tol: float = 1e-5, abs_tol: float = 1e-9,
              floor: float = 1e-4):
    """Compare stored gradients against central differences of ``loss_fn``.

    ``loss_fn`` must re-evaluate the loss from current parameter data (any
    stop-gradient targets held fixed). Gradients above ``floor`` in
    magnitude are compared relatively; tiny ones absolutely, since the
    finite-difference noise floor (~1e-11) dominates them.
    """
    rng = np.random.default_rng(seed)
    names = list(params)
    failures = []
    for _ in range(n_probes):
        name = names[int(rng.integers(len(names)))]
        p = params[name]
        idx = tuple(int(rng.integers(s)) for s in p.data.shape)
        old = float(p.data[idx])
        p.data[idx] = old + h
        lp = loss_fn()
        p.data[idx] = old - h
        lm = loss_fn()
        p.data[idx] = old
        numeric = (lp - lm) / (2 * h)
        analytic = float(p.grad[idx]) if p.grad is not None else 0.0
        scale = max(abs(numeric), abs(analytic))
        if scale > floor:
            if abs(numeric - analytic) / scale > rel_tol:
                failures.append((name, idx, numeric, analytic))
        elif abs(numeric - analytic) > abs_tol:
            failures.append((name, idx, numeric, analytic))
    return failures
