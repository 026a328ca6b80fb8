"""Calibration: binary task, subset-expectation calibration + scope comparison."""
import sys
import time

import numpy as np

from sasanet.data.synthetic import mask_to_size, synth_binary_classification
from sasanet.model import ModelConfig, SasanetModel
from sasanet.training import TrainConfig, train

N = 8
W = np.array([1.2, -1.5, 0.9, -0.7, 1.0, -1.1, 0.6, 0.8])


def run(scope, epochs=12, lr=2e-3):
    ds, oracle = synth_binary_classification(N, W, 12000, seed=21)
    train_ds, test_ds = ds.take(np.arange(10000)), ds.take(np.arange(10000, 12000))
    mc = ModelConfig(
        embedding_dimension=32, continuous_embedding=(16, 16, 32),
        marginal_mlp=(64,) * 3, shapley_mlp=(64,) * 3,
        marginal_attention_dimension=8, marginal_attention_heads=4,
        shapley_attention_dimension=8, shapley_attention_heads=8,
        link="logistic", init_scheme="xavier")
    tc = TrainConfig(learning_rate=lr, batch_size=128, epochs=epochs, seed=3,
                     loss_variant="bce-marginal", distill_scope=scope, lr_schedule="cosine")
    t0 = time.time()
    model, history = train(train_ds, tc, model_config=mc)
    print(f"[{scope}] train {time.time()-t0:.0f}s  last epochs:",
          [round(h["loss"], 3) for h in history[-3:]])

    # sigma(f(x_S)) vs MC subset-expectation oracle over 500 (sample, subset) pairs
    rng = np.random.default_rng(5)
    errs = []
    by_size = {}
    for t in range(500):
        i = int(rng.integers(len(test_ds)))
        k = int(rng.integers(1, N + 1))
        subset = mask_to_size(N, i, k, seed=900 + t)
        x = test_ds.values[i]
        pred = model.predict(x, subset)
        target = oracle.subset_expectation(x, subset)
        errs.append(abs(pred - target))
        by_size.setdefault(k, []).append(abs(pred - target))
    errs = np.array(errs)
    print(f"[{scope}] sigma(f(x_S)) vs oracle: MAE {errs.mean():.4f}  max {errs.max():.4f}")
    print(f"[{scope}] MAE by subset size:",
          {k: round(float(np.mean(v)), 4) for k, v in sorted(by_size.items())})
    return model


if __name__ == "__main__":
    scopes = sys.argv[1:] or ["prefix", "full"]
    for s in scopes:
        run(s)
