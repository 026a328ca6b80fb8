"""Calibration run: linear task, desk-scale config, accuracy targets."""
import sys
import time

import numpy as np

from sasanet.data.synthetic import synth_linear_regression
from sasanet.model import ModelConfig, SasanetModel
from sasanet.oracle import ModelValueFunction, shapley_montecarlo
from sasanet.training import TrainConfig, train

N = 8
W = np.array([1.5, -2.0, 1.0, -1.0, 0.8, -0.8, 1.2, 0.9])

def main(epochs=30, scope="prefix", init="normal", std=0.02, lr=1e-3, d=32, width=64):
    ds, truth = synth_linear_regression(N, W, 0.1, 12000, seed=42)
    train_ds, test_ds = ds.take(np.arange(10000)), ds.take(np.arange(10000, 12000))
    mc = ModelConfig(
        embedding_dimension=d, continuous_embedding=(16, 16, d),
        marginal_mlp=(width,) * 3, shapley_mlp=(width,) * 3,
        marginal_attention_dimension=8, marginal_attention_heads=4,
        shapley_attention_dimension=8, shapley_attention_heads=8,
        link="identity", init_scheme=init, init_std=std)
    tc = TrainConfig(learning_rate=lr, batch_size=128, epochs=epochs, seed=7,
                     distill_scope=scope)
    t0 = time.time()
    model, history = train(train_ds, tc, model_config=mc)
    t_train = time.time() - t0
    for h in history[::max(1, len(history) // 8)]:
        print(f"  epoch {h['epoch']:3d} loss {h['loss']:.4f} value {h['value_part']:.4f} "
              f"distill {h['distill_part']:.5f} rmse {h['train_metric']:.4f}")

    ids = np.tile(np.arange(N), (len(test_ds), 1))
    phi, f = model.attribution_batch(ids, test_ds.values)
    rmse = float(np.sqrt(np.mean((f - test_ds.labels) ** 2)))
    target_phi = test_ds.values * W
    mae_per_feature = np.mean(np.abs(phi - target_phi), axis=0)
    limit = 0.1 * np.abs(W)
    print(f"train time {t_train:.1f}s  test RMSE {rmse:.4f} (noise 0.1)")
    print("phi MAE per feature:", np.round(mae_per_feature, 4))
    print("limit 0.1*|w|:      ", np.round(limit, 4))
    print("criterion5 pass:", bool(np.all(mae_per_feature <= limit)))

    # self vs own-shapley oracle on a few samples (criterion 4 preview, small M)
    t0 = time.time()
    sq = 0.0
    n_s = 8
    for i in range(n_s):
        v = ModelValueFunction(model, test_ds.values[i])
        res = shapley_montecarlo(v, N, 2000, seed=100 + i)
        sq += np.sum((phi[i] - res.phi) ** 2)
    rmse_oracle = np.sqrt(sq / (n_s * N))
    print(f"self vs oracle (M=2000, {n_s} samples): RMSE {rmse_oracle:.4f}  "
          f"({time.time() - t0:.1f}s)")
    return model


if __name__ == "__main__":
    kwargs = {}
    for arg in sys.argv[1:]:
        k, v = arg.split("=")
        kwargs[k] = type({"epochs": 1, "std": 1.0, "lr": 1.0, "d": 1, "width": 1}.get(k, ""))(v) if k in ("epochs", "std", "lr", "d", "width") else v
        if k in ("epochs", "d", "width"):
            kwargs[k] = int(v)
        elif k in ("std", "lr"):
            kwargs[k] = float(v)
    main(**kwargs)
