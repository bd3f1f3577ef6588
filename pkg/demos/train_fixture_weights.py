"""Train the shipped integer ECG weights on synthetic beats.

Plain numpy logistic regression on 4-bit quantised features, then the
weights are scaled to small integers.  The result is written as the
package's fixture model.  Run from the repository root:

    python demos/train_fixture_weights.py
"""

import numpy as np

from hheml.data import default_fixture_path, synth_generate
from hheml.ml import IntegerFcModel, LEVELS, quantize, run_plain_reports, save_model

TRAIN_SEED = 11
EVAL_SEED = 2024
WEIGHT_BOUND = 12


def train_logistic(x, y, steps=4000, lr=0.05, l2=1e-3):
    w = np.zeros(x.shape[1])
    b = 0.0
    for _ in range(steps):
        z = x @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        grad = p - y
        w -= lr * (x.T @ grad / len(y) + l2 * w)
        b -= lr * grad.mean()
    return w, b


def main():
    train = synth_generate(6000, seed=TRAIN_SEED)
    x = np.stack([quantize(r.features)[0] for r in train]).astype(np.float64) / LEVELS
    y = train.targets().astype(np.float64)
    w, b = train_logistic(x, y)
    # scores use integer features in [0, 15], so the float bias scales by 15 as well
    scale = WEIGHT_BOUND / np.abs(w).max()
    w_int = np.rint(w * scale).astype(np.int64)
    b_int = int(np.rint(b * scale * LEVELS))
    model = IntegerFcModel(np.stack([-w_int, w_int]), np.array([-b_int, b_int]),
                           scale_note=f"logistic weights x {scale:.3f}; features are round_half_up(15 x)")
    print("worst-case |score| per row:", model.worst_case().tolist())
    reports = run_plain_reports(model, synth_generate(1000, seed=EVAL_SEED))
    for mode, rep in reports.items():
        print(f"{mode:8s} accuracy on 1000 held-out synthetic beats: {100 * rep.accuracy:.1f}%")
    save_model(model, default_fixture_path())
    print("wrote", default_fixture_path())


if __name__ == "__main__":
    main()
