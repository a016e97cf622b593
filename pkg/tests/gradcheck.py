"""Central finite-difference oracle for network gradients."""
import numpy as np

from hybrid_screen.snn import SnnHyperparams, gradients, init_model, loss

STEP = 1e-5
# relative error is measured against max(|analytic|, |numeric|, FLOOR) so
# exact zeros (dead ReLU units) do not divide by zero
FLOOR = 1e-7


def numeric_gradients(model, X, y, h=STEP):
    out = []
    for p in model.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            keep = p[i]
            p[i] = keep + h
            up = loss(model, X, y)
            p[i] = keep - h
            down = loss(model, X, y)
            p[i] = keep
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_relative_error(model, X, y):
    worst = 0.0
    for a, n in zip(gradients(model, X, y), numeric_gradients(model, X, y)):
        scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), FLOOR)
        worst = max(worst, float(np.max(np.abs(a - n) / scale)))
    return worst


def random_case(seed, activation, output_kind, n=5, d=3):
    rng = np.random.default_rng(seed)
    hp = SnnHyperparams(hidden_layers=int(rng.integers(1, 3)),
                        hidden_units=int(rng.integers(2, 6)),
                        init_mode="glorot_normal", activation=activation, seed=seed)
    model = init_model(hp, d, output_kind)
    for b in model.biases:
        b[:] = rng.normal(0, 0.1, b.shape)
    X = rng.normal(size=(n, d))
    y = rng.integers(0, 2, n).astype(float) if output_kind == "sigmoid" \
        else rng.normal(size=n)
    return model, X, y
