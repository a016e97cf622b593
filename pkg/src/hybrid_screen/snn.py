"""Shallow dense networks trained with mini-batch Adam.

A network is ``hidden_layers`` dense layers of ``hidden_units`` each, followed
by one output unit: sigmoid for classification (trained on binary
cross-entropy) or linear for regression (trained on mean squared error).
Hidden layers use inverted dropout during training. Everything runs in
float64 on numpy and is deterministic for a given seed.
"""
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._seeding import derive_seed, make_rng
from .exceptions import DataError, TrainingError

INIT_MODES = ("uniform", "lecun_uniform", "normal", "glorot_normal",
              "he_normal", "he_uniform")
ACTIVATIONS = ("relu", "sigmoid")
SIGMOID_OUTPUT = "sigmoid"
LINEAR_OUTPUT = "linear"

PROB_CLAMP = 1e-7
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class SnnHyperparams:
    hidden_layers: int = 1
    hidden_units: int = 10
    dropout: float = 0.0
    epochs: int = 20
    batch_size: int = 16
    init_mode: str = "he_normal"
    activation: str = "relu"
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if int(self.hidden_layers) < 1:
            raise ValueError(f"hidden_layers must be >= 1, got {self.hidden_layers}")
        if int(self.hidden_units) < 1:
            raise ValueError(f"hidden_units must be >= 1, got {self.hidden_units}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if int(self.epochs) < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if int(self.batch_size) < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return {
            "hidden_layers": int(self.hidden_layers),
            "hidden_units": int(self.hidden_units),
            "dropout": float(self.dropout),
            "epochs": int(self.epochs),
            "batch_size": int(self.batch_size),
            "init_mode": self.init_mode,
            "activation": self.activation,
            "learning_rate": float(self.learning_rate),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class SnnModel:
    weights: list
    biases: list
    output_kind: str = SIGMOID_OUTPUT
    activation: str = "relu"
    dropout: float = 0.0
    input_dim: int = field(init=False)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != len(self.biases) or len(self.weights) < 2:
            raise ValueError("need matching weight/bias lists with >= 2 layers")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"bad layer shapes {w.shape} / {b.shape}")
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError("layer dimensions do not chain")
        if self.weights[-1].shape[1] != 1:
            raise ValueError("output layer must have exactly one unit")
        self.input_dim = self.weights[0].shape[0]

    @property
    def n_hidden(self):
        return len(self.weights) - 1

    def params(self):
        """Flat list [W0, b0, W1, b1, ...] (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self):
        return SnnModel([w.copy() for w in self.weights],
                        [b.copy() for b in self.biases],
                        self.output_kind, self.activation, self.dropout)


def _draw_weights(rng, mode, fan_in, fan_out):
    shape = (fan_in, fan_out)
    if mode == "he_normal":
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
    if mode == "he_uniform":
        lim = np.sqrt(6.0 / fan_in)
        return rng.uniform(-lim, lim, shape)
    if mode == "glorot_normal":
        return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), shape)
    if mode == "lecun_uniform":
        lim = np.sqrt(3.0 / fan_in)
        return rng.uniform(-lim, lim, shape)
    if mode == "uniform":
        return rng.uniform(-0.05, 0.05, shape)
    if mode == "normal":
        return rng.normal(0.0, 0.05, shape)
    raise ValueError(f"unknown init_mode {mode!r}")


def init_model(hp, input_dim, output_kind=SIGMOID_OUTPUT):
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    rng = make_rng(derive_seed(hp.seed, "init"))
    dims = [int(input_dim)] + [int(hp.hidden_units)] * int(hp.hidden_layers) + [1]
    weights = [_draw_weights(rng, hp.init_mode, a, b) for a, b in zip(dims, dims[1:])]
    biases = [np.zeros(b) for b in dims[1:]]
    return SnnModel(weights, biases, output_kind, hp.activation, hp.dropout)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _act(name, z):
    return np.maximum(z, 0.0) if name == "relu" else sigmoid(z)


def _act_grad(name, z, a):
    return (z > 0).astype(np.float64) if name == "relu" else a * (1.0 - a)


def draw_masks(model, n_rows, rng):
    """Bernoulli(1 - dropout) keep-masks, one per hidden layer."""
    keep = 1.0 - model.dropout
    return [(rng.random((n_rows, w.shape[1])) < keep).astype(np.float64)
            for w in model.weights[:-1]]


def _check_input(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise DataError(f"network expects {model.input_dim} input columns, "
                        f"got shape {X.shape}")
    return X


def _forward_cache(model, X, masks):
    zs, hs = [], [X]
    h = X
    for layer in range(model.n_hidden):
        z = h @ model.weights[layer] + model.biases[layer]
        a = _act(model.activation, z)
        if masks is not None:
            a = a * masks[layer] / (1.0 - model.dropout)
        zs.append(z)
        hs.append(a)
        h = a
    out = (h @ model.weights[-1] + model.biases[-1])[:, 0]
    if model.output_kind == SIGMOID_OUTPUT:
        out = sigmoid(out)
    return out, zs, hs


def forward(model, X, training=False, rng=None, masks=None):
    """Network outputs for each row of ``X``.

    In training mode hidden activations are multiplied by keep-masks and
    scaled by ``1 / (1 - dropout)``. Masks are drawn from ``rng`` unless
    given explicitly.
    """
    X = _check_input(model, X)
    if training and masks is None and model.dropout > 0:
        if rng is None:
            raise ValueError("training-mode forward with dropout needs an rng or masks")
        masks = draw_masks(model, X.shape[0], rng)
    if not training:
        masks = None
    return _forward_cache(model, X, masks)[0]


def loss(model, X, y, masks=None):
    out = _forward_cache(model, _check_input(model, X), masks)[0]
    return _loss_value(model.output_kind, out, np.asarray(y, dtype=np.float64))


def _loss_value(output_kind, out, y):
    if output_kind == SIGMOID_OUTPUT:
        p = np.clip(out, PROB_CLAMP, 1.0 - PROB_CLAMP)
        return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    return float(np.mean((out - y) ** 2))


def gradients(model, X, y, masks=None):
    """Backpropagated gradients of the mean batch loss.

    Returns a list aligned with :meth:`SnnModel.params`. For the sigmoid
    head the output-logit gradient is ``p - y``, the exact derivative of
    cross-entropy wherever the probability clamp is inactive.
    """
    X = _check_input(model, X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(y) != X.shape[0]:
        raise DataError(f"{X.shape[0]} rows but {len(y)} targets")
    n = X.shape[0]
    out, zs, hs = _forward_cache(model, X, masks)
    if model.output_kind == SIGMOID_OUTPUT:
        delta = (out - y) / n
    else:
        delta = 2.0 * (out - y) / n
    delta = delta[:, None]
    grads = [None] * (2 * len(model.weights))
    grads[-2] = hs[-1].T @ delta
    grads[-1] = delta.sum(axis=0)
    for layer in range(model.n_hidden - 1, -1, -1):
        dh = delta @ model.weights[layer + 1].T
        if masks is not None:
            dh = dh * masks[layer] / (1.0 - model.dropout)
        act = _act(model.activation, zs[layer])
        delta = dh * _act_grad(model.activation, zs[layer], act)
        grads[2 * layer] = hs[layer].T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
    return grads


class _Adam:
    def __init__(self, params, lr):
        self.lr = lr
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - ADAM_BETA1 ** self.t
        c2 = 1.0 - ADAM_BETA2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def train(X, y, hp, output_kind=SIGMOID_OUTPUT):
    """Fit a network with mini-batch Adam.

    Rows are reshuffled every epoch, the last partial batch is used, and a
    fresh dropout mask is drawn per batch. The returned log holds, per
    epoch, the loss over the whole training set in inference mode.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("training needs a non-empty 2-D input")
    if len(y) != X.shape[0]:
        raise DataError(f"{X.shape[0]} rows but {len(y)} targets")
    if output_kind == SIGMOID_OUTPUT and not np.all(np.isin(y, (0.0, 1.0))):
        raise DataError("sigmoid output needs 0/1 targets")
    model = init_model(hp, X.shape[1], output_kind)
    shuffle_rng = make_rng(derive_seed(hp.seed, "shuffle"))
    dropout_rng = make_rng(derive_seed(hp.seed, "dropout"))
    params = model.params()
    opt = _Adam(params, hp.learning_rate)
    n, bs = X.shape[0], int(hp.batch_size)
    log = []
    for epoch in range(int(hp.epochs)):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, bs):
            rows = order[start:start + bs]
            masks = draw_masks(model, len(rows), dropout_rng) if model.dropout > 0 else None
            opt.step(params, gradients(model, X[rows], y[rows], masks))
        epoch_loss = loss(model, X, y)
        if not np.isfinite(epoch_loss):
            raise TrainingError(
                f"non-finite loss at epoch {epoch + 1} (lr={hp.learning_rate}, "
                f"batch_size={bs}, activation={hp.activation})")
        log.append(epoch_loss)
    return model, log


class _ShallowNetBase(BaseEstimator):
    _output_kind = None

    def __init__(self, hidden_layers=1, hidden_units=10, dropout=0.0, epochs=20,
                 batch_size=16, init_mode="he_normal", activation="relu",
                 learning_rate=1e-3, random_state=0):
        self.hidden_layers = hidden_layers
        self.hidden_units = hidden_units
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.init_mode = init_mode
        self.activation = activation
        self.learning_rate = learning_rate
        self.random_state = random_state

    def hyperparams(self):
        return SnnHyperparams(self.hidden_layers, self.hidden_units, self.dropout,
                              self.epochs, self.batch_size, self.init_mode,
                              self.activation, self.learning_rate,
                              self.random_state)

    def _fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.model_, self.loss_curve_ = train(X, y, self.hyperparams(),
                                              self._output_kind)
        self.n_features_in_ = X.shape[1]
        return self

    def _raw(self, X):
        check_is_fitted(self, "model_")
        return forward(self.model_, check_array(X, dtype=np.float64))


class ShallowNetClassifier(ClassifierMixin, _ShallowNetBase):
    """Binary classifier with a sigmoid output unit."""

    _output_kind = SIGMOID_OUTPUT

    def fit(self, X, y):
        self.classes_, y_enc = np.unique(np.asarray(y).ravel(), return_inverse=True)
        if len(self.classes_) != 2:
            raise DataError("ShallowNetClassifier needs exactly two classes")
        return self._fit(X, y_enc.astype(np.float64))

    def predict_proba(self, X):
        p = self._raw(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.classes_[(self._raw(X) >= 0.5).astype(int)]


class ShallowNetRegressor(RegressorMixin, _ShallowNetBase):
    """Regressor with a linear output unit."""

    _output_kind = LINEAR_OUTPUT

    def fit(self, X, y):
        return self._fit(X, y)

    def predict(self, X):
        return self._raw(X)
