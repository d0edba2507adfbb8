"""Feed-forward regression network: logistic hidden units, linear output.

Targets are standardized internally; the network is trained on mean
squared error with mini-batch Adam (or plain SGD).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULTS = {
    "hidden_layers": 7,
    "hidden_width": 64,
    "epochs": 200,
    "batch_size": 64,
    "learning_rate": 1e-3,
    "optimizer": "adam",
}


class TrainingDivergedError(RuntimeError):
    pass


def check_params(p: dict) -> dict:
    out = {**DEFAULTS, **p}
    if int(out["hidden_layers"]) < 0:
        raise ValueError("hidden_layers must be >= 0")
    if int(out["hidden_width"]) < 1:
        raise ValueError("hidden_width must be >= 1")
    if int(out["epochs"]) < 0:
        raise ValueError("epochs must be >= 0")
    if int(out["batch_size"]) < 1:
        raise ValueError("batch_size must be >= 1")
    if not float(out["learning_rate"]) > 0:
        raise ValueError("learning_rate must be positive")
    if out["optimizer"] not in ("adam", "sgd"):
        raise ValueError(f"unknown optimizer {out['optimizer']!r}")
    return out


def sigmoid(z):
    # split form avoids overflow in exp for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_layers(sizes, rng):
    """Glorot-uniform weights, zero biases.  ``sizes`` = [n_in, h1, ..., 1]."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-lim, lim, (fan_in, fan_out)), np.zeros(fan_out)))
    return layers


def forward(layers, X):
    """Returns the output vector and the list of layer activations."""
    acts = [X]
    h = X
    for W, b in layers[:-1]:
        h = sigmoid(h @ W + b)
        acts.append(h)
    W, b = layers[-1]
    return (h @ W + b)[:, 0], acts


def loss_and_grads(layers, X, y):
    """Mean squared error and its gradient w.r.t. every (W, b)."""
    out, acts = forward(layers, X)
    err = out - y
    loss = float(np.mean(err * err))
    delta = (2.0 / len(y)) * err[:, None]
    grads = [None] * len(layers)
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        grads[k] = (acts[k].T @ delta, delta.sum(axis=0))
        if k:
            a = acts[k]
            delta = (delta @ W.T) * a * (1.0 - a)
    return loss, grads


@dataclass(frozen=True, eq=False)
class MLP:
    layers: tuple[tuple[np.ndarray, np.ndarray], ...]
    y_mean: float = 0.0
    y_scale: float = 1.0
    loss_history: tuple[float, ...] = ()  # not serialized

    def predict(self, X: np.ndarray) -> np.ndarray:
        out, _ = forward(self.layers, np.asarray(X, dtype=np.float64))
        return self.y_mean + self.y_scale * out

    def to_payload(self) -> dict:
        return {
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "layers": [{"weights": W.tolist(), "bias": b.tolist()} for W, b in self.layers],
        }

    @classmethod
    def from_payload(cls, payload: dict, n_features: int) -> "MLP":
        layers = []
        fan_in = n_features
        for spec in payload["layers"]:
            W = np.asarray(spec["weights"], dtype=np.float64)
            b = np.asarray(spec["bias"], dtype=np.float64)
            if W.ndim != 2 or W.shape[0] != fan_in or b.shape != (W.shape[1],):
                raise ValueError("MLP layer shapes are inconsistent")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError("MLP contains non-finite weights")
            layers.append((W, b))
            fan_in = W.shape[1]
        if not layers or fan_in != 1:
            raise ValueError("MLP must end in a single output unit")
        return cls(tuple(layers), float(payload["y_mean"]), float(payload["y_scale"]))


def fit_mlp(X, y, params: dict, seed: int) -> MLP:
    p = check_params(params)
    rng = np.random.default_rng(seed)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    y_mean = float(y.mean())
    with np.errstate(over="ignore", invalid="ignore"):
        y_scale = float(y.std()) or 1.0
    if not np.isfinite(y_scale):
        raise ValueError("target spread is not finite; rescale the targets")
    ys = (y - y_mean) / y_scale
    sizes = [X.shape[1]] + [int(p["hidden_width"])] * int(p["hidden_layers"]) + [1]
    layers = [list(l) for l in init_layers(sizes, rng)]
    lr = float(p["learning_rate"])
    bs = int(p["batch_size"])
    adam = p["optimizer"] == "adam"
    b1, b2, eps = 0.9, 0.999, 1e-8
    m = [[np.zeros_like(W), np.zeros_like(b)] for W, b in layers]
    v = [[np.zeros_like(W), np.zeros_like(b)] for W, b in layers]
    step = 0
    history = []
    n = len(ys)
    # overflow surfaces as a non-finite loss, which is checked explicitly
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(int(p["epochs"])):
            order = rng.permutation(n)
            total = 0.0
            for s in range(0, n, bs):
                idx = order[s:s + bs]
                loss, grads = loss_and_grads(layers, X[idx], ys[idx])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(f"loss became non-finite at step {step}")
                total += loss * len(idx)
                step += 1
                for k, (gW, gb) in enumerate(grads):
                    for j, g in enumerate((gW, gb)):
                        if adam:
                            m[k][j] = b1 * m[k][j] + (1 - b1) * g
                            v[k][j] = b2 * v[k][j] + (1 - b2) * g * g
                            mh = m[k][j] / (1 - b1 ** step)
                            vh = v[k][j] / (1 - b2 ** step)
                            layers[k][j] = layers[k][j] - lr * mh / (np.sqrt(vh) + eps)
                        else:
                            layers[k][j] = layers[k][j] - lr * g
            epoch_loss = total / n
            if not np.isfinite(epoch_loss) or any(not np.all(np.isfinite(W)) for W, _ in layers):
                raise TrainingDivergedError("training diverged (non-finite loss or weights)")
            history.append(epoch_loss)
    return MLP(tuple((W, b) for W, b in layers), y_mean, y_scale, tuple(history))
