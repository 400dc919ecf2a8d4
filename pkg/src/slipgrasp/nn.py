"""From-scratch neural-network core: masked LSTM, dense layers, Adam.

Provides:
  lstm_params / lstm_forward / lstm_backward — batched LSTM over padded
      sequences; padded steps copy hidden and cell state forward unchanged
  dense_forward / dense_backward, relu_*        — affine + ReLU pieces
  masked_mean_pool / masked_mean_pool_backward  — pool over real steps only
  sigmoid, bce_loss, mse_loss                   — heads and losses
  dropout_mask      — inverted-dropout masks (fixed per sequence)
  AdamState / adam_init / adam_step             — canonical Adam
  train_loop        — minibatch loop with early stopping on validation loss

Parameters live in flat dicts of float64 arrays; every backward function
returns gradients under the same keys, which keeps finite-difference
checking and the optimizer generic. The LSTM packs its four gates into one
(in_dim, 4H) input matrix and one (H, 4H) recurrent matrix in the order
input gate, forget gate, cell candidate, output gate.
"""

from dataclasses import dataclass, field

import numpy as np


def init_uniform(rng, rows: int, cols: int) -> np.ndarray:
    """Uniform [-s, s] with s = 1/sqrt(fan_in)."""
    s = 1.0 / np.sqrt(rows)
    return rng.uniform(-s, s, size=(rows, cols))


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# LSTM ---------------------------------------------------------------------

def lstm_params(rng, in_dim: int, hidden: int, prefix: str = "lstm") -> dict:
    return {
        f"{prefix}_W": init_uniform(rng, in_dim, 4 * hidden),
        f"{prefix}_U": init_uniform(rng, hidden, 4 * hidden),
        f"{prefix}_b": np.zeros(4 * hidden),
    }


def lstm_forward(params: dict, X, mask, prefix: str = "lstm",
                 in_drop=None, rec_drop=None):
    """Run the recurrence over a (B, T, D) batch with a (B, T) mask.

    Returns (hidden_seq (B, T, H), cache). Masked steps carry the previous
    hidden and cell state forward, so padded values never reach the output.
    Optional dropout masks (B, D) / (B, H) are fixed per sequence and
    multiply the inputs and the recurrent hidden state.
    """
    W, U, b = (params[f"{prefix}_W"], params[f"{prefix}_U"],
               params[f"{prefix}_b"])
    B, T, _ = X.shape
    H = U.shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hidden_seq = np.zeros((B, T, H))
    steps = []
    for t in range(T):
        x_t = X[:, t] if in_drop is None else X[:, t] * in_drop
        h_in = h if rec_drop is None else h * rec_drop
        z = x_t @ W + h_in @ U + b
        i = sigmoid(z[:, 0 * H:1 * H])
        f = sigmoid(z[:, 1 * H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = sigmoid(z[:, 3 * H:4 * H])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        m = mask[:, t][:, None].astype(float)
        steps.append((x_t, h_in, i, f, g, o, c, c_new, tanh_c, m))
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c
        hidden_seq[:, t] = h
    cache = {"steps": steps, "X_shape": X.shape, "prefix": prefix,
             "in_drop": in_drop, "rec_drop": rec_drop}
    return hidden_seq, cache


def lstm_backward(params: dict, cache: dict, d_hidden_seq):
    """Backpropagate through time. Returns (grads, dX)."""
    prefix = cache["prefix"]
    W, U = params[f"{prefix}_W"], params[f"{prefix}_U"]
    B, T, D = cache["X_shape"]
    H = U.shape[0]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H)
    dX = np.zeros((B, T, D))
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    in_drop, rec_drop = cache["in_drop"], cache["rec_drop"]

    for t in reversed(range(T)):
        x_t, h_in, i, f, g, o, c_prev, c_new, tanh_c, m = cache["steps"][t]
        dh = dh + d_hidden_seq[:, t]
        dh_new = dh * m
        dc_new = dc * m + dh_new * o * (1.0 - tanh_c ** 2)
        do = dh_new * tanh_c
        di = dc_new * g
        dg = dc_new * i
        df = dc_new * c_prev
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g ** 2),
            do * o * (1.0 - o),
        ], axis=1)
        dW += x_t.T @ dz
        dU += h_in.T @ dz
        db += dz.sum(axis=0)
        dx = dz @ W.T
        dX[:, t] = dx if in_drop is None else dx * in_drop
        dh_rec = dz @ U.T
        if rec_drop is not None:
            dh_rec = dh_rec * rec_drop
        dh = dh * (1.0 - m) + dh_rec
        dc = dc * (1.0 - m) + dc_new * f
    grads = {f"{prefix}_W": dW, f"{prefix}_U": dU, f"{prefix}_b": db}
    return grads, dX


# Dense / activations ------------------------------------------------------

def dense_params(rng, in_dim: int, out_dim: int, prefix: str) -> dict:
    return {f"{prefix}_W": init_uniform(rng, in_dim, out_dim),
            f"{prefix}_b": np.zeros(out_dim)}


def dense_forward(params: dict, X, prefix: str):
    out = X @ params[f"{prefix}_W"] + params[f"{prefix}_b"]
    return out, (X, prefix)


def dense_backward(params: dict, cache, d_out):
    X, prefix = cache
    grads = {f"{prefix}_W": X.T @ d_out,
             f"{prefix}_b": d_out.sum(axis=0)}
    return grads, d_out @ params[f"{prefix}_W"].T


def relu_forward(X):
    return np.maximum(X, 0.0), (X > 0)


def relu_backward(cache, d_out):
    return d_out * cache


def masked_mean_pool(hidden_seq, mask):
    """(B, T, H), (B, T) -> (B, H) mean over unmasked steps."""
    counts = mask.sum(axis=1)[:, None].astype(float)
    pooled = (hidden_seq * mask[:, :, None]).sum(axis=1) / counts
    return pooled, (mask, counts)


def masked_mean_pool_backward(cache, d_pooled):
    mask, counts = cache
    return (d_pooled / counts)[:, None, :] * mask[:, :, None]


def dropout_mask(rng, shape, rate: float) -> np.ndarray:
    """Inverted dropout: scaled keep-mask so inference needs no rescale."""
    if rate <= 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep.astype(float) / (1.0 - rate)


# Losses -------------------------------------------------------------------

BCE_CLAMP = 1e-7


def bce_loss(pred, target):
    """Mean binary cross entropy; returns (loss, d_pred)."""
    p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    t = np.asarray(target, dtype=float)
    loss = float(-np.mean(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)))
    grad = np.where((pred > BCE_CLAMP) & (pred < 1.0 - BCE_CLAMP),
                    (p - t) / (p * (1.0 - p)), 0.0) / p.size
    return loss, grad


def mse_loss(pred, target):
    t = np.asarray(target, dtype=float)
    diff = pred - t
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


# Adam ---------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: dict, lr: float = 1e-3) -> AdamState:
    return AdamState(m={k: np.zeros_like(v) for k, v in params.items()},
                     v={k: np.zeros_like(v) for k, v in params.items()},
                     lr=lr)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """Canonical Adam with bias correction; updates params in place."""
    state.step += 1
    b1c = 1.0 - state.beta1 ** state.step
    b2c = 1.0 - state.beta2 ** state.step
    for k, g in grads.items():
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        m_hat = state.m[k] / b1c
        v_hat = state.v[k] / b2c
        params[k] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# Training loop ------------------------------------------------------------

@dataclass
class TrainResult:
    epochs_run: int
    best_epoch: int
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)


def train_loop(params: dict, n_samples: int, step_fn, val_fn, rng,
               batch_size: int = 16, epochs: int = 100, patience: int = 10,
               lr: float = 1e-3) -> TrainResult:
    """Generic minibatch loop.

    step_fn(params, indices, adam) performs one update and returns the batch
    loss; val_fn(params) returns the validation loss. Keeps the parameters
    of the best validation epoch and restores them at the end.
    """
    adam = adam_init(params, lr=lr)
    best_val = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = 0
    result = TrainResult(epochs_run=0, best_epoch=0)
    since_best = 0
    for epoch in range(epochs):
        order = rng.permutation(n_samples)
        losses = []
        for start in range(0, n_samples, batch_size):
            idx = order[start:start + batch_size]
            losses.append(step_fn(params, idx, adam))
        val = val_fn(params)
        result.train_losses.append(float(np.mean(losses)))
        result.val_losses.append(float(val))
        result.epochs_run = epoch + 1
        if val < best_val - 1e-9:
            best_val = val
            best_params = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch + 1
            since_best = 0
        else:
            since_best += 1
            if since_best >= patience:
                break
    for k in params:
        params[k] = best_params[k]
    result.best_epoch = best_epoch
    return result
