"""Sequence classifier: masked LSTM encoder with a sigmoid FC head.

Architecture: LSTM over standardized, padded sequences, mean-pooled over
the real steps, then FC(fc_hidden) with ReLU, dropout, and a per-class
sigmoid output layer trained with binary cross entropy. Prediction takes
the argmax over class outputs. Variational dropout masks (one draw per
sequence, shared across time steps) are applied to the inputs and the
recurrent state during training only.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import nn
from .errors import DimensionMismatchError, UntrainedModelError
from .preprocessing import FeatureStandardizer, pad_and_mask
from .seeding import child_rng


def network_params(rng, in_dim, n_hidden, fc_hidden, n_out):
    params = nn.lstm_params(rng, in_dim, n_hidden)
    params.update(nn.dense_params(rng, n_hidden, fc_hidden, "fc1"))
    params.update(nn.dense_params(rng, fc_hidden, n_out, "fc2"))
    return params


def network_forward(params, X, mask, drops=None):
    """Full forward pass; returns (probs, cache). drops is None at
    inference or (input, recurrent, head) dropout masks during training."""
    in_drop, rec_drop, head_drop = drops if drops is not None else (None,) * 3
    hs, lstm_cache = nn.lstm_forward(params, X, mask,
                                     in_drop=in_drop, rec_drop=rec_drop)
    pooled, pool_cache = nn.masked_mean_pool(hs, mask)
    a1, fc1_cache = nn.dense_forward(params, pooled, "fc1")
    r1, relu_cache = nn.relu_forward(a1)
    if head_drop is not None:
        r1 = r1 * head_drop
    a2, fc2_cache = nn.dense_forward(params, r1, "fc2")
    probs = nn.sigmoid(a2)
    cache = (lstm_cache, pool_cache, fc1_cache, relu_cache, fc2_cache,
             head_drop, probs)
    return probs, cache


def network_backward(params, cache, dprobs):
    (lstm_cache, pool_cache, fc1_cache, relu_cache, fc2_cache,
     head_drop, probs) = cache
    da2 = dprobs * probs * (1.0 - probs)
    g2, dr1 = nn.dense_backward(params, fc2_cache, da2)
    if head_drop is not None:
        dr1 = dr1 * head_drop
    da1 = nn.relu_backward(relu_cache, dr1)
    g1, dpooled = nn.dense_backward(params, fc1_cache, da1)
    dhs = nn.masked_mean_pool_backward(pool_cache, dpooled)
    glstm, _ = nn.lstm_backward(params, lstm_cache, dhs)
    return {**glstm, **g1, **g2}


def network_loss_and_grads(params, X, mask, targets, drops=None):
    probs, cache = network_forward(params, X, mask, drops=drops)
    loss, dprobs = nn.bce_loss(probs, targets)
    return loss, network_backward(params, cache, dprobs)


class SequenceLSTMClassifier(BaseEstimator, ClassifierMixin):
    """LSTM classifier over variable-length feature sequences.

    fit accepts a list of (T_i, n_features) arrays plus integer labels and
    an optional (sequences, labels) validation pair used for early
    stopping; without one, training loss is monitored instead.
    """

    def __init__(self, n_hidden=75, fc_hidden=50, dropout_in=0.2,
                 dropout_head=0.5, batch_size=16, epochs=100, patience=10,
                 learning_rate=1e-3, t_max=100, random_state=0):
        self.n_hidden = n_hidden
        self.fc_hidden = fc_hidden
        self.dropout_in = dropout_in
        self.dropout_head = dropout_head
        self.batch_size = batch_size
        self.epochs = epochs
        self.patience = patience
        self.learning_rate = learning_rate
        self.t_max = t_max
        self.random_state = random_state

    def _prepare(self, sequences):
        transformed = self.standardizer_.transform(sequences)
        return pad_and_mask(transformed, self.t_max)

    def fit(self, sequences, y, validation=None):
        y = np.asarray(y)
        if len(sequences) == 0:
            raise DimensionMismatchError("no training sequences")
        if len(sequences) != y.shape[0]:
            raise DimensionMismatchError(
                f"{len(sequences)} sequences vs {y.shape[0]} labels")
        self.classes_ = np.unique(y)
        self.n_features_in_ = int(np.asarray(sequences[0]).shape[1])
        class_index = {c: i for i, c in enumerate(self.classes_.tolist())}

        self.standardizer_ = FeatureStandardizer().fit(sequences)
        batch = self._prepare(sequences)
        targets = np.zeros((len(sequences), len(self.classes_)))
        targets[np.arange(len(sequences)),
                [class_index[c] for c in y.tolist()]] = 1.0

        init_rng = child_rng(self.random_state, 0)
        shuffle_rng = child_rng(self.random_state, 1)
        drop_rng = child_rng(self.random_state, 2)
        self.params_ = network_params(init_rng, self.n_features_in_,
                                      self.n_hidden, self.fc_hidden,
                                      len(self.classes_))

        if validation is not None:
            val_batch = self._prepare(validation[0])
            val_targets = np.zeros((len(validation[0]), len(self.classes_)))
            for row, label in enumerate(np.asarray(validation[1]).tolist()):
                val_targets[row, class_index[label]] = 1.0

            def val_fn(params):
                probs, _ = network_forward(params, val_batch.data,
                                           val_batch.mask)
                return nn.bce_loss(probs, val_targets)[0]
        else:
            def val_fn(params):
                probs, _ = network_forward(params, batch.data, batch.mask)
                return nn.bce_loss(probs, targets)[0]

        def step_fn(params, idx, adam):
            drops = None
            if self.dropout_in > 0 or self.dropout_head > 0:
                drops = (
                    nn.dropout_mask(drop_rng,
                                    (len(idx), self.n_features_in_),
                                    self.dropout_in),
                    nn.dropout_mask(drop_rng, (len(idx), self.n_hidden),
                                    self.dropout_in),
                    nn.dropout_mask(drop_rng, (len(idx), self.fc_hidden),
                                    self.dropout_head),
                )
            loss, grads = network_loss_and_grads(
                params, batch.data[idx], batch.mask[idx], targets[idx],
                drops=drops)
            nn.adam_step(params, grads, adam)
            return loss

        self.train_result_ = nn.train_loop(
            self.params_, len(sequences), step_fn, val_fn, shuffle_rng,
            batch_size=self.batch_size, epochs=self.epochs,
            patience=self.patience, lr=self.learning_rate)
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise UntrainedModelError("classifier has not been fitted")

    def class_scores(self, sequences) -> np.ndarray:
        """Per-class sigmoid outputs, one row per sequence. Independent
        sigmoids, so rows need not sum to 1."""
        self._check_fitted()
        if len(sequences) and (np.asarray(sequences[0]).shape[1]
                               != self.n_features_in_):
            raise DimensionMismatchError(
                f"expected {self.n_features_in_} features")
        batch = self._prepare(sequences)
        probs, _ = network_forward(self.params_, batch.data, batch.mask)
        return probs

    def predict(self, sequences) -> np.ndarray:
        scores = self.class_scores(sequences)
        return self.classes_[np.argmax(scores, axis=1)]

    def score(self, sequences, y) -> float:
        return float(np.mean(self.predict(sequences) == np.asarray(y)))
