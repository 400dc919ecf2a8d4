"""Stream conditioning between raw sensor data and the models.

Provides:
  butter_lowpass_coeffs — closed-form 2nd-order Butterworth design
  iir_lowpass           — causal per-feature low-pass at 1 kHz
  decimate              — 1 kHz -> 50 Hz by keeping every 20th sample
  StandardizationStats / FeatureStandardizer / standardize — per-feature
      zero-mean unit-variance scaling fitted on training data only
  PaddedBatch / pad_and_mask / unpad — variable-length sequence batching
  flatten_for_svm       — fixed-length time-major flattening

The filter coefficients come from the bilinear transform of the analog
2nd-order Butterworth prototype. With K = tan(pi * fc / fs):

  den = 1 + sqrt(2) K + K^2
  b = [K^2, 2 K^2, K^2] / den
  a = [1, 2 (K^2 - 1) / den, (1 - sqrt(2) K + K^2) / den]

so b0 + b1 + b2 == a0 + a1 + a2 and the DC gain is exactly 1.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter, lfilter_zi
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DimensionMismatchError, EmptyInputError, InvalidCutoffError

RAW_RATE_HZ = 1000.0
DECIMATION = 20
STD_FLOOR = 1e-8


def butter_lowpass_coeffs(cutoff_hz: float, fs: float = RAW_RATE_HZ):
    """Return (b, a) for the documented closed-form biquad."""
    if not 0.0 < cutoff_hz < fs / 2.0:
        raise InvalidCutoffError(
            f"cutoff {cutoff_hz} Hz outside (0, {fs / 2.0}) Hz")
    k = np.tan(np.pi * cutoff_hz / fs)
    den = 1.0 + np.sqrt(2.0) * k + k * k
    b = np.array([k * k, 2.0 * k * k, k * k]) / den
    a = np.array([1.0,
                  2.0 * (k * k - 1.0) / den,
                  (1.0 - np.sqrt(2.0) * k + k * k) / den])
    return b, a


def iir_lowpass(stream, cutoff_hz: float, fs: float = RAW_RATE_HZ) -> np.ndarray:
    """Causal low-pass along axis 0, initialized at steady state for the
    first sample so a constant input stays exactly constant."""
    x = np.asarray(stream, dtype=float)
    if x.ndim == 1:
        return iir_lowpass(x[:, None], cutoff_hz, fs)[:, 0]
    if x.shape[0] == 0:
        return x.copy()
    b, a = butter_lowpass_coeffs(cutoff_hz, fs)
    zi = lfilter_zi(b, a)
    y, _ = lfilter(b, a, x, axis=0, zi=zi[:, None] * x[0][None, :])
    return y


def decimate(stream, factor: int = DECIMATION) -> np.ndarray:
    """Keep every `factor`-th sample starting at index 0. The caller is
    responsible for low-pass filtering first."""
    x = np.asarray(stream)
    if factor < 1:
        raise ValueError("decimation factor must be >= 1")
    return x[::factor].copy()


# Standardization ----------------------------------------------------------

@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        std = np.asarray(self.std, dtype=float).ravel()
        if mean.shape != std.shape:
            raise DimensionMismatchError("mean and std lengths differ")
        if np.any(std <= 0):
            raise ValueError("std values must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


class FeatureStandardizer(BaseEstimator, TransformerMixin):
    """Per-feature zero-mean unit-variance scaler for frame sequences.

    fit() accepts either a 2-D array of frames or a list of (T_i, D)
    sequences; statistics are computed over all rows. transform() maps
    inputs of either shape with the fitted statistics.
    """

    def __init__(self, std_floor: float = STD_FLOOR):
        self.std_floor = std_floor

    def fit(self, X, y=None):
        rows = _stack_rows(X)
        if rows.shape[0] == 0:
            raise EmptyInputError("cannot fit standardizer on zero frames")
        mean = rows.mean(axis=0)
        std = np.maximum(rows.std(axis=0), self.std_floor)
        self.stats_ = StandardizationStats(mean, std)
        self.n_features_in_ = rows.shape[1]
        return self

    def transform(self, X):
        stats = self.stats_
        if isinstance(X, (list, tuple)):
            return [self._apply(np.asarray(seq, dtype=float), stats)
                    for seq in X]
        return self._apply(np.asarray(X, dtype=float), stats)

    def inverse_transform(self, X):
        stats = self.stats_
        if isinstance(X, (list, tuple)):
            return [np.asarray(s, dtype=float) * stats.std + stats.mean
                    for s in X]
        return np.asarray(X, dtype=float) * stats.std + stats.mean

    @staticmethod
    def _apply(arr, stats):
        if arr.shape[-1] != stats.mean.shape[0]:
            raise DimensionMismatchError(
                f"feature dim {arr.shape[-1]} != fitted {stats.mean.shape[0]}")
        return (arr - stats.mean) / stats.std


def standardize(dataset, stats: StandardizationStats | None = None):
    """Transform a list of sequences; fit statistics first when absent.

    Returns (transformed, stats)."""
    scaler = FeatureStandardizer()
    if stats is None:
        scaler.fit(dataset)
    else:
        scaler.stats_ = stats
    return scaler.transform(dataset), scaler.stats_


def _stack_rows(X) -> np.ndarray:
    if isinstance(X, (list, tuple)):
        arrays = [np.asarray(seq, dtype=float) for seq in X]
        if not arrays:
            raise EmptyInputError("no sequences given")
        return np.concatenate([a.reshape(-1, a.shape[-1]) for a in arrays])
    arr = np.asarray(X, dtype=float)
    return arr.reshape(-1, arr.shape[-1])


# Batching -----------------------------------------------------------------

@dataclass(frozen=True)
class PaddedBatch:
    data: np.ndarray     # (batch, T_max, features)
    mask: np.ndarray     # (batch, T_max) bool, True for real steps
    lengths: np.ndarray  # (batch,) int

    def __post_init__(self):
        if self.data.shape[:2] != self.mask.shape:
            raise DimensionMismatchError("data and mask shapes disagree")
        if np.any(self.mask.sum(axis=1) != self.lengths):
            raise DimensionMismatchError("mask does not match lengths")


def pad_and_mask(sequences, t_max: int) -> PaddedBatch:
    """Zero-pad at the end; sequences longer than t_max keep only their
    most recent t_max steps."""
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    arrays = [np.asarray(s, dtype=float) for s in sequences]
    if not arrays:
        raise EmptyInputError("no sequences to pad")
    dim = arrays[0].shape[1]
    for a in arrays:
        if a.ndim != 2 or a.shape[1] != dim:
            raise DimensionMismatchError("sequences must share feature dim")
        if a.shape[0] < 1:
            raise EmptyInputError("empty sequence in batch")
    data = np.zeros((len(arrays), t_max, dim))
    mask = np.zeros((len(arrays), t_max), dtype=bool)
    lengths = np.zeros(len(arrays), dtype=int)
    for i, a in enumerate(arrays):
        kept = a[-t_max:]
        data[i, :kept.shape[0]] = kept
        mask[i, :kept.shape[0]] = True
        lengths[i] = kept.shape[0]
    return PaddedBatch(data=data, mask=mask, lengths=lengths)


def unpad(batch: PaddedBatch) -> list:
    return [batch.data[i, :n].copy() for i, n in enumerate(batch.lengths)]


def flatten_for_svm(sequence, t_fixed: int) -> np.ndarray:
    """Fix the length like pad_and_mask (keep the most recent steps, pad
    zeros at the end), then flatten time-major."""
    if t_fixed < 1:
        raise ValueError("t_fixed must be >= 1")
    seq = np.asarray(sequence, dtype=float)
    if seq.ndim != 2:
        raise DimensionMismatchError("expected a (T, features) sequence")
    out = np.zeros((t_fixed, seq.shape[1]))
    kept = seq[-t_fixed:]
    out[:kept.shape[0]] = kept
    return out.ravel()
