"""Four-class slip detection: contact gating plus a trained classifier.

The detector answers "what happened during this lift" with one of
no_slip, cw_rotational, ccw_rotational, or translational. Contact gating
handles the degenerate paths from the total tactile pressure alone: an
episode whose trailing frames show no pressure lost the object
(translational), and one that never showed pressure never held an object
(no_slip). Everything still in contact goes to a 3-class classifier over
{no_slip, cw, ccw}, which can be a linear SVM, an RBF SVM, or the LSTM.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import metrics
from .errors import EmptyInputError, SlipGraspError, UntrainedModelError
from .lstm import SequenceLSTMClassifier
from .physics import Episode, SlipLabel, TactileFrame, WrenchSample
from .preprocessing import FeatureStandardizer, flatten_for_svm
from .svm import PairwiseSVC

CONTACT_WINDOW = 10                # frames (0.2 s at 50 Hz)
CONTACT_THRESHOLD = 0.1            # total pressure; 5x default taxel noise
ROTATION_CLASSES = (SlipLabel.NO_SLIP, SlipLabel.CW_ROTATIONAL,
                    SlipLabel.CCW_ROTATIONAL)
FEATURE_SETS = ("tactile", "torque", "tactile+torque")
BACKENDS = ("linear_svm", "rbf_svm", "lstm")


def episode_features(episode: Episode, features: str) -> np.ndarray:
    """(T, n) feature matrix for one episode under an input ablation.
    "torque" selects the full 6-axis force/torque stream."""
    if features == "tactile":
        return episode.tactile_array()
    if features == "torque":
        return episode.wrench_array()
    if features == "tactile+torque":
        return np.hstack([episode.tactile_array(), episode.wrench_array()])
    raise SlipGraspError(f"unknown feature set {features!r}")


def contact_gate(episode: Episode, threshold: float = CONTACT_THRESHOLD,
                 window: int = CONTACT_WINDOW):
    """Resolve the contact state; None means "in contact, ask the
    classifier"."""
    totals = episode.tactile_array().sum(axis=1)
    w = min(window, len(totals))
    if totals[-w:].mean() >= threshold:
        return None
    if totals[:w].mean() < threshold:
        return SlipLabel.NO_SLIP
    return SlipLabel.TRANSLATIONAL


def mirror_episode(episode: Episode) -> Episode:
    """The episode as seen through a mirror across the lifting plane.

    Sensor planes swap, the reference axis flips, so fy, tx, tz change
    sign, cw and ccw labels exchange, and the offset d is negated. Grasp
    metadata is kept as recorded; only features and labels are mirrored.
    """
    frames = tuple(TactileFrame(f.pressures[[1, 0]], f.timestamp)
                   for f in episode.tactile_seq)
    wrenches = tuple(
        WrenchSample(w.force * np.array([1.0, -1.0, 1.0]),
                     w.torque * np.array([-1.0, 1.0, -1.0]),
                     w.timestamp)
        for w in episode.wrench_seq)
    swap = {SlipLabel.CW_ROTATIONAL: SlipLabel.CCW_ROTATIONAL,
            SlipLabel.CCW_ROTATIONAL: SlipLabel.CW_ROTATIONAL}
    return Episode(tactile_seq=frames, wrench_seq=wrenches,
                   label=swap.get(episode.label, episode.label),
                   object_name=episode.object_name, grasp=episode.grasp,
                   com_offset_d=-episode.com_offset_d,
                   lift_height=episode.lift_height,
                   sample_rate=episode.sample_rate)


class SlipDetector(BaseEstimator, ClassifierMixin):
    """Gated slip classifier over recorded lift episodes."""

    def __init__(self, backend="linear_svm", features="tactile+torque",
                 contact_threshold=CONTACT_THRESHOLD,
                 contact_window=CONTACT_WINDOW, C=None, gamma="scale",
                 t_max=100, epochs=100, patience=10, batch_size=16,
                 learning_rate=1e-3, lstm_hidden=75, lstm_fc_hidden=50,
                 random_state=0):
        self.backend = backend
        self.features = features
        self.contact_threshold = contact_threshold
        self.contact_window = contact_window
        self.C = C
        self.gamma = gamma
        self.t_max = t_max
        self.epochs = epochs
        self.patience = patience
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lstm_hidden = lstm_hidden
        self.lstm_fc_hidden = lstm_fc_hidden
        self.random_state = random_state

    def _sequences(self, episodes):
        return [episode_features(e, self.features) for e in episodes]

    def fit(self, episodes, validation=None):
        """Train the in-contact classifier on the rotational-or-stable
        episodes; gated classes need no training data."""
        if self.backend not in BACKENDS:
            raise SlipGraspError(f"unknown backend {self.backend!r}")
        if self.features not in FEATURE_SETS:
            raise SlipGraspError(f"unknown feature set {self.features!r}")
        train = [e for e in episodes if e.label in ROTATION_CLASSES]
        if not train:
            raise EmptyInputError("no in-contact episodes to train on")
        y = np.array([int(e.label) for e in train])
        seqs = self._sequences(train)

        if self.backend == "lstm":
            val = None
            if validation is not None:
                val_eps = [e for e in validation if e.label in ROTATION_CLASSES]
                if val_eps:
                    val = (self._sequences(val_eps),
                           np.array([int(e.label) for e in val_eps]))
            self.model_ = SequenceLSTMClassifier(
                n_hidden=self.lstm_hidden, fc_hidden=self.lstm_fc_hidden,
                t_max=self.t_max, epochs=self.epochs, patience=self.patience,
                batch_size=self.batch_size,
                learning_rate=self.learning_rate,
                random_state=self.random_state).fit(seqs, y, validation=val)
            self.standardizer_ = None
        else:
            kernel = "linear" if self.backend == "linear_svm" else "rbf"
            c_value = self.C if self.C is not None else (
                1.0 if kernel == "linear" else 1e3)
            self.standardizer_ = FeatureStandardizer().fit(seqs)
            X = np.stack([flatten_for_svm(s, self.t_max)
                          for s in self.standardizer_.transform(seqs)])
            self.model_ = PairwiseSVC(kernel=kernel, C=c_value,
                                      gamma=self.gamma).fit(X, y)
        return self

    def _classify(self, episodes) -> np.ndarray:
        seqs = self._sequences(episodes)
        if self.standardizer_ is None:
            return self.model_.predict(seqs)
        X = np.stack([flatten_for_svm(s, self.t_max)
                      for s in self.standardizer_.transform(seqs)])
        return self.model_.predict(X)

    def predict(self, episodes) -> np.ndarray:
        """One SlipLabel value per episode."""
        if not hasattr(self, "model_"):
            raise UntrainedModelError("detector has not been fitted")
        out = np.empty(len(episodes), dtype=int)
        route = []
        for k, episode in enumerate(episodes):
            gated = contact_gate(episode, self.contact_threshold,
                                 self.contact_window)
            if gated is None:
                route.append(k)
            else:
                out[k] = int(gated)
        if route:
            out[route] = self._classify([episodes[k] for k in route])
        return out

    def score(self, episodes, y=None) -> float:
        if y is None:
            y = [int(e.label) for e in episodes]
        return metrics.accuracy(np.asarray(y), self.predict(episodes))


class OracleDetector:
    """Replays the ground-truth labels; the upper bound for any detector."""

    def predict(self, episodes) -> np.ndarray:
        return np.array([int(e.label) for e in episodes])

    def score(self, episodes, y=None) -> float:
        if y is None:
            return 1.0
        return metrics.accuracy(np.asarray(y), self.predict(episodes))


@dataclass(frozen=True)
class DetectionReport:
    accuracy: float
    confusion: np.ndarray          # row-normalized, rows = true classes
    macro_f: float
    classes: tuple
    n_scored: int
    n_excluded_translational: int


def evaluate(detector, episodes, min_translational_support: int = 30
             ) -> DetectionReport:
    """Score a detector on labeled episodes.

    When the translational class is too rare to measure (support below
    min_translational_support) its episodes are dropped from the headline
    metrics and the report covers the 3 in-contact classes.
    """
    if len(episodes) == 0:
        raise EmptyInputError("no episodes to evaluate")
    y_true = np.array([int(e.label) for e in episodes])
    y_pred = np.asarray(detector.predict(episodes))
    n_trans = int(np.sum(y_true == int(SlipLabel.TRANSLATIONAL)))
    if n_trans < min_translational_support:
        keep = y_true != int(SlipLabel.TRANSLATIONAL)
        classes = tuple(int(c) for c in ROTATION_CLASSES)
        excluded = n_trans
    else:
        keep = np.ones_like(y_true, dtype=bool)
        classes = tuple(int(c) for c in SlipLabel)
        excluded = 0
    if not np.any(keep):
        raise EmptyInputError("no scorable episodes after exclusion")
    y_true, y_pred = y_true[keep], y_pred[keep]
    return DetectionReport(
        accuracy=metrics.accuracy(y_true, y_pred),
        confusion=metrics.confusion_matrix(y_true, y_pred, classes),
        macro_f=metrics.f_score(y_true, y_pred),
        classes=classes,
        n_scored=int(keep.sum()),
        n_excluded_translational=excluded)
