"""Regrasp planning: ratio geometry, robustness network, and policies.

A detected rotational slip tells which side of the grasp the center of
mass lies on. The segment from the boundary point a on that side to the
current grasp center c parametrizes candidate regrasp poses by the ratio
mu in [0, 1] (pose_b = a + (c - a) * mu). The robustness network scores a
candidate (mu, grip-force delta) from the first grasp's tactile and
wrench sequences; planning maximizes that score over a grid.

The policy suite mirrors a two-try benchmark: two open-loop baselines
(random pose, occupancy-grid centroid) and two closed-loop policies that
regrasp after slip detection (fixed ratio 0.5, learned planner).
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import nn
from .errors import (DegenerateSegmentError, NotRotationalError,
                     OutOfRangeError, SlipGraspError, UntrainedModelError)
from .geometry import (GRIP_FORCE_RANGE, BoundaryPair, GraspPose,
                       ObjectModel, boundary_intersections,
                       grasp_from_contacts, jaw_contact_points,
                       signed_com_offset)
from .physics import Episode, SlipLabel, slip_outcome
from .preprocessing import FeatureStandardizer, pad_and_mask
from .seeding import child_rng

FORCE_DELTA_SCALE = 20.0       # Newtons mapped to 1.0 at the net input
FORCE_DELTA_GRID = (0.0, 10.0, 20.0)
ROTATIONAL = (SlipLabel.CW_ROTATIONAL, SlipLabel.CCW_ROTATIONAL)


# Ratio geometry -----------------------------------------------------------

def regrasp_ratio(a, c, b) -> float:
    """mu = |b - a| / |c - a| for a point b on the segment from a to c."""
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.linalg.norm(c - a))
    if length < 1e-9:
        raise DegenerateSegmentError("segment a-c has near-zero length")
    mu = float(np.linalg.norm(b - a)) / length
    if mu > 1.0 + 1e-9:
        raise OutOfRangeError(f"point lies beyond the segment (mu={mu:.6f})")
    return min(mu, 1.0)


def regrasp_pose(pose_a, pose_c, mu: float) -> np.ndarray:
    """pose_b = pose_a + (pose_c - pose_a) * mu, exact at both endpoints."""
    if not -1e-9 <= mu <= 1.0 + 1e-9:
        raise OutOfRangeError(f"mu={mu} outside [0, 1]")
    mu = min(max(mu, 0.0), 1.0)
    a = np.asarray(pose_a, dtype=float)
    c = np.asarray(pose_c, dtype=float)
    return (1.0 - mu) * a + mu * c


def reference_boundary_point(pair: BoundaryPair, slip) -> np.ndarray:
    """Boundary point a on the side the COM is on: the d > 0 exit for a
    cw slip, the opposite one for ccw."""
    if slip == SlipLabel.CW_ROTATIONAL:
        return pair.a
    if slip == SlipLabel.CCW_ROTATIONAL:
        return pair.a_prime
    raise NotRotationalError(f"slip label {slip!r} names no COM side")


def grasp_at(obj: ObjectModel, point, closing_dir, depth_z: float,
             grip_force: float, friction: float) -> GraspPose:
    """Grasp whose closing line passes through an interior point."""
    contacts = jaw_contact_points(obj.polygon, point, closing_dir)
    if contacts is None:
        raise SlipGraspError("closing line does not cross the boundary twice")
    return grasp_from_contacts(contacts[0], contacts[1], depth_z, grip_force,
                               friction)


# Robustness network (functional core) -------------------------------------

def planner_params(rng, features, tactile_hidden, wrench_hidden,
                   scalar_hidden, fc_hidden, tactile_dim=32, wrench_dim=6):
    params = {}
    head_in = 2 * scalar_hidden
    if features in ("tactile", "tactile+torque"):
        params.update(nn.lstm_params(rng, tactile_dim, tactile_hidden,
                                     prefix="enc_t"))
        head_in += tactile_hidden
    if features in ("torque", "tactile+torque"):
        params.update(nn.lstm_params(rng, wrench_dim, wrench_hidden,
                                     prefix="enc_w"))
        head_in += wrench_hidden
    params.update(nn.dense_params(rng, 1, scalar_hidden, "exp_mu"))
    params.update(nn.dense_params(rng, 1, scalar_hidden, "exp_fd"))
    params.update(nn.dense_params(rng, head_in, fc_hidden, "fc1"))
    params.update(nn.dense_params(rng, fc_hidden, 1, "fc2"))
    return params


def planner_forward(params, Xt, Xw, mask, mu, fd, features="tactile+torque",
                    drops=None):
    """Forward pass -> (robustness (B, 1), cache). mu and fd arrive as
    (B, 1) columns already scaled to order 1."""
    in_t, rec_t, in_w, rec_w, head_drop = (drops if drops is not None
                                           else (None,) * 5)
    feats, branches = [], {}
    if features in ("tactile", "tactile+torque"):
        hs, c = nn.lstm_forward(params, Xt, mask, prefix="enc_t",
                                in_drop=in_t, rec_drop=rec_t)
        pooled, pc = nn.masked_mean_pool(hs, mask)
        branches["enc_t"] = (c, pc, pooled.shape[1])
        feats.append(pooled)
    if features in ("torque", "tactile+torque"):
        hs, c = nn.lstm_forward(params, Xw, mask, prefix="enc_w",
                                in_drop=in_w, rec_drop=rec_w)
        pooled, pc = nn.masked_mean_pool(hs, mask)
        branches["enc_w"] = (c, pc, pooled.shape[1])
        feats.append(pooled)
    for name, col in (("exp_mu", mu), ("exp_fd", fd)):
        act, dc = nn.dense_forward(params, col, name)
        rel, rc = nn.relu_forward(act)
        branches[name] = (dc, rc, rel.shape[1])
        feats.append(rel)
    feat = np.concatenate(feats, axis=1)
    a1, c1 = nn.dense_forward(params, feat, "fc1")
    r1, cr1 = nn.relu_forward(a1)
    if head_drop is not None:
        r1 = r1 * head_drop
    a2, c2 = nn.dense_forward(params, r1, "fc2")
    pred = nn.sigmoid(a2)
    order = ([k for k in ("enc_t", "enc_w") if k in branches]
             + ["exp_mu", "exp_fd"])
    cache = (branches, order, c1, cr1, c2, head_drop, pred)
    return pred, cache


def planner_backward(params, cache, dpred):
    branches, order, c1, cr1, c2, head_drop, pred = cache
    da2 = dpred * pred * (1.0 - pred)
    grads, dr1 = nn.dense_backward(params, c2, da2)
    if head_drop is not None:
        dr1 = dr1 * head_drop
    da1 = nn.relu_backward(cr1, dr1)
    g1, dfeat = nn.dense_backward(params, c1, da1)
    grads.update(g1)
    splits = np.cumsum([branches[k][2] for k in order])[:-1]
    parts = dict(zip(order, np.split(dfeat, splits, axis=1)))
    for key in order:
        first, second, _ = branches[key]
        if key.startswith("enc_"):
            dhs = nn.masked_mean_pool_backward(second, parts[key])
            g, _ = nn.lstm_backward(params, first, dhs)
        else:
            g, _ = nn.dense_backward(params, first,
                                     nn.relu_backward(second, parts[key]))
        grads.update(g)
    return grads


def planner_loss_and_grads(params, Xt, Xw, mask, mu, fd, targets,
                           features="tactile+torque", drops=None):
    pred, cache = planner_forward(params, Xt, Xw, mask, mu, fd,
                                  features=features, drops=drops)
    loss, dpred = nn.mse_loss(pred, targets)
    return loss, planner_backward(params, cache, dpred)


# Training data record ------------------------------------------------------

@dataclass(frozen=True)
class RegraspSample:
    """One supervised planner example: the first grasp's sequences, the
    tried (mu, force delta), and whether the second grasp held."""

    tactile: np.ndarray        # (T, 32)
    wrench: np.ndarray         # (T, 6)
    mu: float
    force_delta: float
    label: int                 # 1 = regrasp held without slip
    object_name: str = ""

    def __post_init__(self):
        t = np.asarray(self.tactile, dtype=float)
        w = np.asarray(self.wrench, dtype=float)
        if t.ndim != 2 or t.shape[1] != 32:
            raise SlipGraspError(f"tactile shape {t.shape} != (T, 32)")
        if w.shape != (t.shape[0], 6):
            raise SlipGraspError("wrench must align with tactile frames")
        if not 0.0 <= self.mu <= 1.0:
            raise OutOfRangeError(f"mu={self.mu} outside [0, 1]")
        if self.label not in (0, 1):
            raise SlipGraspError("label must be 0 or 1")
        object.__setattr__(self, "tactile", t)
        object.__setattr__(self, "wrench", w)


class RegraspRobustnessNet(BaseEstimator):
    """Fig.-4-style robustness scorer with selectable input ablation."""

    def __init__(self, features="tactile+torque", tactile_hidden=32,
                 wrench_hidden=16, scalar_hidden=16, fc_hidden=50,
                 dropout_in=0.2, dropout_head=0.5, batch_size=16,
                 epochs=100, patience=10, learning_rate=1e-3, t_max=100,
                 random_state=0):
        self.features = features
        self.tactile_hidden = tactile_hidden
        self.wrench_hidden = wrench_hidden
        self.scalar_hidden = scalar_hidden
        self.fc_hidden = fc_hidden
        self.dropout_in = dropout_in
        self.dropout_head = dropout_head
        self.batch_size = batch_size
        self.epochs = epochs
        self.patience = patience
        self.learning_rate = learning_rate
        self.t_max = t_max
        self.random_state = random_state

    def _use(self):
        if self.features not in ("tactile", "torque", "tactile+torque"):
            raise SlipGraspError(f"unknown feature set {self.features!r}")
        return (self.features in ("tactile", "tactile+torque"),
                self.features in ("torque", "tactile+torque"))

    def _prepare(self, samples):
        use_t, use_w = self._use()
        t_seqs = [s.tactile for s in samples]
        w_seqs = [s.wrench for s in samples]
        if use_t and self.tactile_std_ is not None:
            t_seqs = self.tactile_std_.transform(t_seqs)
        if use_w and self.wrench_std_ is not None:
            w_seqs = self.wrench_std_.transform(w_seqs)
        bt = pad_and_mask(t_seqs, self.t_max)
        bw = pad_and_mask(w_seqs, self.t_max)
        mu = np.array([[s.mu] for s in samples])
        fd = np.array([[s.force_delta / FORCE_DELTA_SCALE]
                       for s in samples])
        return bt.data, bw.data, bt.mask, mu, fd

    def fit(self, samples, validation=None):
        if len(samples) == 0:
            raise SlipGraspError("no training samples")
        use_t, use_w = self._use()
        self.tactile_std_ = (FeatureStandardizer().fit(
            [s.tactile for s in samples]) if use_t else None)
        self.wrench_std_ = (FeatureStandardizer().fit(
            [s.wrench for s in samples]) if use_w else None)
        init_rng = child_rng(self.random_state, 0)
        shuffle_rng = child_rng(self.random_state, 1)
        drop_rng = child_rng(self.random_state, 2)
        self.params_ = planner_params(
            init_rng, self.features, self.tactile_hidden,
            self.wrench_hidden, self.scalar_hidden, self.fc_hidden)

        Xt, Xw, mask, mu, fd = self._prepare(samples)
        targets = np.array([[float(s.label)] for s in samples])
        if validation is not None:
            vt, vw, vmask, vmu, vfd = self._prepare(validation)
            vtargets = np.array([[float(s.label)] for s in validation])

            def val_fn(params):
                pred, _ = planner_forward(params, vt, vw, vmask, vmu, vfd,
                                          features=self.features)
                return nn.mse_loss(pred, vtargets)[0]
        else:
            def val_fn(params):
                pred, _ = planner_forward(params, Xt, Xw, mask, mu, fd,
                                          features=self.features)
                return nn.mse_loss(pred, targets)[0]

        def step_fn(params, idx, adam):
            drops = (
                nn.dropout_mask(drop_rng, (len(idx), Xt.shape[2]),
                                self.dropout_in) if use_t else None,
                nn.dropout_mask(drop_rng, (len(idx), self.tactile_hidden),
                                self.dropout_in) if use_t else None,
                nn.dropout_mask(drop_rng, (len(idx), Xw.shape[2]),
                                self.dropout_in) if use_w else None,
                nn.dropout_mask(drop_rng, (len(idx), self.wrench_hidden),
                                self.dropout_in) if use_w else None,
                nn.dropout_mask(drop_rng, (len(idx), self.fc_hidden),
                                self.dropout_head),
            )
            loss, grads = planner_loss_and_grads(
                params, Xt[idx], Xw[idx], mask[idx], mu[idx], fd[idx],
                targets[idx], features=self.features, drops=drops)
            nn.adam_step(params, grads, adam)
            return loss

        self.train_result_ = nn.train_loop(
            self.params_, len(samples), step_fn, val_fn, shuffle_rng,
            batch_size=self.batch_size, epochs=self.epochs,
            patience=self.patience, lr=self.learning_rate)
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise UntrainedModelError("planner has not been fitted")

    def predict_robustness(self, samples) -> np.ndarray:
        self._check_fitted()
        Xt, Xw, mask, mu, fd = self._prepare(samples)
        pred, _ = planner_forward(self.params_, Xt, Xw, mask, mu, fd,
                                  features=self.features)
        return pred[:, 0]

    def predict(self, samples) -> np.ndarray:
        return (self.predict_robustness(samples) >= 0.5).astype(int)

    def score(self, samples, y=None) -> float:
        """Binary accuracy of thresholded robustness against the labels."""
        if y is None:
            y = [s.label for s in samples]
        return float(np.mean(self.predict(samples) == np.asarray(y)))

    def robustness(self, tactile_seq, wrench_seq, mu: float,
                   force_delta: float) -> float:
        sample = RegraspSample(tactile_seq, wrench_seq, float(mu),
                               float(force_delta), 0)
        return float(self.predict_robustness([sample])[0])


# Planning ------------------------------------------------------------------

@dataclass(frozen=True)
class PlanResult:
    mu: float
    pose_b: np.ndarray
    force_delta: float
    score: float


def _mu_grid(n_candidates: int) -> np.ndarray:
    if n_candidates < 1:
        raise OutOfRangeError("need at least one candidate")
    if n_candidates == 1:
        return np.array([0.5])
    return np.linspace(0.0, 1.0, n_candidates)


def plan(planner, episode: Episode, pair: BoundaryPair,
         n_candidates: int = 21, force_deltas=FORCE_DELTA_GRID,
         max_force: float = GRIP_FORCE_RANGE[1]) -> PlanResult:
    """Score every (mu, force delta) candidate and return the best.

    Ties resolve to the smallest mu, then the smallest force delta, so
    replanning is deterministic.
    """
    if episode.label not in ROTATIONAL:
        raise NotRotationalError(
            f"cannot plan a regrasp for label {episode.label!r}")
    a = reference_boundary_point(pair, episode.label)
    c = episode.grasp.center
    base = episode.grasp.grip_force
    deltas = list(dict.fromkeys(
        min(fd, max_force - base) for fd in force_deltas))
    tactile = episode.tactile_array()
    wrench = episode.wrench_array()
    best = None
    for mu in _mu_grid(n_candidates):
        for fd in deltas:
            score = planner.robustness(tactile, wrench, float(mu),
                                       float(fd))
            if best is None or score > best.score:
                best = PlanResult(float(mu), regrasp_pose(a, c, mu),
                                  float(fd), float(score))
    return best


class OraclePlanner:
    """Physics ground truth as a robustness scorer.

    Scores 0 for a failed second grasp and, for a holding one, a value
    strictly decreasing in the residual COM offset, so planning lands at
    the grid point nearest the true COM.
    """

    def __init__(self, obj: ObjectModel, episode: Episode,
                 pair: BoundaryPair):
        self.obj = obj
        self.episode = episode
        self.a = reference_boundary_point(pair, episode.label)
        self.c = episode.grasp.center
        self.scale = float(np.linalg.norm(self.c - self.a))

    def robustness(self, tactile_seq, wrench_seq, mu, force_delta) -> float:
        grasp = self.episode.grasp
        force = float(np.clip(grasp.grip_force + force_delta,
                              *GRIP_FORCE_RANGE))
        try:
            candidate = grasp_at(self.obj, regrasp_pose(self.a, self.c, mu),
                                 grasp.normal_dir, grasp.depth_z, force,
                                 grasp.friction_coefficient)
            if slip_outcome(self.obj, candidate) != SlipLabel.NO_SLIP:
                return 0.0
        except SlipGraspError:
            return 0.0
        residual = abs(signed_com_offset(self.obj, candidate))
        return max(1e-9, 1.0 - residual / max(self.scale, 1e-9))


# Policy suite --------------------------------------------------------------

def _regrasp_from_label(obj, episode, label, mu, force_delta):
    """Construct the second grasp a closed-loop policy commands; None
    means keep holding (no slip was detected)."""
    grasp = episode.grasp
    if label == SlipLabel.NO_SLIP:
        return None
    if label == SlipLabel.TRANSLATIONAL:
        bumped = min(grasp.grip_force + FORCE_DELTA_SCALE,
                     GRIP_FORCE_RANGE[1])
        return grasp.with_force(bumped)
    pair = boundary_intersections(obj, grasp)
    a = reference_boundary_point(pair, label)
    point = regrasp_pose(a, grasp.center, mu)
    force = float(np.clip(grasp.grip_force + force_delta,
                          *GRIP_FORCE_RANGE))
    return grasp_at(obj, point, grasp.normal_dir, grasp.depth_z, force,
                    grasp.friction_coefficient)


class RandomPolicy:
    """Open loop: a random pose, then one more random pose."""

    name = "random"
    closed_loop = False

    def first_index(self, candidates, grid, rng) -> int:
        return int(rng.integers(len(candidates)))

    def retry_index(self, candidates, grid, first: int, rng) -> int:
        if len(candidates) == 1:
            return first
        while True:
            k = int(rng.integers(len(candidates)))
            if k != first:
                return k


class CentroidPolicy:
    """Open loop: nearest sampled pose to the occupancy centroid, then
    the next nearest."""

    name = "centroid"
    closed_loop = False

    @staticmethod
    def _ranked(candidates, grid):
        target = grid.centroid()
        dists = [float(np.linalg.norm(c.center - target))
                 for c in candidates]
        return np.argsort(dists, kind="stable")

    def first_index(self, candidates, grid, rng) -> int:
        return int(self._ranked(candidates, grid)[0])

    def retry_index(self, candidates, grid, first: int, rng) -> int:
        ranked = self._ranked(candidates, grid)
        return int(ranked[1]) if len(ranked) > 1 else first


class FixedRatioPolicy:
    """Closed loop: regrasp at a fixed ratio after a detected slip."""

    name = "fixed_ratio"
    closed_loop = True

    def __init__(self, ratio: float = 0.5):
        self.ratio = ratio

    def first_index(self, candidates, grid, rng) -> int:
        return int(rng.integers(len(candidates)))

    def regrasp(self, obj, episode, label, rng):
        return _regrasp_from_label(obj, episode, label, self.ratio, 0.0)


class LearnedPolicy:
    """Closed loop: regrasp at the robustness-network argmax."""

    name = "learned"
    closed_loop = True

    def __init__(self, planner, n_candidates: int = 21,
                 force_deltas=FORCE_DELTA_GRID):
        self.planner = planner
        self.n_candidates = n_candidates
        self.force_deltas = force_deltas

    def first_index(self, candidates, grid, rng) -> int:
        return int(rng.integers(len(candidates)))

    def regrasp(self, obj, episode, label, rng):
        if label not in ROTATIONAL:
            return _regrasp_from_label(obj, episode, label, 0.5, 0.0)
        pair = boundary_intersections(obj, episode.grasp)
        relabeled = episode if episode.label == label else None
        if relabeled is None:
            # plan() keys the COM side off the episode label; substitute
            # the detected one.
            relabeled = Episode(
                episode.tactile_seq, episode.wrench_seq, label,
                episode.object_name, episode.grasp, episode.com_offset_d,
                episode.lift_height, episode.sample_rate)
        result = plan(self.planner, relabeled, pair,
                      n_candidates=self.n_candidates,
                      force_deltas=self.force_deltas)
        return _regrasp_from_label(obj, episode, label, result.mu,
                                   result.force_delta)
