"""Experiment orchestration: synthesis, training, evaluation, benchmark.

Dataset generation walks a deterministic stream of per-episode child
RNGs, so a (config, seed) pair always yields the same records no matter
how many episodes were rejected along the way. Reports are CSV plus a
plain-text summary; nothing here draws figures.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datasets
from .config import ExperimentConfig
from .detector import (FEATURE_SETS, OracleDetector, SlipDetector,
                       evaluate)
from .errors import (CellTooCoarseError, NoIntersectionError,
                     SamplerExhaustedError, SlipGraspError)
from .geometry import (GRIP_FORCE_RANGE, ObjectModel, boundary_intersections,
                       polygon_centroid, rasterize_and_segment,
                       sample_antipodal_grasps)
from .metrics import (accuracy, confusion_counts, f_score, kfold_objectwise,
                      train_val_split)
from .objects import TEST_NAMES, read_object_library, standard_roster
from .physics import SlipLabel, simulate_lift
from .regrasp import (CentroidPolicy, FixedRatioPolicy, LearnedPolicy,
                      RandomPolicy, RegraspRobustnessNet, RegraspSample,
                      grasp_at, reference_boundary_point, regrasp_pose)
from .seeding import child_rng

log = logging.getLogger(__name__)

# Independent child-RNG streams under one master seed.
STREAM_SLIP, STREAM_REGRASP, STREAM_BENCH = 0, 1, 2

ROTATIONAL = (SlipLabel.CW_ROTATIONAL, SlipLabel.CCW_ROTATIONAL)
SVM_BACKENDS = ("linear_svm", "rbf_svm")
LABEL_NAMES = {SlipLabel.NO_SLIP: "no_slip",
               SlipLabel.CW_ROTATIONAL: "cw",
               SlipLabel.CCW_ROTATIONAL: "ccw",
               SlipLabel.TRANSLATIONAL: "translational"}

POSE_SHIFT = 0.05          # m, uniform re-randomization of object position
RASTER_CELL = 0.005        # m, occupancy grid for the centroid policy


def load_roster(config: ExperimentConfig):
    """-> (train_objects, test_objects), split by the held-out name list."""
    if config.objects.library is not None:
        roster = read_object_library(config.objects.library)
    else:
        roster = standard_roster()
    train = [o for o in roster if o.name not in TEST_NAMES]
    test = [o for o in roster if o.name in TEST_NAMES]
    if not train:
        raise SlipGraspError("object roster has no training objects")
    return train, test


def _random_pose(obj: ObjectModel, rng) -> ObjectModel:
    angle = float(rng.uniform(0.0, 2.0 * np.pi))
    offset = rng.uniform(-POSE_SHIFT, POSE_SHIFT, size=2)
    about = polygon_centroid(obj.polygon)
    return obj.rotated(angle, about=about).translated(offset)


def _sample_grasp(obj: ObjectModel, ds_cfg, rng):
    """One antipodal pose with the material friction drawn for this lift."""
    pose = sample_antipodal_grasps(
        obj, 1, ds_cfg.table_depth, rng,
        grip_force_range=ds_cfg.grip_force_range)[0]
    return pose.with_friction(float(rng.uniform(*ds_cfg.friction_range)))


def collect_slip_dataset(config: ExperimentConfig, seed=None):
    """-> (episodes, manifest). Rejected draws advance the stream, so the
    output is a pure function of (config, seed)."""
    seed = config.seeds.master if seed is None else seed
    train, test = load_roster(config)
    ds_cfg = config.slip_dataset
    noise = config.noise.to_noise()
    episodes, skipped, k = [], 0, 0
    budget = 200 * ds_cfg.episodes
    while len(episodes) < ds_cfg.episodes:
        if k >= budget:
            raise SlipGraspError(
                f"gave up after {k} draws: {len(episodes)} of "
                f"{ds_cfg.episodes} episodes")
        rng = child_rng(seed, STREAM_SLIP, k)
        k += 1
        obj = _random_pose(train[int(rng.integers(len(train)))], rng)
        try:
            grasp = _sample_grasp(obj, ds_cfg, rng)
            episodes.append(simulate_lift(obj, grasp, ds_cfg.lift_height,
                                          rng, noise))
        except SamplerExhaustedError as exc:
            log.info("sampler exhausted on %s: %s", obj.name, exc)
            skipped += 1
        except SlipGraspError:
            skipped += 1
    counts = {name: 0 for name in LABEL_NAMES.values()}
    for ep in episodes:
        counts[LABEL_NAMES[ep.label]] += 1
    manifest = {"seed": int(seed),
                "train_objects": sorted(o.name for o in train),
                "test_objects": sorted(o.name for o in test),
                "class_counts": counts, "rejected_draws": skipped}
    return episodes, manifest


def collect_regrasp_dataset(config: ExperimentConfig, seed=None):
    """-> (samples, manifest). Each record pairs a rotational first-grasp
    episode with a random (mu, force delta) and the oracle outcome of the
    grasp they define."""
    seed = config.seeds.master if seed is None else seed
    train, test = load_roster(config)
    ds_cfg = config.slip_dataset
    rg_cfg = config.regrasp_dataset
    noise = config.noise.to_noise()
    samples, rejected, k = [], 0, 0
    budget = 400 * rg_cfg.samples
    while len(samples) < rg_cfg.samples:
        if k >= budget:
            raise SlipGraspError(
                f"gave up after {k} draws: {len(samples)} of "
                f"{rg_cfg.samples} samples")
        rng = child_rng(seed, STREAM_REGRASP, k)
        k += 1
        obj = _random_pose(train[int(rng.integers(len(train)))], rng)
        try:
            grasp = _sample_grasp(obj, ds_cfg, rng)
            episode = simulate_lift(obj, grasp, ds_cfg.lift_height, rng,
                                    noise)
        except (SamplerExhaustedError, SlipGraspError):
            rejected += 1
            continue
        if episode.label not in ROTATIONAL:
            rejected += 1
            continue
        mu = float(rng.uniform())
        delta = float(rg_cfg.force_deltas[
            int(rng.integers(len(rg_cfg.force_deltas)))])
        label = regrasp_outcome_label(obj, grasp, episode.label, mu, delta)
        samples.append(RegraspSample(
            episode.tactile_array(), episode.wrench_array(), mu, delta,
            label, episode.object_name))
    positives = sum(s.label for s in samples)
    manifest = {"seed": int(seed),
                "train_objects": sorted(o.name for o in train),
                "test_objects": sorted(o.name for o in test),
                "positive_fraction": positives / len(samples),
                "rejected_draws": rejected}
    return samples, manifest


def slip_outcome_is_hold(obj, grasp) -> bool:
    from .physics import slip_outcome
    try:
        return slip_outcome(obj, grasp) == SlipLabel.NO_SLIP
    except SlipGraspError:
        return False


def regrasp_outcome_label(obj, grasp, slip_label, mu: float,
                          delta: float) -> int:
    """1 if the grasp derived from (mu, force delta) holds the object.

    Infeasible poses count as failures: a ratio of 0 asks for the
    boundary point itself, where the jaws close on nothing.
    """
    try:
        pair = boundary_intersections(obj, grasp)
        a = reference_boundary_point(pair, slip_label)
        point = regrasp_pose(a, grasp.center, mu)
        force = float(np.clip(grasp.grip_force + delta, *GRIP_FORCE_RANGE))
        second = grasp_at(obj, point, grasp.normal_dir, grasp.depth_z,
                          force, grasp.friction_coefficient)
    except SlipGraspError:
        return 0
    return int(slip_outcome_is_hold(obj, second))


# Model factories -----------------------------------------------------------

def slip_detector_factory(config: ExperimentConfig, backend: str,
                          features: str) -> SlipDetector:
    svm = config.training.slip_svm
    lstm = config.training.slip_lstm
    if backend == "lstm":
        return SlipDetector(
            backend=backend, features=features, t_max=lstm.t_max,
            epochs=lstm.epochs, patience=lstm.patience,
            batch_size=lstm.batch_size, learning_rate=lstm.learning_rate,
            lstm_hidden=lstm.hidden, lstm_fc_hidden=lstm.fc_hidden,
            random_state=config.seeds.master)
    c_value = svm.c_linear if backend == "linear_svm" else svm.c_rbf
    return SlipDetector(backend=backend, features=features, C=c_value,
                        gamma=svm.gamma, t_max=svm.t_max,
                        random_state=config.seeds.master)


def planner_factory(config: ExperimentConfig,
                    features: str) -> RegraspRobustnessNet:
    rg = config.training.regrasp
    return RegraspRobustnessNet(
        features=features, tactile_hidden=rg.tactile_hidden,
        wrench_hidden=rg.wrench_hidden, scalar_hidden=rg.scalar_hidden,
        fc_hidden=rg.fc_hidden, epochs=rg.epochs, patience=rg.patience,
        batch_size=rg.batch_size, learning_rate=rg.learning_rate,
        t_max=rg.t_max, random_state=config.seeds.master)


def _split_by_objects(items, names, seed):
    """(train_items, val_items) via the object-wise validation split."""
    train_names, val_names = train_val_split(names, seed=seed)
    train = [it for it, n in zip(items, names) if n in set(train_names)]
    val = [it for it, n in zip(items, names) if n in set(val_names)]
    return train, val


def train_slip_models(config: ExperimentConfig, episodes, out_dir=None,
                      backends=None, features=None):
    """Fit one detector per (backend, feature set); optionally save them."""
    backends = backends or ("linear_svm", "rbf_svm", "lstm")
    features = features or FEATURE_SETS
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    names = [e.object_name for e in episodes]
    models = {}
    for backend in backends:
        for feats in features:
            detector = slip_detector_factory(config, backend, feats)
            if backend == "lstm":
                fit_train, fit_val = _split_by_objects(
                    episodes, names, config.seeds.master)
                detector.fit(fit_train, validation=fit_val)
            else:
                detector.fit(episodes)
            models[(backend, feats)] = detector
            if out_dir is not None:
                path = Path(out_dir) / _model_name("slip", backend, feats)
                datasets.save_detector(path, detector)
                log.info("saved %s", path)
    return models


def train_regrasp_models(config: ExperimentConfig, samples, out_dir=None,
                         features=None):
    """Fit one planner per input ablation with an object-wise val split."""
    features = features or FEATURE_SETS
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    names = [s.object_name for s in samples]
    fit_train, fit_val = _split_by_objects(samples, names,
                                           config.seeds.master)
    models = {}
    for feats in features:
        planner = planner_factory(config, feats)
        planner.fit(fit_train, validation=fit_val)
        models[feats] = planner
        if out_dir is not None:
            path = Path(out_dir) / _model_name("regrasp", None, feats)
            datasets.save_planner(path, planner)
            log.info("saved %s", path)
    return models


def _slug(features: str) -> str:
    return features.replace("+", "_")


def _model_name(kind: str, backend, features: str) -> str:
    middle = f"{backend}_" if backend else ""
    return f"{kind}_{middle}{_slug(features)}.json"


# Evaluation ----------------------------------------------------------------

@dataclass(frozen=True)
class FoldResult:
    fold: int
    n_test: int
    accuracy: float
    macro_f: float
    per_object: tuple       # (object, n, accuracy, macro_f) rows
    counts: np.ndarray      # 4x4 confusion counts over all labels


def crossval_slip(config: ExperimentConfig, episodes, backend: str,
                  features: str):
    """Object-wise k-fold cross-validation of one detector variant."""
    names = np.array([e.object_name for e in episodes])
    results = []
    all_labels = [int(lbl) for lbl in SlipLabel]
    for fold, (train_idx, test_idx) in enumerate(
            kfold_objectwise(names, k=config.evaluation.folds,
                             seed=config.seeds.master).split(names)):
        train_eps = [episodes[i] for i in train_idx]
        test_eps = [episodes[i] for i in test_idx]
        detector = slip_detector_factory(config, backend, features)
        if backend == "lstm":
            fit_train, fit_val = _split_by_objects(
                train_eps, [e.object_name for e in train_eps],
                config.seeds.master)
            detector.fit(fit_train, validation=fit_val)
        else:
            detector.fit(train_eps)
        report = evaluate(
            detector, test_eps,
            min_translational_support=config.evaluation
            .min_translational_support)
        y_true = np.array([int(e.label) for e in test_eps])
        y_pred = detector.predict(test_eps)
        counts = confusion_counts(y_true, y_pred, all_labels)
        per_object = []
        for obj_name in sorted(set(names[test_idx])):
            sel = np.array([e.object_name == obj_name for e in test_eps])
            per_object.append((
                obj_name, int(sel.sum()),
                accuracy(y_true[sel], y_pred[sel]),
                f_score(y_true[sel], y_pred[sel])))
        results.append(FoldResult(fold, len(test_eps), report.accuracy,
                                  report.macro_f, tuple(per_object),
                                  counts))
    return results


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def evaluate_slip(config: ExperimentConfig, episodes, out_dir,
                  backends=None, features=None):
    """Cross-validate every detector variant and emit the CV tables."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    backends = backends or ("linear_svm", "rbf_svm", "lstm")
    features = features or FEATURE_SETS
    fold_rows, summary_rows, object_rows = [], [], []
    summary = {}
    label_names = [LABEL_NAMES[lbl] for lbl in SlipLabel]
    for backend in backends:
        for feats in features:
            results = crossval_slip(config, episodes, backend, feats)
            accs = [r.accuracy for r in results]
            summary[(backend, feats)] = float(np.mean(accs))
            for r in results:
                fold_rows.append((backend, feats, r.fold, r.n_test,
                                  f"{r.accuracy:.4f}", f"{r.macro_f:.4f}"))
                for obj_name, n, acc, fs in r.per_object:
                    object_rows.append((backend, feats, obj_name, n,
                                        f"{acc:.4f}", f"{fs:.4f}"))
            summary_rows.append(
                (backend, feats, f"{np.mean(accs):.4f}",
                 f"{np.std(accs):.4f}",
                 f"{np.mean([r.macro_f for r in results]):.4f}"))
            counts = np.sum([r.counts for r in results], axis=0)
            conf_rows = [[label_names[i]] + counts[i].tolist()
                         for i in range(len(label_names))]
            _write_csv(
                out_dir / f"slip_confusion_{backend}_{_slug(feats)}.csv",
                ["true_label"] + [f"pred_{n}" for n in label_names],
                conf_rows)
    _write_csv(out_dir / "slip_cv.csv",
               ["backend", "features", "fold", "n_test", "accuracy",
                "macro_f"], fold_rows)
    _write_csv(out_dir / "slip_cv_summary.csv",
               ["backend", "features", "mean_accuracy", "std_accuracy",
                "mean_macro_f"], summary_rows)
    _write_csv(out_dir / "slip_per_object_f.csv",
               ["backend", "features", "object", "n", "accuracy",
                "macro_f"], object_rows)
    return summary


def evaluate_regrasp(config: ExperimentConfig, samples, models, out_dir):
    """Score each ablation on the shared validation split; small gaps in
    the expected ordering are flagged rather than hidden."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = [s.object_name for s in samples]
    _, val = _split_by_objects(samples, names, config.seeds.master)
    scores = {feats: planner.score(val) for feats, planner in models.items()}
    order = [f for f in ("tactile+torque", "tactile", "torque")
             if f in scores]
    rows = []
    for i, feats in enumerate(order):
        gap = (scores[feats] - scores[order[i + 1]]
               if i + 1 < len(order) else "")
        flag = ""
        if gap != "":
            if gap < 0:
                flag = "ordering_violated"
            elif gap < 0.02:
                flag = "gap_below_2pts"
        rows.append((feats, len(val), f"{scores[feats]:.4f}",
                     f"{gap:.4f}" if gap != "" else "", flag))
    _write_csv(out_dir / "regrasp_ablation.csv",
               ["features", "n_val", "val_accuracy", "gap_to_next",
                "flag"], rows)
    return scores


# Policy benchmark ----------------------------------------------------------

def default_policies(planner) -> tuple:
    return (RandomPolicy(), CentroidPolicy(), FixedRatioPolicy(),
            LearnedPolicy(planner))


def _attempt_outcome(obj, grasp):
    from .physics import slip_outcome
    try:
        return slip_outcome(obj, grasp)
    except SlipGraspError:
        return None


def bench_policies(config: ExperimentConfig, planner, detector=None,
                   seed=None, out_dir=None, test_objects=None):
    """Two-try grasp benchmark on the held-out objects.

    Every policy sees the same candidate set and, where it chooses
    randomly, the same first pick, so the comparison isolates the retry
    strategy. Success means the final grasp holds. The detector feeding
    the closed-loop policies defaults to the ground-truth oracle.
    """
    seed = config.seeds.master if seed is None else seed
    if test_objects is None:
        _, test_objects = load_roster(config)
    if not test_objects:
        raise SlipGraspError("no held-out objects to benchmark on")
    if detector is None:
        detector = OracleDetector()
    policies = default_policies(planner)
    ds_cfg = config.slip_dataset
    noise = config.noise.to_noise()
    tallies = {(obj.name, p.name): 0 for obj in test_objects
               for p in policies}

    for oi, base_obj in enumerate(test_objects):
        for gi in range(config.benchmark.grasps_per_object):
            trial_rng = child_rng(seed, STREAM_BENCH, oi, gi, 0)
            obj = _random_pose(base_obj, trial_rng)
            try:
                poses = sample_antipodal_grasps(
                    obj, config.benchmark.candidate_poses,
                    ds_cfg.table_depth, trial_rng,
                    grip_force_range=ds_cfg.grip_force_range)
            except SamplerExhaustedError as exc:
                log.info("bench sampler exhausted on %s: %s",
                         obj.name, exc)
                continue
            material = float(trial_rng.uniform(*ds_cfg.friction_range))
            candidates = [p.with_friction(material) for p in poses]
            try:
                grid, _ = rasterize_and_segment(obj, RASTER_CELL)
            except CellTooCoarseError:
                grid, _ = rasterize_and_segment(obj, RASTER_CELL / 2.0)

            episode_cache = {}

            def first_episode(index):
                if index not in episode_cache:
                    episode_cache[index] = simulate_lift(
                        obj, candidates[index], ds_cfg.lift_height,
                        child_rng(seed, STREAM_BENCH, oi, gi, 2, index),
                        noise)
                return episode_cache[index]

            for pi, policy in enumerate(policies):
                pick_rng = child_rng(seed, STREAM_BENCH, oi, gi, 1)
                first = policy.first_index(candidates, grid, pick_rng)
                episode = first_episode(first)
                if episode.label == SlipLabel.NO_SLIP:
                    tallies[(obj.name, policy.name)] += 1
                    continue
                retry_rng = child_rng(seed, STREAM_BENCH, oi, gi, 3, pi)
                outcome = None
                if policy.closed_loop:
                    detected = SlipLabel(int(
                        detector.predict([episode])[0]))
                    try:
                        second = policy.regrasp(obj, episode, detected,
                                                retry_rng)
                    except SlipGraspError:
                        second = None
                    if second is not None:
                        outcome = _attempt_outcome(obj, second)
                else:
                    retry = policy.retry_index(candidates, grid, first,
                                               retry_rng)
                    outcome = _attempt_outcome(obj, candidates[retry])
                if outcome == SlipLabel.NO_SLIP:
                    tallies[(obj.name, policy.name)] += 1

    trials = config.benchmark.grasps_per_object
    rows, means = [], {}
    for policy in policies:
        per_object = [tallies[(obj.name, policy.name)]
                      for obj in test_objects]
        for obj, wins in zip(test_objects, per_object):
            rows.append((obj.name, policy.name, wins, trials,
                         f"{wins / trials:.4f}"))
        means[policy.name] = float(np.mean(per_object) / trials)
    for policy in policies:
        total = sum(tallies[(obj.name, policy.name)]
                    for obj in test_objects)
        rows.append(("mean", policy.name, total,
                     trials * len(test_objects),
                     f"{means[policy.name]:.4f}"))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(out_dir / "policy_bench.csv",
                   ["object", "policy", "successes", "trials", "rate"],
                   rows)
        wide = [[obj.name] + [f"{tallies[(obj.name, p.name)] / trials:.4f}"
                              for p in policies] for obj in test_objects]
        wide.append(["mean"] + [f"{means[p.name]:.4f}" for p in policies])
        _write_csv(out_dir / "policy_bench_table.csv",
                   ["object"] + [p.name for p in policies], wide)
    return rows, means


# Composition ---------------------------------------------------------------

def train_all(config: ExperimentConfig, episodes, samples, out_dir=None):
    """Every detector variant plus every planner ablation in one pass."""
    detectors = train_slip_models(config, episodes, out_dir=out_dir)
    planners = train_regrasp_models(config, samples, out_dir=out_dir)
    return detectors, planners


def evaluate_all(config: ExperimentConfig, episodes, samples, out_dir,
                 planners=None, backends=None):
    """Cross-validated slip tables plus the planner ablation table."""
    slip_summary = evaluate_slip(config, episodes, out_dir,
                                 backends=backends)
    if planners is None:
        planners = train_regrasp_models(config, samples)
    regrasp_scores = evaluate_regrasp(config, samples, planners, out_dir)
    return {"slip": slip_summary, "regrasp": regrasp_scores}


# Plain-text summary --------------------------------------------------------

def write_summary(out_dir) -> Path:
    """Collect whatever CSV reports exist in ``out_dir`` into one page."""
    out_dir = Path(out_dir)
    lines = ["slipgrasp experiment summary", "=" * 28, ""]
    for name, title in (("slip_cv_summary.csv",
                         "Slip detection (object-wise CV accuracy)"),
                        ("regrasp_ablation.csv",
                         "Regrasp planner ablations (val accuracy)"),
                        ("policy_bench.csv",
                         "Policy benchmark (success rates)")):
        path = out_dir / name
        if not path.exists():
            continue
        lines.append(title)
        lines.append("-" * len(title))
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                lines.append("  ".join(str(c) for c in row))
        lines.append("")
    target = out_dir / "summary.txt"
    with open(target, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return target
