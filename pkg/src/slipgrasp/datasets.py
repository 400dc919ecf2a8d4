"""Dataset and model persistence: versioned JSON with base64 payloads.

Files are deterministic byte-for-byte for identical content: keys are
sorted, separators fixed, newlines always "\\n", and nothing
time-dependent is written. Arrays are stored raw (little-endian C order)
so a load restores them exactly.

Dataset files are JSON lines: one header object, then one record per
line. Model files are a single JSON document.
"""

import base64
import json

import numpy as np

from .detector import SlipDetector
from .errors import DatasetFormatError, SlipGraspError
from .geometry import grasp_from_contacts
from .lstm import SequenceLSTMClassifier
from .physics import Episode, SlipLabel, TactileFrame, WrenchSample
from .preprocessing import FeatureStandardizer, StandardizationStats
from .regrasp import RegraspRobustnessNet, RegraspSample
from .svm import PairwiseSVC, SvmPairModel

SLIP_FORMAT = "slipgrasp-slip-episodes"
REGRASP_FORMAT = "slipgrasp-regrasp-samples"
MODEL_FORMAT = "slipgrasp-model"
VERSION = 1

WRENCH_AXES = ("fx", "fy", "fz", "tx", "ty", "tz")

_DTYPES = {"float64": "<f8", "float32": "<f4", "int64": "<i8"}


def encode_array(arr) -> dict:
    arr = np.asarray(arr)
    name = str(arr.dtype)
    if name not in _DTYPES:
        raise SlipGraspError(f"unsupported array dtype {name}")
    packed = np.ascontiguousarray(arr.astype(_DTYPES[name]))
    return {"dtype": name, "shape": list(arr.shape),
            "data": base64.b64encode(packed.tobytes()).decode("ascii")}


def decode_array(obj) -> np.ndarray:
    try:
        dtype = _DTYPES[obj["dtype"]]
        shape = tuple(int(s) for s in obj["shape"])
        raw = base64.b64decode(obj["data"], validate=True)
        arr = np.frombuffer(raw, dtype=dtype).reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"corrupt array payload: {exc}") from exc
    return arr.astype(obj["dtype"])


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_lines(path, header: dict, records) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(_dumps(header) + "\n")
        for record in records:
            fh.write(_dumps(record) + "\n")


def _read_lines(path, expected_format: str):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("empty dataset file", line=1)
    try:
        header = json.loads(lines[0])
    except ValueError as exc:
        raise DatasetFormatError(f"bad header: {exc}", line=1) from exc
    if header.get("format") != expected_format:
        raise DatasetFormatError(
            f"format {header.get('format')!r} != {expected_format!r}",
            line=1)
    if header.get("version") != VERSION:
        raise DatasetFormatError(
            f"unsupported version {header.get('version')!r}", line=1)
    records = []
    for k, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            records.append((k, json.loads(line)))
        except ValueError as exc:
            raise DatasetFormatError(f"bad record: {exc}", line=k) from exc
    return header, records


# Slip episode datasets -----------------------------------------------------

def _episode_record(episode: Episode) -> dict:
    ts = np.array([f.timestamp for f in episode.tactile_seq])
    wts = np.array([w.timestamp for w in episode.wrench_seq])
    if not np.array_equal(ts, wts):
        raise SlipGraspError("tactile and wrench timestamps disagree")
    grasp = episode.grasp
    return {
        "object": episode.object_name,
        "label": int(episode.label),
        "grasp": {"contact_a": list(map(float, grasp.contact_a)),
                  "contact_b": list(map(float, grasp.contact_b)),
                  "depth_z": float(grasp.depth_z),
                  "grip_force": float(grasp.grip_force),
                  "friction": float(grasp.friction_coefficient)},
        "com_offset_d": float(episode.com_offset_d),
        "lift_height": float(episode.lift_height),
        "sample_rate_hz": float(episode.sample_rate),
        "timestamps": encode_array(ts),
        "tactile": encode_array(episode.tactile_array()),
        "wrench": encode_array(episode.wrench_array()),
    }


def _episode_from_record(record: dict) -> Episode:
    g = record["grasp"]
    grasp = grasp_from_contacts(g["contact_a"], g["contact_b"],
                                g["depth_z"], g["grip_force"],
                                g["friction"])
    ts = decode_array(record["timestamps"])
    tactile = decode_array(record["tactile"])
    wrench = decode_array(record["wrench"])
    if not (len(ts) == len(tactile) == len(wrench)):
        raise DatasetFormatError("sequence lengths disagree")
    frames = tuple(TactileFrame(row.reshape(2, 4, 4), float(t))
                   for row, t in zip(tactile, ts))
    wrenches = tuple(WrenchSample(row[:3], row[3:], float(t))
                     for row, t in zip(wrench, ts))
    return Episode(frames, wrenches, SlipLabel(record["label"]),
                   record["object"], grasp, record["com_offset_d"],
                   record["lift_height"], record["sample_rate_hz"])


def write_slip_dataset(path, episodes, extra_header=None) -> None:
    header = {"format": SLIP_FORMAT, "version": VERSION,
              "record_count": len(episodes),
              "tactile_features": 32, "wrench_axes": list(WRENCH_AXES)}
    if extra_header:
        header.update(extra_header)
    _write_lines(path, header, (_episode_record(e) for e in episodes))


def read_slip_dataset(path):
    """-> (episodes, header). Schema violations name the failing line."""
    header, records = _read_lines(path, SLIP_FORMAT)
    episodes = []
    for line_no, record in records:
        try:
            episodes.append(_episode_from_record(record))
        except DatasetFormatError as exc:
            raise DatasetFormatError(exc.args[0], line=line_no) from exc
        except (KeyError, TypeError, ValueError, SlipGraspError) as exc:
            raise DatasetFormatError(f"invalid episode record: {exc}",
                                     line=line_no) from exc
    if header["record_count"] != len(episodes):
        raise DatasetFormatError(
            f"header promises {header['record_count']} records, "
            f"found {len(episodes)}")
    return episodes, header


# Regrasp sample datasets ---------------------------------------------------

def _sample_record(sample: RegraspSample) -> dict:
    return {"object": sample.object_name, "mu": float(sample.mu),
            "force_delta": float(sample.force_delta),
            "label": int(sample.label),
            "tactile": encode_array(sample.tactile),
            "wrench": encode_array(sample.wrench)}


def write_regrasp_dataset(path, samples, extra_header=None) -> None:
    header = {"format": REGRASP_FORMAT, "version": VERSION,
              "record_count": len(samples),
              "tactile_features": 32, "wrench_axes": list(WRENCH_AXES)}
    if extra_header:
        header.update(extra_header)
    _write_lines(path, header, (_sample_record(s) for s in samples))


def read_regrasp_dataset(path):
    header, records = _read_lines(path, REGRASP_FORMAT)
    samples = []
    for line_no, record in records:
        try:
            samples.append(RegraspSample(
                decode_array(record["tactile"]),
                decode_array(record["wrench"]), record["mu"],
                record["force_delta"], record["label"], record["object"]))
        except DatasetFormatError as exc:
            raise DatasetFormatError(exc.args[0], line=line_no) from exc
        except (KeyError, TypeError, ValueError, SlipGraspError) as exc:
            raise DatasetFormatError(f"invalid sample record: {exc}",
                                     line=line_no) from exc
    if header["record_count"] != len(samples):
        raise DatasetFormatError(
            f"header promises {header['record_count']} records, "
            f"found {len(samples)}")
    return samples, header


# Model files ---------------------------------------------------------------

def save_model(path, kind: str, arrays: dict, meta: dict) -> None:
    doc = {"format": MODEL_FORMAT, "version": VERSION, "kind": kind,
           "meta": meta,
           "arrays": {k: encode_array(v) for k, v in arrays.items()}}
    with open(path, "w", newline="\n") as fh:
        fh.write(_dumps(doc) + "\n")


def load_model(path, expected_kind=None):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except ValueError as exc:
            raise DatasetFormatError(f"bad model file: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != VERSION:
        raise DatasetFormatError("not a recognized model file")
    if expected_kind is not None and doc.get("kind") != expected_kind:
        raise DatasetFormatError(
            f"model kind {doc.get('kind')!r} != {expected_kind!r}")
    arrays = {k: decode_array(v) for k, v in doc["arrays"].items()}
    return doc["kind"], arrays, doc["meta"]


def _pack_standardizer(std: FeatureStandardizer, prefix: str,
                       arrays: dict) -> None:
    arrays[f"{prefix}.mean"] = std.stats_.mean
    arrays[f"{prefix}.std"] = std.stats_.std


def _unpack_standardizer(prefix: str, arrays: dict) -> FeatureStandardizer:
    std = FeatureStandardizer()
    std.stats_ = StandardizationStats(arrays[f"{prefix}.mean"],
                                      arrays[f"{prefix}.std"])
    std.n_features_in_ = std.stats_.mean.size
    return std


def save_detector(path, detector: SlipDetector) -> None:
    if not hasattr(detector, "model_"):
        raise SlipGraspError("cannot save an unfitted detector")
    meta = {"params": detector.get_params()}
    arrays = {}
    if detector.backend == "lstm":
        model = detector.model_
        meta["n_features_in"] = model.n_features_in_
        arrays["classes"] = model.classes_.astype(np.int64)
        _pack_standardizer(model.standardizer_, "std", arrays)
        for key, value in model.params_.items():
            arrays[f"net.{key}"] = value
    else:
        model = detector.model_
        meta["gamma_"] = model.gamma_
        meta["pairs"] = [{"class_pos": m.class_pos,
                          "class_neg": m.class_neg,
                          "bias": float(m.bias),
                          "converged": bool(m.converged)}
                         for m in model.pair_models_]
        meta["converged_"] = bool(model.converged_)
        arrays["classes"] = model.classes_.astype(np.int64)
        _pack_standardizer(detector.standardizer_, "std", arrays)
        for k, m in enumerate(model.pair_models_):
            arrays[f"pair{k}.sv"] = m.support_vectors
            arrays[f"pair{k}.w"] = m.dual_weights
    save_model(path, "slip-detector", arrays, meta)


def load_detector(path) -> SlipDetector:
    _, arrays, meta = load_model(path, expected_kind="slip-detector")
    detector = SlipDetector(**meta["params"])
    if detector.backend == "lstm":
        model = SequenceLSTMClassifier(
            n_hidden=detector.lstm_hidden,
            fc_hidden=detector.lstm_fc_hidden, t_max=detector.t_max,
            epochs=detector.epochs, patience=detector.patience,
            batch_size=detector.batch_size,
            learning_rate=detector.learning_rate,
            random_state=detector.random_state)
        model.classes_ = arrays["classes"]
        model.standardizer_ = _unpack_standardizer("std", arrays)
        model.params_ = {k[len("net."):]: v for k, v in arrays.items()
                         if k.startswith("net.")}
        model.n_features_in_ = int(meta["n_features_in"])
        detector.model_ = model
        detector.standardizer_ = None
    else:
        kernel = "linear" if detector.backend == "linear_svm" else "rbf"
        c_value = detector.C if detector.C is not None else (
            1.0 if kernel == "linear" else 1e3)
        model = PairwiseSVC(kernel=kernel, C=c_value, gamma=detector.gamma)
        model.classes_ = arrays["classes"]
        model.gamma_ = float(meta["gamma_"])
        model.pair_models_ = [
            SvmPairModel(class_pos=p["class_pos"], class_neg=p["class_neg"],
                         support_vectors=arrays[f"pair{k}.sv"],
                         dual_weights=arrays[f"pair{k}.w"],
                         bias=p["bias"], converged=p["converged"])
            for k, p in enumerate(meta["pairs"])]
        model.converged_ = bool(meta["converged_"])
        detector.model_ = model
        detector.standardizer_ = _unpack_standardizer("std", arrays)
    return detector


def save_planner(path, planner: RegraspRobustnessNet) -> None:
    if not hasattr(planner, "params_"):
        raise SlipGraspError("cannot save an unfitted planner")
    meta = {"params": planner.get_params()}
    arrays = {f"net.{k}": v for k, v in planner.params_.items()}
    if planner.tactile_std_ is not None:
        _pack_standardizer(planner.tactile_std_, "tstd", arrays)
    if planner.wrench_std_ is not None:
        _pack_standardizer(planner.wrench_std_, "wstd", arrays)
    save_model(path, "regrasp-planner", arrays, meta)


def load_planner(path) -> RegraspRobustnessNet:
    _, arrays, meta = load_model(path, expected_kind="regrasp-planner")
    planner = RegraspRobustnessNet(**meta["params"])
    planner.params_ = {k[len("net."):]: v for k, v in arrays.items()
                       if k.startswith("net.")}
    planner.tactile_std_ = (_unpack_standardizer("tstd", arrays)
                            if "tstd.mean" in arrays else None)
    planner.wrench_std_ = (_unpack_standardizer("wstd", arrays)
                           if "wstd.mean" in arrays else None)
    return planner
