"""Command-line front end.

Subcommands cover the whole pipeline: synthesize datasets, train the
detectors and planners, cross-validate, benchmark the policies, and
assemble the report. Every command is deterministic for a fixed config
and seed; rerunning one overwrites its outputs with identical bytes.

Exit codes group failures by category: 2 for configuration problems,
3 for dataset or model file problems, 4 for domain errors raised while
simulating or training, 1 for anything unexpected.
"""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import datasets, harness
from .config import ExperimentConfig, default_config, load_config
from .errors import ConfigError, DatasetFormatError, SlipGraspError

log = logging.getLogger(__name__)

EXIT_CONFIG, EXIT_DATA, EXIT_DOMAIN, EXIT_BUG = 2, 3, 4, 1

SLIP_DATASET = "slip_dataset.jsonl"
REGRASP_DATASET = "regrasp_dataset.jsonl"
MODELS_DIR = "models"


def _load_setup(args) -> tuple:
    """(config, out_dir) with --config/--seed/--out applied."""
    config = (load_config(args.config) if args.config is not None
              else default_config())
    if args.seed is not None:
        config = dataclasses.replace(
            config, seeds=dataclasses.replace(config.seeds,
                                              master=args.seed))
    out_dir = Path(args.out if args.out is not None else config.output.dir)
    return config, out_dir


def _need_file(path: Path, hint: str) -> Path:
    if not path.exists():
        raise DatasetFormatError(f"{path} not found; run `{hint}` first")
    return path


def _split_arg(value, allowed, what):
    if value is None:
        return None
    chosen = tuple(v.strip() for v in value.split(",") if v.strip())
    for v in chosen:
        if v not in allowed:
            raise ConfigError(f"unknown {what} {v!r}; choose from "
                              f"{', '.join(allowed)}")
    return chosen


def cmd_synth_slip(args) -> None:
    config, out_dir = _load_setup(args)
    episodes, manifest = harness.collect_slip_dataset(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / SLIP_DATASET
    datasets.write_slip_dataset(path, episodes, extra_header=manifest)
    counts = manifest["class_counts"]
    print(f"wrote {path}: {len(episodes)} episodes "
          f"({', '.join(f'{k}={v}' for k, v in sorted(counts.items()))})")


def cmd_synth_regrasp(args) -> None:
    config, out_dir = _load_setup(args)
    samples, manifest = harness.collect_regrasp_dataset(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / REGRASP_DATASET
    datasets.write_regrasp_dataset(path, samples, extra_header=manifest)
    print(f"wrote {path}: {len(samples)} samples, "
          f"positive fraction {manifest['positive_fraction']:.3f}")


def cmd_train_slip(args) -> None:
    config, out_dir = _load_setup(args)
    backends = _split_arg(args.backends, harness.SVM_BACKENDS + ("lstm",),
                          "backend")
    episodes, _ = datasets.read_slip_dataset(
        _need_file(out_dir / SLIP_DATASET, "slipgrasp synth-slip"))
    models_dir = out_dir / MODELS_DIR
    models = harness.train_slip_models(config, episodes,
                                       out_dir=models_dir,
                                       backends=backends)
    print(f"trained {len(models)} slip detectors -> {models_dir}")


def cmd_train_regrasp(args) -> None:
    config, out_dir = _load_setup(args)
    samples, _ = datasets.read_regrasp_dataset(
        _need_file(out_dir / REGRASP_DATASET, "slipgrasp synth-regrasp"))
    models_dir = out_dir / MODELS_DIR
    models = harness.train_regrasp_models(config, samples,
                                          out_dir=models_dir)
    print(f"trained {len(models)} regrasp planners -> {models_dir}")


def cmd_eval(args) -> None:
    config, out_dir = _load_setup(args)
    backends = _split_arg(args.backends, harness.SVM_BACKENDS + ("lstm",),
                          "backend")
    episodes, _ = datasets.read_slip_dataset(
        _need_file(out_dir / SLIP_DATASET, "slipgrasp synth-slip"))
    samples, _ = datasets.read_regrasp_dataset(
        _need_file(out_dir / REGRASP_DATASET, "slipgrasp synth-regrasp"))
    summary = harness.evaluate_all(config, episodes, samples, out_dir,
                                   backends=backends)
    for (backend, feats), acc in sorted(summary["slip"].items()):
        print(f"slip {backend:>10} {feats:<14} cv accuracy {acc:.4f}")
    for feats, acc in sorted(summary["regrasp"].items()):
        print(f"regrasp {feats:<14} val accuracy {acc:.4f}")


def cmd_bench_policies(args) -> None:
    config, out_dir = _load_setup(args)
    planner_path = out_dir / MODELS_DIR / harness._model_name(
        "regrasp", None, "tactile+torque")
    if planner_path.exists():
        planner = datasets.load_planner(planner_path)
    else:
        samples, _ = datasets.read_regrasp_dataset(
            _need_file(out_dir / REGRASP_DATASET,
                       "slipgrasp synth-regrasp"))
        planner = harness.train_regrasp_models(
            config, samples, features=("tactile+torque",))["tactile+torque"]
    _, means = harness.bench_policies(config, planner, out_dir=out_dir)
    for name, rate in means.items():
        print(f"policy {name:<12} mean success {rate:.4f}")


def cmd_report(args) -> None:
    _, out_dir = _load_setup(args)
    target = harness.write_summary(out_dir)
    print(f"wrote {target}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slipgrasp",
        description="Synthetic slip-detection and regrasp experiments.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, backends=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment config file (YAML)")
        p.add_argument("--seed", type=int,
                       help="override the master seed")
        p.add_argument("--out", help="output directory "
                                     "(default from config)")
        if backends:
            p.add_argument("--backends",
                           help="comma-separated detector backends "
                                "(default: all)")
        p.set_defaults(func=func)
        return p

    add("synth-slip", cmd_synth_slip,
        "synthesize the slip-episode dataset")
    add("synth-regrasp", cmd_synth_regrasp,
        "synthesize the regrasp-outcome dataset")
    add("train-slip", cmd_train_slip,
        "train slip detectors on the synthesized episodes", backends=True)
    add("train-regrasp", cmd_train_regrasp,
        "train regrasp planners under each input ablation")
    add("eval", cmd_eval,
        "cross-validate detectors and score planner ablations",
        backends=True)
    add("bench-policies", cmd_bench_policies,
        "run the two-try policy benchmark on held-out objects")
    add("report", cmd_report,
        "assemble CSV outputs into a plain-text summary")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SlipGraspError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except Exception as exc:                       # pragma: no cover
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_BUG
    return 0


if __name__ == "__main__":
    sys.exit(main())
