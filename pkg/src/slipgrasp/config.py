"""Experiment configuration: YAML with nested sections and strict keys.

Every section rejects unknown keys so typos fail loudly instead of
silently running with defaults. Paths are resolved relative to the
config file's directory.
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigError
from .geometry import GRIP_FORCE_RANGE
from .physics import NoiseConfig


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


@dataclass(frozen=True)
class ObjectsConfig:
    library: str | None = None   # None selects the built-in roster


@dataclass(frozen=True)
class SeedsConfig:
    master: int = 42

    def __post_init__(self):
        _require(int(self.master) >= 0, "seeds.master must be >= 0")


@dataclass(frozen=True)
class NoiseSection:
    tactile_sigma: float = 0.02
    force_sigma: float = 0.2
    torque_sigma: float = 0.01
    force_drift: float = 0.02
    torque_drift: float = 0.001
    force_bias: float = 0.0
    torque_bias: float = 0.0

    def __post_init__(self):
        for field in dataclasses.fields(self):
            _require(getattr(self, field.name) >= 0,
                     f"noise.{field.name} must be >= 0")

    def to_noise(self) -> NoiseConfig:
        return NoiseConfig(**dataclasses.asdict(self))


@dataclass(frozen=True)
class SlipDatasetConfig:
    episodes: int = 1039
    lift_height: float = 0.10
    friction_range: tuple = (0.3, 0.7)
    grip_force_range: tuple = (20.0, 100.0)
    table_depth: float = 0.8

    def __post_init__(self):
        _require(self.episodes >= 1, "slip_dataset.episodes must be >= 1")
        _require(self.lift_height > 0,
                 "slip_dataset.lift_height must be positive")
        lo, hi = self.friction_range
        _require(0.0 <= lo <= hi <= 1.0,
                 "slip_dataset.friction_range must be within [0, 1]")
        lo, hi = self.grip_force_range
        _require(GRIP_FORCE_RANGE[0] <= lo <= hi <= GRIP_FORCE_RANGE[1],
                 "slip_dataset.grip_force_range must sit within "
                 f"{GRIP_FORCE_RANGE}")
        _require(self.table_depth > 0,
                 "slip_dataset.table_depth must be positive")


@dataclass(frozen=True)
class RegraspDatasetConfig:
    samples: int = 1347
    force_deltas: tuple = (0.0, 10.0, 20.0)

    def __post_init__(self):
        _require(self.samples >= 1, "regrasp_dataset.samples must be >= 1")
        _require(len(self.force_deltas) >= 1 and
                 all(fd >= 0 for fd in self.force_deltas),
                 "regrasp_dataset.force_deltas must be non-negative")


@dataclass(frozen=True)
class SvmTrainingConfig:
    c_linear: float = 1.0
    c_rbf: float = 1000.0
    gamma: str | float = "scale"
    t_max: int = 100

    def __post_init__(self):
        _require(self.c_linear > 0 and self.c_rbf > 0,
                 "training.slip_svm penalties must be positive")
        _require(self.t_max >= 1, "training.slip_svm.t_max must be >= 1")


@dataclass(frozen=True)
class LstmTrainingConfig:
    hidden: int = 75
    fc_hidden: int = 50
    epochs: int = 100
    patience: int = 10
    batch_size: int = 16
    learning_rate: float = 1e-3
    t_max: int = 100

    def __post_init__(self):
        _require(min(self.hidden, self.fc_hidden, self.epochs,
                     self.patience, self.batch_size, self.t_max) >= 1,
                 "training.slip_lstm sizes must be >= 1")
        _require(self.learning_rate > 0,
                 "training.slip_lstm.learning_rate must be positive")


@dataclass(frozen=True)
class RegraspTrainingConfig:
    tactile_hidden: int = 32
    wrench_hidden: int = 16
    scalar_hidden: int = 16
    fc_hidden: int = 50
    epochs: int = 100
    patience: int = 10
    batch_size: int = 16
    learning_rate: float = 1e-3
    t_max: int = 100

    def __post_init__(self):
        _require(min(self.tactile_hidden, self.wrench_hidden,
                     self.scalar_hidden, self.fc_hidden, self.epochs,
                     self.patience, self.batch_size, self.t_max) >= 1,
                 "training.regrasp sizes must be >= 1")
        _require(self.learning_rate > 0,
                 "training.regrasp.learning_rate must be positive")


@dataclass(frozen=True)
class TrainingConfig:
    slip_svm: SvmTrainingConfig = SvmTrainingConfig()
    slip_lstm: LstmTrainingConfig = LstmTrainingConfig()
    regrasp: RegraspTrainingConfig = RegraspTrainingConfig()


@dataclass(frozen=True)
class EvaluationConfig:
    folds: int = 5
    min_translational_support: int = 30

    def __post_init__(self):
        _require(self.folds >= 2, "evaluation.folds must be >= 2")
        _require(self.min_translational_support >= 0,
                 "evaluation.min_translational_support must be >= 0")


@dataclass(frozen=True)
class BenchmarkConfig:
    grasps_per_object: int = 20
    candidate_poses: int = 10
    plan_candidates: int = 21

    def __post_init__(self):
        _require(min(self.grasps_per_object, self.candidate_poses,
                     self.plan_candidates) >= 1,
                 "benchmark counts must be >= 1")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"


_NESTED = {"slip_svm": SvmTrainingConfig, "slip_lstm": LstmTrainingConfig,
           "regrasp": RegraspTrainingConfig}

_SECTIONS = {
    "objects": ObjectsConfig,
    "seeds": SeedsConfig,
    "noise": NoiseSection,
    "slip_dataset": SlipDatasetConfig,
    "regrasp_dataset": RegraspDatasetConfig,
    "training": TrainingConfig,
    "evaluation": EvaluationConfig,
    "benchmark": BenchmarkConfig,
    "output": OutputConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    objects: ObjectsConfig = ObjectsConfig()
    seeds: SeedsConfig = SeedsConfig()
    noise: NoiseSection = NoiseSection()
    slip_dataset: SlipDatasetConfig = SlipDatasetConfig()
    regrasp_dataset: RegraspDatasetConfig = RegraspDatasetConfig()
    training: TrainingConfig = TrainingConfig()
    evaluation: EvaluationConfig = EvaluationConfig()
    benchmark: BenchmarkConfig = BenchmarkConfig()
    output: OutputConfig = OutputConfig()


def _build(cls, mapping, path: str):
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"section {path!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section {path!r}")
    kwargs = {}
    for field in dataclasses.fields(cls):
        if field.name not in mapping:
            continue
        value = mapping[field.name]
        sub = _NESTED.get(field.name)
        if cls is TrainingConfig and sub is not None:
            value = _build(sub, value, f"{path}.{field.name}")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[field.name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value in section {path!r}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown top-level section(s) {unknown}")
    kwargs = {name: _build(cls, data[name], name)
              for name, cls in _SECTIONS.items() if name in data}
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad YAML in {path}: {exc}") from exc
    config = config_from_dict(data)
    if config.objects.library is not None:
        library = (path.parent / config.objects.library).resolve()
        if not library.is_file():
            raise ConfigError(f"object library not found: {library}")
        config = dataclasses.replace(
            config, objects=ObjectsConfig(library=str(library)))
    return config


def default_config() -> ExperimentConfig:
    return ExperimentConfig()
