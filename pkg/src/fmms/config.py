"""Experiment configuration: YAML file with sections data/model/train/attack/search/experiment."""

import os
from dataclasses import asdict, dataclass, field, fields

import yaml

from .attacks import BASELINES, Budgets, ImageAttackBudget, TextAttackBudget
from .augment import ScaleSet
from .data import DataConfig
from .errors import ConfigError, FmmsError, IoError
from .models import KINDS, ModelConfig, TrainConfig
from .search import STRATEGIES, SearchConfig

CONFIG_ENV = "FMMS_CONFIG"
SECTIONS = ("data", "model", "train", "attack", "search", "experiment")

FMMS = "fmms"
METHODS = (FMMS,) + BASELINES
PER_SUBTASK = "per_subtask"


@dataclass(frozen=True)
class AttackSettings:
    epsilon_v: float = 2 / 255
    alpha: float = 0.5 / 255
    steps: int = 10
    epsilon_t: int = 1
    candidates_k: int = 10
    scales: tuple = ScaleSet().scales
    use_mismatched: bool = True

    def budgets(self):
        return Budgets(
            image=ImageAttackBudget(self.epsilon_v, self.alpha, self.steps),
            text=TextAttackBudget(self.epsilon_t, self.candidates_k),
        )

    def scale_set(self):
        return ScaleSet(tuple(self.scales))


@dataclass(frozen=True)
class SearchSettings:
    n_tr: int = 10
    n_ir: int = 5
    # "per_subtask" measures TR with an image-only stop and IR with a text-only stop
    stop_condition: str = PER_SUBTASK
    warm_start: bool = True
    regenerate_captions: bool = True
    text_seed: str = "original"

    def search_config(self, strategy, rounds, stop_condition):
        return SearchConfig(
            strategy=strategy,
            n_tr=self.n_tr,
            n_ir=self.n_ir,
            rounds=rounds,
            stop_condition=stop_condition,
            warm_start=self.warm_start,
            regenerate_captions=self.regenerate_captions,
            text_seed=self.text_seed,
        )


@dataclass(frozen=True)
class ExperimentSettings:
    seeds: tuple = (0, 1, 2, 3, 4)
    surrogates: tuple = KINDS
    targets: tuple = KINDS
    methods: tuple = METHODS
    strategies: tuple = STRATEGIES
    rounds: tuple = (10,)
    # number of leading pairs to attack; null = whole gallery
    max_pairs: int | None = None
    workdir: str = "runs"
    workers: int | None = None


@dataclass(frozen=True)
class Config:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: AttackSettings = field(default_factory=AttackSettings)
    search: SearchSettings = field(default_factory=SearchSettings)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)

    def to_dict(self):
        return {name: _plain(asdict(getattr(self, name))) for name in SECTIONS}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_SECTION_TYPES = {
    "data": DataConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "attack": AttackSettings,
    "search": SearchSettings,
    "experiment": ExperimentSettings,
}

_REQUIRED = {"experiment"}


def _build_section(name, raw):
    cls = _SECTION_TYPES[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(name, f"config section '{name}' must be a mapping")
    known = {f.name: f for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{name}.{key}", f"unknown config key '{name}.{key}'")
    values = {}
    for key, value in raw.items():
        default = getattr(cls(), key)
        if isinstance(default, tuple) and isinstance(value, list):
            value = tuple(value)
        values[key] = value
    try:
        return cls(**values)
    except (FmmsError, TypeError, ValueError) as exc:
        raise ConfigError(name, f"invalid config section '{name}': {exc}") from exc


def config_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config file must hold a mapping of sections")
    for key in raw:
        if key not in SECTIONS:
            raise ConfigError(key, f"unknown config section '{key}'")
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(key, f"missing required config key '{key}'")
    cfg = Config(**{name: _build_section(name, raw.get(name)) for name in SECTIONS})
    validate(cfg)
    return cfg


def validate(cfg):
    ex = cfg.experiment
    for m in ex.methods:
        if m not in METHODS:
            raise ConfigError("experiment.methods", f"unknown method '{m}' in experiment.methods")
    for s in ex.strategies:
        if s not in STRATEGIES:
            raise ConfigError("experiment.strategies", f"unknown strategy '{s}' in experiment.strategies")
    for name in tuple(ex.surrogates) + tuple(ex.targets):
        if name not in KINDS:
            raise ConfigError("experiment.surrogates", f"unknown model '{name}' (expected one of {KINDS})")
    if not ex.seeds:
        raise ConfigError("experiment.seeds", "experiment.seeds must not be empty")
    if any(r < 1 for r in ex.rounds):
        raise ConfigError("experiment.rounds", "experiment.rounds must be positive")
    try:
        cfg.attack.budgets()
        cfg.attack.scale_set()
        cfg.data.validate()
    except FmmsError as exc:
        raise ConfigError("attack", f"invalid attack/data settings: {exc}") from exc
    stop = cfg.search.stop_condition
    if stop != PER_SUBTASK:
        try:
            cfg.search.search_config("topn", 1, stop)
        except FmmsError as exc:
            raise ConfigError("search.stop_condition", str(exc)) from exc


def load_config(path=None):
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        raise ConfigError("<path>", f"no config path given and ${CONFIG_ENV} is unset")
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("<root>", f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(raw if raw is not None else {})
