"""INI-style configuration covering data paths, model shape, and training.

Sections map onto the dataclasses: [paths], [model], [train], [synth],
[service]. Every key must match a known field; unknown sections or keys
raise ConfigError rather than being ignored, so typos cannot silently
fall back to defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .model import ModelConfig
from .synthetic import SyntheticSpec
from .trainer import TrainConfig


@dataclass
class PathsConfig:
    data: str = ""
    db_dir: str = ""
    cache_dir: str = ""
    checkpoint: str = ""
    out_dir: str = "."
    val_list: str = ""  # file of dialogue ids for the validation split
    test_list: str = ""


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    static_dir: str = ""
    idle_minutes: float = 30.0


@dataclass
class DataConfig:
    min_count: int = 1  # vocabulary count threshold
    val_fraction: float = 0.1  # used when no val_list file is given


@dataclass
class AppConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = None
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def __post_init__(self):
        if self.train is None:
            self.train = TrainConfig(model=self.model)
        else:
            self.train.model = self.model


_TRAIN_KEYS = ("epochs", "batch_size", "peak_lr", "warmup_steps")


def _coerce(raw: str, target_type, section: str, key: str):
    try:
        if target_type is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return target_type(raw)
    except ValueError as e:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {target_type.__name__}") from e


def _fill(obj, section: str, items: dict):
    known = {f.name for f in fields(obj)}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        current = getattr(obj, key)
        target_type = type(current) if current is not None else str
        setattr(obj, key, _coerce(raw, target_type, section, key))


def parse_config(text: str) -> AppConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from e

    cfg = AppConfig()
    handlers = {
        "paths": cfg.paths,
        "data": cfg.data,
        "model": cfg.model,
        "synth": cfg.synth,
        "service": cfg.service,
    }
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "train":
            for key, raw in items.items():
                if key not in _TRAIN_KEYS:
                    raise ConfigError(f"unknown key {key!r} in section [train]")
                target_type = type(getattr(cfg.train, key))
                setattr(cfg.train, key, _coerce(raw, target_type, section, key))
        elif section in handlers:
            target = handlers[section]
            _fill(target, section, items)
        else:
            raise ConfigError(f"unknown config section [{section}]")

    # model fields are validated on construction; re-validate after mutation
    cfg.model.__post_init__()
    cfg.train.model = cfg.model
    return cfg


def load_config(path: str) -> AppConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text)


def default_config_text() -> str:
    """A complete commented template with every recognized key."""
    return """\
[paths]
data = data/data.json
db_dir = data/db
cache_dir = cache
checkpoint = runs/model.ckpt
out_dir = runs
val_list =
test_list =

[data]
min_count = 1
val_fraction = 0.1

[model]
mode = e2e
d = 256
n_heads = 8
n_slot_blocks = 3
n_domain_blocks = 3
n_gen_blocks = 3
d_rnn = 0
dropout = 0.3
label_smoothing = 0.1
max_value_len = 10
max_res_len = 60
max_positions = 512
context_mode = last-response
beam_size = 5
length_norm = 0.6
act_threshold = 0.5
request_threshold = 0.5
use_act_loss = true
seed = 13

[train]
epochs = 30
batch_size = 32
peak_lr = 0.0001
warmup_steps = 4000

[synth]
n_dialogues = 30
rows_per_domain = 8
multi_domain_every = 3
seed = 7

[service]
host = 127.0.0.1
port = 8080
static_dir =
idle_minutes = 30
"""
