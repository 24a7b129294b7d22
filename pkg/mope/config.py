"""
Run configuration: settings.py defaults, overridden by an INI file
([common] then the command's own section), overridden by command-line flags.
"""

import configparser
import logging
import os
from dataclasses import dataclass, field

from mope import settings
from mope.exceptions import ConfigError

logger = logging.getLogger(__name__)

SNAPSHOT_NAME = "resolved_config.cfg"
COMMON_SECTION = "common"

COMMANDS = (
    "gen-data",
    "train-denoiser",
    "train-gate",
    "train-classifier",
    "finetune-mope",
    "eval",
    "denoise",
    "route",
    "analyze",
)

# key -> default; the default's type decides how file and flag values are parsed
DEFAULTS = {
    "seed": settings.SEED,
    "out_dir": settings.OUT_DIR,
    "weights": "",
    "data_dir": "",
    "num_classes": settings.NUM_CLASSES,
    "image_size": settings.IMAGE_SIZE,
    "samples_per_class": settings.SAMPLES_PER_CLASS,
    "workers": settings.DATA_WORKERS,
    "max_sigma": settings.MAX_SIGMA,
    "lowres_factors": settings.LOWRES_FACTORS,
    "sigma": settings.EVAL_SIGMA,
    "eval_lowres_factor": settings.EVAL_LOWRES_FACTOR,
    "noisy_expert": settings.NOISY_EXPERT,
    "threshold": settings.GATE_THRESHOLD,
    "iterations": 0,
    "lr": 0.0,
    "batch_size": 0,
    "lambda_sim": settings.LAMBDA_SIM,
    "adv_warmup": 0,
    "input_size": settings.ANALYZE_INPUT_SIZE,
    "reference_params_mb": settings.REFERENCE_PARAMS_MB,
    "reference_gflop": settings.REFERENCE_GFLOP,
    "log_every": settings.LOG_EVERY,
}

# Training commands fill iterations / lr / batch_size from their own defaults
COMMAND_DEFAULTS = {
    "train-gate": {
        "iterations": settings.GATE_ITERATIONS,
        "lr": settings.GATE_LR,
        "batch_size": settings.GATE_BATCH_SIZE,
    },
    "train-denoiser": {
        "iterations": settings.DENOISER_ITERATIONS,
        "lr": settings.DENOISER_LR,
        "batch_size": settings.DENOISER_BATCH_SIZE,
        "adv_warmup": settings.DENOISER_ADV_WARMUP,
    },
    "train-classifier": {
        "iterations": settings.CLASSIFIER_ITERATIONS,
        "lr": settings.CLASSIFIER_LR,
        "batch_size": settings.CLASSIFIER_BATCH_SIZE,
    },
    "finetune-mope": {
        "iterations": settings.FINETUNE_ITERATIONS,
        "lr": settings.FINETUNE_LR,
        "batch_size": settings.CLASSIFIER_BATCH_SIZE,
    },
}

NOISY_EXPERT_CHOICES = ("avg", "denoise")


def _parse(key, raw):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            return str(raw).strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, tuple):
            if isinstance(raw, (tuple, list)):
                return tuple(int(v) for v in raw)
            return tuple(int(v) for v in str(raw).replace(" ", "").split(",") if v)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None


def _format(value):
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)
    config_path: str = ""

    def __getattr__(self, name):
        values = self.__dict__.get("values", {})
        if name in values:
            return values[name]
        raise AttributeError(name)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def weights_dir(self):
        return self.values["weights"] or self.values["out_dir"]

    @property
    def dataset_dir(self):
        return self.values["data_dir"] or os.path.join(self.values["out_dir"], "data")

    def write_snapshot(self, directory=None):
        """Write every resolved value, keys sorted, to resolved_config.cfg."""
        directory = directory or self.values["out_dir"]
        os.makedirs(directory, exist_ok=True)
        parser = configparser.ConfigParser()
        parser[self.command] = {key: _format(self.values[key]) for key in sorted(self.values)}
        path = os.path.join(directory, SNAPSHOT_NAME)
        with open(path, "w", encoding="utf-8") as fh:
            parser.write(fh)
        return path


def _read_file(path, command):
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"config file {path} could not be read")
    merged = {}
    for section in (COMMON_SECTION, command):
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise ConfigError(f"{path} [{section}]: unknown key {key!r}")
            merged[key] = _parse(key, raw)
    return merged


def validate(values):
    if values["noisy_expert"] not in NOISY_EXPERT_CHOICES:
        raise ConfigError(f"noisy_expert must be one of {NOISY_EXPERT_CHOICES}, got {values['noisy_expert']!r}")
    if not 0 < values["threshold"] < 1:
        raise ConfigError(f"threshold must lie in (0, 1), got {values['threshold']}")
    if not 0 < values["max_sigma"] <= 1:
        raise ConfigError(f"max_sigma must lie in (0, 1], got {values['max_sigma']}")
    if values["sigma"] < 0:
        raise ConfigError(f"sigma must be >= 0, got {values['sigma']}")
    if any(f < 2 for f in values["lowres_factors"]):
        raise ConfigError(f"lowres_factors must all be >= 2, got {values['lowres_factors']}")
    for key in ("iterations", "batch_size", "workers", "input_size", "adv_warmup"):
        if values[key] < 0:
            raise ConfigError(f"{key} must be >= 0, got {values[key]}")
    if values["lr"] < 0:
        raise ConfigError(f"lr must be >= 0, got {values['lr']}")


def load_config(command, config_path=None, overrides=None, environ=None):
    """Resolve the configuration of one command."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    environ = os.environ if environ is None else environ
    values = dict(DEFAULTS)
    values.update(COMMAND_DEFAULTS.get(command, {}))
    if environ.get(settings.OUT_DIR_ENV):
        values["out_dir"] = environ[settings.OUT_DIR_ENV]
    if config_path:
        values.update(_read_file(config_path, command))
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        if key not in DEFAULTS:
            raise ConfigError(f"unknown option {key!r}")
        values[key] = _parse(key, raw)
    validate(values)
    logger.debug("Resolved %s config: %s", command, values)
    return RunConfig(command, values, config_path or "")
