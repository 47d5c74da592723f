"""
Run configuration.

A run is described by a sectioned key=value file (INI syntax). Values are
merged onto DEFAULT_CONFIG and coerced to the type of the default; list
values are comma-separated. The only environment variable read is
UCAN_OUT_DIR, which overrides [run] out_dir.
"""

import configparser
import os
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from src.data.splits import DEFAULT_FRACTIONS, validate_fractions
from src.exceptions import ConfigError
from src.logger import LOG_MODES, get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]

OUT_DIR_ENV = "UCAN_OUT_DIR"
CONFIG_FILE_NAME = "run.ini"
LOG_FILE_NAME = "ucan.log"

DATA_SOURCES = ("synthetic", "blobs", "cifar10")
ARCHITECTURES = ("smallcnn", "mlp")
DOWNSAMPLE_MODES = ("avg", "max")
SELECTION_POLICIES = ("top", "offset")
POSITIVE_MODES = ("successful", "all")

DEFAULT_CONFIG: Dict[str, Dict[str, Any]] = {
    "run": {
        "seed": 0,
        "out_dir": "out",
    },
    "logging": {
        "mode": "info",
        "file": True,  # <out>/logs/ucan.log
    },
    "data": {
        "source": "synthetic",
        "classes": 4,
        "per_class": 100,
        "image_size": 16,
        "channels": 3,
        "dim": 8,  # blobs only
        "separation": 1.0,
        "cifar_path": "",
        "cifar_classes": (),
    },
    "split": dict(zip(("train", "val", "calib", "test"), DEFAULT_FRACTIONS)),
    "backbone": {
        "arch": "smallcnn",
        "widths": (8, 16, 32),
        "downsample": "avg",
        "epochs": 30,
        "lr": 0.05,
        "momentum": 0.9,
        "batch_size": 32,
        "noise_augment": 0.0,
    },
    "aux": {
        "d_prime": 16,
        "scale": 64.0,
        "margin": 0.5,
        "epochs": 20,
        "lr": 0.05,
        "momentum": 0.9,
        "batch_size": 32,
    },
    "selection": {
        "policy": "top",
        "value": 2,
    },
    "attack": {
        "names": ("pgd", "cw", "ada_dknn"),
        "epsilons": (8 / 255, 16 / 255),
        "steps": 200,
        "ada_steps": 400,
        "ada_m": 100,
        "ada_refresh": 50,
        "ada_weight": 1.0,
        "cw_c": 0.5,
        "cw_kappa": 0.0,
        "cw_lr": 1e-3,
        "chunk_size": 64,
        "workers": 1,
    },
    "detector": {
        "kinds": ("dknn", "dnr", "sad"),
        "sources": ("raw", "ucan"),
        "k": 5,
        "svm_c": 1.0,
        "svm_tol": 1e-3,
        "svm_max_iter": 100000,
        "smoothed": True,
    },
    "eval": {
        "seeds": (0, 1, 2),
        "positives": "successful",
        "test_limit": 64,
        "workers": 1,
        "curve_grid": 101,
    },
    "bench": {
        "batch": 8,
        "iterations": 10,
    },
}

# Element types for list values whose default may be empty
LIST_ITEM_TYPES = {
    ("data", "cifar_classes"): int,
    ("backbone", "widths"): int,
    ("attack", "names"): str,
    ("attack", "epsilons"): float,
    ("detector", "kinds"): str,
    ("detector", "sources"): str,
    ("eval", "seeds"): int,
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _freeze(values: Dict[str, Dict[str, Any]]) -> Mapping[str, Mapping[str, Any]]:
    return MappingProxyType({section: MappingProxyType(dict(keys)) for section, keys in values.items()})


@dataclass(frozen=True)
class RunConfig:
    """Validated, read-only run configuration."""

    values: Mapping[str, Mapping[str, Any]]
    source: Optional[str] = None

    def __getitem__(self, section: str) -> Mapping[str, Any]:
        return self.values[section]

    def get(self, section: str, key: str) -> Any:
        return self.values[section][key]

    @property
    def seed(self) -> int:
        return self.get("run", "seed")

    @property
    def out_dir(self) -> Path:
        return Path(self.get("run", "out_dir"))

    @property
    def fractions(self) -> Tuple[float, float, float, float]:
        split = self.values["split"]
        return split["train"], split["val"], split["calib"], split["test"]

    @property
    def log_file(self) -> Optional[Path]:
        return self.out_dir / "logs" / LOG_FILE_NAME if self.get("logging", "file") else None

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {section: dict(keys) for section, keys in self.values.items()}

    def with_overrides(self, seed: Optional[int] = None, out_dir: Optional[PathLike] = None) -> "RunConfig":
        values = self.to_dict()
        if seed is not None:
            values["run"]["seed"] = int(seed)
        if out_dir is not None:
            values["run"]["out_dir"] = str(out_dir)
        return build_config(values, source=self.source)


# ============================================================
# Parsing
# ============================================================

def _coerce_scalar(raw: str, kind: type, where: str) -> Any:
    text = raw.strip()
    try:
        if kind is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(f"not a boolean: '{text}'")
        if kind is int:
            return int(text)
        if kind is float:
            if "/" in text:
                numerator, denominator = text.split("/", 1)
                return float(numerator) / float(denominator)
            return float(text)
    except ValueError as e:
        raise ConfigError(f"Invalid value for {where}: {e}", details={"value": raw}) from e
    return text


def coerce_value(section: str, key: str, raw: Any) -> Any:
    """Parse a raw INI string (or pass through a typed value) as the default's type."""
    default = DEFAULT_CONFIG[section][key]
    where = f"[{section}] {key}"
    if isinstance(default, tuple):
        item_type = LIST_ITEM_TYPES.get((section, key), str)
        if isinstance(raw, (list, tuple)):
            items = [str(item) for item in raw]
        else:
            items = [item for item in str(raw).split(",") if item.strip()]
        return tuple(_coerce_scalar(item, item_type, where) for item in items)
    if not isinstance(raw, str):
        raw = str(raw).lower() if isinstance(raw, bool) else str(raw)
    return _coerce_scalar(raw, type(default), where)


def _require_choice(section: str, key: str, value: Any, choices: Tuple[str, ...]) -> None:
    values = value if isinstance(value, tuple) else (value,)
    for item in values:
        if item not in choices:
            raise ConfigError(f"[{section}] {key} must be one of {choices}, got '{item}'")


def _require_positive(section: str, key: str, value: Any, allow_zero: bool = False) -> None:
    values = value if isinstance(value, tuple) else (value,)
    for item in values:
        if item < 0 or (item == 0 and not allow_zero):
            raise ConfigError(f"[{section}] {key} must be {'non-negative' if allow_zero else 'positive'}, got {item}")


def validate(values: Dict[str, Dict[str, Any]]) -> None:
    from src.attacks import ATTACK_NAMES
    from src.detectors import DETECTOR_KINDS, SOURCE_KINDS

    _require_choice("logging", "mode", values["logging"]["mode"], LOG_MODES)
    _require_choice("data", "source", values["data"]["source"], DATA_SOURCES)
    _require_choice("backbone", "arch", values["backbone"]["arch"], ARCHITECTURES)
    _require_choice("backbone", "downsample", values["backbone"]["downsample"], DOWNSAMPLE_MODES)
    _require_choice("selection", "policy", values["selection"]["policy"], SELECTION_POLICIES)
    _require_choice("attack", "names", values["attack"]["names"], ATTACK_NAMES)
    _require_choice("detector", "kinds", values["detector"]["kinds"], DETECTOR_KINDS)
    _require_choice("detector", "sources", values["detector"]["sources"], SOURCE_KINDS)
    _require_choice("eval", "positives", values["eval"]["positives"], POSITIVE_MODES)

    for key in ("classes", "per_class", "image_size", "channels", "dim"):
        _require_positive("data", key, values["data"][key])
    for section in ("backbone", "aux"):
        _require_positive(section, "epochs", values[section]["epochs"], allow_zero=True)
        _require_positive(section, "lr", values[section]["lr"])
        _require_positive(section, "batch_size", values[section]["batch_size"])
    _require_positive("backbone", "widths", values["backbone"]["widths"])
    _require_positive("aux", "d_prime", values["aux"]["d_prime"])
    _require_positive("selection", "value", values["selection"]["value"])
    _require_positive("attack", "epsilons", values["attack"]["epsilons"], allow_zero=True)
    _require_positive("attack", "chunk_size", values["attack"]["chunk_size"])
    _require_positive("attack", "workers", values["attack"]["workers"])
    _require_positive("detector", "k", values["detector"]["k"])
    _require_positive("eval", "test_limit", values["eval"]["test_limit"], allow_zero=True)
    _require_positive("eval", "workers", values["eval"]["workers"])
    _require_positive("eval", "curve_grid", values["eval"]["curve_grid"])
    _require_positive("bench", "batch", values["bench"]["batch"])
    _require_positive("bench", "iterations", values["bench"]["iterations"])
    if not values["eval"]["seeds"]:
        raise ConfigError("[eval] seeds must name at least one seed")
    if values["data"]["source"] == "cifar10" and not values["data"]["cifar_path"]:
        raise ConfigError("[data] cifar_path is required when source = cifar10")
    if values["data"]["source"] == "blobs" and values["backbone"]["arch"] != "mlp":
        raise ConfigError("[data] source = blobs yields flat vectors; set [backbone] arch = mlp")
    if values["eval"]["curve_grid"] < 2:
        raise ConfigError("[eval] curve_grid needs at least 2 points")
    validate_fractions(tuple(values["split"][name] for name in ("train", "val", "calib", "test")))


def build_config(overrides: Optional[Dict[str, Dict[str, Any]]] = None, source: Optional[str] = None) -> RunConfig:
    """Merge overrides onto the defaults, coerce, validate and freeze."""
    values = {section: dict(keys) for section, keys in DEFAULT_CONFIG.items()}
    for section, keys in (overrides or {}).items():
        if section not in DEFAULT_CONFIG:
            raise ConfigError(f"Unknown config section [{section}]", details={"known": sorted(DEFAULT_CONFIG)})
        for key, raw in keys.items():
            if key not in DEFAULT_CONFIG[section]:
                raise ConfigError(f"Unknown config key [{section}] {key}",
                                  details={"known": sorted(DEFAULT_CONFIG[section])})
            values[section][key] = coerce_value(section, key, raw)
    validate(values)
    return RunConfig(values=_freeze(values), source=source)


def load_config(path: Optional[PathLike] = None, env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Read an INI file (or only the defaults when path is None) and apply UCAN_OUT_DIR."""
    overrides: Dict[str, Dict[str, Any]] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as e:
            raise ConfigError(f"Cannot parse config file {path}: {e}") from e
        overrides = {section: dict(parser.items(section)) for section in parser.sections()}
        logger.debug("Loaded config file %s", path)

    env = os.environ if env is None else env
    if env.get(OUT_DIR_ENV):
        overrides.setdefault("run", {})["out_dir"] = env[OUT_DIR_ENV]
        logger.debug("Output directory overridden by %s", OUT_DIR_ENV)
    return build_config(overrides, source=str(path) if path is not None else None)


def format_value(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_config(config: RunConfig, path: Optional[PathLike] = None) -> Path:
    """Write the effective configuration; defaults to <out>/run.ini."""
    path = Path(path) if path is not None else config.out_dir / CONFIG_FILE_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    parser = configparser.ConfigParser(interpolation=None)
    for section, keys in config.values.items():
        parser[section] = {key: format_value(value) for key, value in keys.items()}
    temp = path.with_name(f".{path.name}.tmp")
    with open(temp, "w", encoding="utf-8") as f:
        parser.write(f)
    temp.replace(path)
    logger.info("Configuration saved to %s", path)
    return path
