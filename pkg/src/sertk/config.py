"""Run configuration: a four-section JSON document with defaults.

Unknown keys are rejected; absent keys take the defaults below. Dotted
``section.key=value`` overrides accept JSON literals (``model.widths.conv=[16,16,32,32]``)
and fall back to plain strings.
"""

from __future__ import annotations

import copy
import json
from typing import Any, Iterable

from sertk.errors import ConfigError
from sertk.features import DspParams
from sertk.nn.model import ModelConfig

DEFAULTS: dict[str, dict[str, Any]] = {
    "data": {
        "roots": [],
        "canonical_rate": 22050,
        "per_gender": True,
    },
    "dsp": {
        "frame_len": 2048,
        "hop": 1024,
        "n_filters": 26,
        "n_mfcc": 13,
        "fmin": 0.0,
        "fmax": None,
    },
    "model": {
        "widths": {"conv": [64, 64, 128, 128], "lstm": [128, 64, 32]},
        "kernel": 5,
        "dropout_cnn": 0.1,
        "dropout_lstm": 0.2,
    },
    "train": {
        "lr": 1e-5,
        "decay": 1e-6,
        "rho": 0.9,
        "epsilon": 1e-8,
        "epochs": 370,
        "batch": 16,
        "seed": 0,
        "split_ratio": 0.8,
    },
}

_NUMBER = (int, float)
_TYPES = {
    "data.roots": list, "data.canonical_rate": int, "data.per_gender": bool,
    "dsp.frame_len": int, "dsp.hop": int, "dsp.n_filters": int, "dsp.n_mfcc": int,
    "dsp.fmin": _NUMBER, "dsp.fmax": _NUMBER + (type(None),),
    "model.widths.conv": list, "model.widths.lstm": list, "model.kernel": int,
    "model.dropout_cnn": _NUMBER, "model.dropout_lstm": _NUMBER,
    "train.lr": _NUMBER, "train.decay": _NUMBER, "train.rho": _NUMBER,
    "train.epsilon": _NUMBER, "train.epochs": int, "train.batch": int,
    "train.seed": int, "train.split_ratio": _NUMBER,
}


def _merge(base: dict, over: dict, prefix: str = "") -> None:
    for key, value in over.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path!r} must be an object")
            _merge(base[key], value, path + ".")
        else:
            base[key] = value


def _validate(cfg: dict) -> None:
    for path, types in _TYPES.items():
        node = cfg
        for part in path.split("."):
            node = node[part]
        if isinstance(node, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
            raise ConfigError(f"{path!r}: expected {types}, got bool")
        if not isinstance(node, types):
            raise ConfigError(f"{path!r}: expected {getattr(types, '__name__', types)}, "
                              f"got {type(node).__name__}")
    t, m = cfg["train"], cfg["model"]
    checks = [
        (t["epochs"] >= 0, "train.epochs"), (t["batch"] >= 1, "train.batch"),
        (0.0 < t["split_ratio"] <= 1.0, "train.split_ratio"), (t["lr"] > 0, "train.lr"),
        (0.0 <= t["rho"] < 1.0, "train.rho"), (t["decay"] >= 0, "train.decay"),
        (0.0 <= m["dropout_cnn"] < 1.0, "model.dropout_cnn"),
        (0.0 <= m["dropout_lstm"] < 1.0, "model.dropout_lstm"),
        (m["kernel"] >= 1 and m["kernel"] % 2 == 1, "model.kernel"),
        (len(m["widths"]["conv"]) >= 1 and all(isinstance(w, int) and w > 0 for w in m["widths"]["conv"]),
         "model.widths.conv"),
        (len(m["widths"]["lstm"]) >= 1 and all(isinstance(w, int) and w > 0 for w in m["widths"]["lstm"]),
         "model.widths.lstm"),
        (cfg["data"]["canonical_rate"] > 0, "data.canonical_rate"),
    ]
    for ok, key in checks:
        if not ok:
            raise ConfigError(f"{key!r}: invalid value")


def make_config(overrides: dict | None = None, sets: Iterable[str] = ()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if overrides:
        if not isinstance(overrides, dict):
            raise ConfigError("config document must be a JSON object")
        _merge(cfg, overrides)
    for item in sets:
        _merge(cfg, parse_set(item))
    _validate(cfg)
    return cfg


def load_config(path=None, sets: Iterable[str] = ()) -> dict:
    doc = None
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return make_config(doc, sets)


def parse_set(item: str) -> dict:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node: dict = {}
    root = node
    parts = key.strip().split(".")
    for part in parts[:-1]:
        node[part] = {}
        node = node[part]
    node[parts[-1]] = value
    return root


def dsp_params(cfg: dict) -> DspParams:
    d = cfg["dsp"]
    return DspParams(frame_len=d["frame_len"], hop=d["hop"], n_filters=d["n_filters"],
                     n_mfcc=d["n_mfcc"], fmin=float(d["fmin"]),
                     fmax=None if d["fmax"] is None else float(d["fmax"]),
                     sample_rate=cfg["data"]["canonical_rate"])


def model_config(cfg: dict, n_channels: int | None = None) -> ModelConfig:
    m = cfg["model"]
    if n_channels is None:
        n_channels = cfg["dsp"]["n_mfcc"] + 8
    return ModelConfig(n_channels=n_channels, conv_widths=m["widths"]["conv"],
                       lstm_widths=m["widths"]["lstm"], kernel=m["kernel"],
                       dropout_cnn=float(m["dropout_cnn"]), dropout_lstm=float(m["dropout_lstm"]),
                       seed=cfg["train"]["seed"])


def describe_defaults() -> str:
    lines = ["config keys (defaults):"]

    def walk(node, prefix):
        for k, v in node.items():
            if isinstance(v, dict) and k != "widths":
                walk(v, f"{prefix}{k}.")
            elif isinstance(v, dict):
                for kk, vv in v.items():
                    lines.append(f"  {prefix}{k}.{kk} = {json.dumps(vv)}")
            else:
                lines.append(f"  {prefix}{k} = {json.dumps(v)}")

    walk(DEFAULTS, "")
    return "\n".join(lines)
