"""Key-value (INI) configs for processes and training runs.

Process file::

    [process]
    kind = filtered_white_noise   ; or locally_stationary, random_phase_sinusoid,
                                  ;    pulse_train, lowpass_gaussian
    length = 4096
    seed = 7
    taps = 1, 1                   ; comma-separated floats
    filters = 1, 1; 1, -1         ; locally_stationary: filters split by ';'
    knots = 0, 4095

Any other key must be a field of the chosen kind (see :mod:`cvspec.processes`).

Training file::

    [train]
    learning_rate = 0.01
    batch_size = 20
    epochs = 5
    loss = logistic
    momentum = 0.0
    mirror = false
    mode = full_taps              ; or scales_only
"""
from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path

import numpy as np

from . import processes
from .learn.train import TrainConfig

_LIST_KEYS = {"taps", "knots"}


def _floats(text: str) -> list:
    return [float(v) for v in text.replace(" ", "").split(",") if v]


def _coerce(cls, key: str, raw: str):
    if key in _LIST_KEYS:
        return _floats(raw)
    if key == "filters":
        return tuple(_floats(part) for part in raw.split(";") if part.strip())
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if key not in fields:
        raise ValueError(f"{cls.__name__} has no field {key!r}")
    kind = str(fields[key].type)
    if "int" in kind and "float" not in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    return raw.strip()


def process_from_mapping(d: dict) -> processes.ProcessSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in processes.KINDS:
        raise ValueError(f"unknown process kind {kind!r}; expected one of {sorted(processes.KINDS)}")
    cls = processes.KINDS[kind]
    return cls(**{k: _coerce(cls, k, v) for k, v in d.items()})


def load_process(path) -> processes.ProcessSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not cp.read(path):
        raise FileNotFoundError(path)
    if "process" not in cp:
        raise ValueError(f"{path}: missing [process] section")
    return process_from_mapping(dict(cp["process"]))


def process_to_text(spec: processes.ProcessSpec) -> str:
    lines = ["[process]", f"kind = {processes.kind_of(spec)}"]
    for f in dataclasses.fields(spec):
        v = getattr(spec, f.name)
        if v is None:
            continue
        if f.name == "filters":
            v = "; ".join(", ".join(repr(float(t)) for t in row) for row in v)
        elif isinstance(v, (np.ndarray, tuple, list)):
            v = ", ".join(repr(float(t)) for t in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def load_train_config(path=None, **overrides) -> tuple:
    """Return ``(TrainConfig, mode)``; keyword overrides that are not None win."""
    values: dict = {}
    mode = "full_taps"
    if path is not None:
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if not cp.read(path):
            raise FileNotFoundError(path)
        section = cp["train"] if "train" in cp else {}
        types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
        for k, raw in dict(section).items():
            if k == "mode":
                mode = raw.strip()
                continue
            if k not in types:
                raise ValueError(f"unknown training option {k!r}")
            t = str(types[k])
            if "bool" in t:
                values[k] = cp["train"].getboolean(k)
            elif "int" in t:
                values[k] = int(raw)
            elif "float" in t:
                values[k] = float(raw)
            else:
                values[k] = raw.strip()
    mode = overrides.pop("mode", None) or mode
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**values), mode


def read_dataset(root) -> tuple:
    """Load ``root/<class>/<signal files>``; classes are sorted directory names."""
    from .io import read_signal

    root = Path(root)
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise ValueError(f"{root}: no class subdirectories")
    X, y = [], []
    for label, name in enumerate(classes):
        for f in sorted(p for p in (root / name).iterdir() if p.is_file()):
            X.append(np.asarray(read_signal(f), dtype=np.float64))
            y.append(label)
    if not X:
        raise ValueError(f"{root}: no signal files")
    if len({x.size for x in X}) != 1:
        raise ValueError("all signals in a dataset must have the same length")
    return np.stack(X), np.array(y), classes
