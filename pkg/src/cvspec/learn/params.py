"""Trainable parameters of a transform graph plus a linear classifier head.

Parameters live in one ordered ``name -> array`` mapping so the optimizer,
the gradient checker and the serializer all walk the same list. Names:

    taps/<node>/<channel>        complex filter taps (normalization absorbed)
    scales/<node>                per-channel output scale
    mixing/<node>                channel mixing matrix (only when enabled)
    downweights/<node>/<channel> multiplier on the edge into a child stage
    classifier/W, classifier/b   linear class scores
    classifier/mean, classifier/scale   fixed feature standardization

Node ids follow :meth:`TransformGraph.nodes` (pre-order).
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..transform import TransformGraph, apply_transform

MODES = ("full_taps", "scales_only")
PARAM_MAGIC = b"SPWP"
PARAM_VERSION = 1

# parameter classes each mode updates
TRAINABLE = {
    "full_taps": ("taps", "downweights", "mixing", "classifier"),
    "scales_only": ("scales", "classifier"),
}
FROZEN_NAMES = ("classifier/mean", "classifier/scale")


def param_class(name: str) -> str:
    return name.split("/", 1)[0]


@dataclass(eq=False)
class ParamSet:
    arrays: dict
    mode: str = "full_taps"
    version: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")

    # views used by the transform evaluator -------------------------------
    def _nodes(self) -> int:
        return int(self.meta["nodes"])

    @property
    def taps(self) -> list:
        chans = self.meta["channels"]
        return [[self.arrays[f"taps/{i}/{c}"] for c in range(chans[i])] for i in range(self._nodes())]

    @property
    def scales(self) -> list:
        return [self.arrays[f"scales/{i}"] for i in range(self._nodes())]

    @property
    def mixing(self) -> list:
        return [self.arrays.get(f"mixing/{i}") for i in range(self._nodes())]

    @property
    def downweights(self) -> list:
        out = [dict() for _ in range(self._nodes())]
        for name, arr in self.arrays.items():
            if name.startswith("downweights/"):
                _, i, c = name.split("/")
                out[int(i)][int(c)] = float(arr[0])
        return out

    # bookkeeping ---------------------------------------------------------
    def trainable_names(self, classes=None) -> list:
        classes = TRAINABLE[self.mode] if classes is None else classes
        return [n for n in self.arrays if param_class(n) in classes and n not in FROZEN_NAMES]

    def parameter_counts(self) -> dict:
        """Number of trained real parameters per class (complex counts twice)."""
        counts = {}
        for n in self.trainable_names():
            a = self.arrays[n]
            counts[param_class(n)] = counts.get(param_class(n), 0) + a.size * (2 if np.iscomplexobj(a) else 1)
        return counts

    def transform_parameter_count(self) -> int:
        return sum(v for k, v in self.parameter_counts().items() if k != "classifier")

    def copy(self) -> "ParamSet":
        return ParamSet({k: v.copy() for k, v in self.arrays.items()}, self.mode, self.version, dict(self.meta))

    def bump(self) -> None:
        self.version += 1


def taps_checksum(params: ParamSet) -> str:
    h = hashlib.sha256()
    for name in sorted(n for n in params.arrays if n.startswith("taps/")):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params.arrays[name]).tobytes())
    return h.hexdigest()


def init_params(
    graph: TransformGraph,
    signal_length: int,
    n_classes: int,
    *,
    mode: str = "full_taps",
    perturb: float = 0.0,
    seed: int = 0,
    learn_mixing: bool = False,
    X=None,
) -> ParamSet:
    """Initialize from the graph's own windowed exponentials.

    ``perturb`` adds complex Gaussian noise of that fraction of each filter's
    tap RMS. ``learn_mixing`` adds identity mixing matrices for stages
    without one. When ``X`` is given, feature mean and scale for the
    classifier are fitted on ``apply_transform(X)``.
    """
    if n_classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    arrays = {}
    nodes = graph.nodes()
    for i, node in enumerate(nodes):
        st = node.stage
        for c in range(st.channels):
            t = st.taps(c)
            if perturb:
                rms = np.sqrt(np.mean(np.abs(t) ** 2))
                t = t + perturb * rms * (rng.standard_normal(t.size) + 1j * rng.standard_normal(t.size)) / np.sqrt(2)
            arrays[f"taps/{i}/{c}"] = t.astype(np.complex128)
        arrays[f"scales/{i}"] = np.array(st.scales, dtype=np.float64)
        if st.mixing is not None:
            arrays[f"mixing/{i}"] = np.array(st.mixing)
        elif learn_mixing:
            arrays[f"mixing/{i}"] = np.eye(st.channels)
        for e in node.children:
            arrays[f"downweights/{i}/{e.channel}"] = np.array([e.downweight])
    probe = apply_transform(np.ones(signal_length), graph)
    F = probe.values.shape[-1]
    arrays["classifier/W"] = np.zeros((n_classes, F))
    arrays["classifier/b"] = np.zeros(n_classes)
    arrays["classifier/mean"] = np.zeros(F)
    arrays["classifier/scale"] = np.ones(F)
    meta = {
        "nodes": len(nodes),
        "channels": [n.stage.channels for n in nodes],
        "n_classes": n_classes,
        "n_features": F,
        "signal_length": signal_length,
    }
    params = ParamSet(arrays, mode, 0, meta)
    if X is not None:
        fit_standardization(params, apply_transform(np.asarray(X, dtype=np.float64), graph, params).values)
    return params


def fit_standardization(params: ParamSet, features: np.ndarray) -> None:
    feats = np.atleast_2d(features)
    mean = feats.mean(axis=0)
    scale = feats.std(axis=0)
    scale = np.where(scale > 1e-12 * max(1.0, float(np.max(np.abs(mean)))), scale, 1.0)
    params.arrays["classifier/mean"] = mean
    params.arrays["classifier/scale"] = scale
    params.bump()


# ---------------------------------------------------------------------------
# binary format: magic | u32 version | u32 header bytes | JSON header | data


def params_to_bytes(params: ParamSet) -> bytes:
    entries, blobs = [], []
    for name, arr in params.arrays.items():
        kind = "c16" if np.iscomplexobj(arr) else "f8"
        entries.append({"name": name, "dtype": kind, "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(arr, dtype="<" + kind).tobytes())
    header = json.dumps({"mode": params.mode, "meta": params.meta, "arrays": entries}).encode()
    return PARAM_MAGIC + struct.pack("<II", PARAM_VERSION, len(header)) + header + b"".join(blobs)


def params_from_bytes(data: bytes) -> ParamSet:
    if data[:4] != PARAM_MAGIC:
        raise ValueError(f"bad magic {data[:4]!r}; expected {PARAM_MAGIC!r}")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != PARAM_VERSION:
        raise ValueError(f"unsupported parameter file version {version}")
    header = json.loads(data[12 : 12 + hlen])
    pos = 12 + hlen
    arrays = {}
    for e in header["arrays"]:
        dt = np.dtype("<" + e["dtype"])
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype=dt, count=count, offset=pos).reshape(e["shape"])
        arrays[e["name"]] = arr.astype(dt.newbyteorder("="))
        pos += count * dt.itemsize
    if pos != len(data):
        raise ValueError("trailing bytes in parameter file")
    return ParamSet(arrays, header["mode"], 0, header["meta"])


def save_params(params: ParamSet, path) -> None:
    Path(path).write_bytes(params_to_bytes(params))


def load_params(path) -> ParamSet:
    return params_from_bytes(Path(path).read_bytes())
