"""Multiscale transform graphs built from conv -> modulus -> average stages.

A stage applies a bank of modulated filters to one input. Each channel output
is either a leaf of the graph or feeds a child stage, optionally multiplied by
an edge downweight. Recursing only the zero-frequency channel gives the
wavelet (two filters) and multiwavelet (``M`` filters) transforms; recursing
every channel gives the nonlinear wavelet packet transform.

Leaves are ordered node by node in depth-first order: at each node its own
leaf channels come first (by channel index), then its children's subtrees
(by channel index).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .signal import (
    ModulatedFilter,
    WindowSpec,
    _check_mode,
    _check_finite,
    convolve,
    gaussian_window,
    local_average,
    subsample,
)

DEFAULT_MAX_LEAVES = 4096


class NegativeInputError(ValueError):
    """Raised when the zero-frequency fast path sees a negative sample."""


@dataclass(frozen=True, eq=False)
class StageSpec:
    """One conv -> modulus -> average -> scale -> subsample stage.

    ``pool`` is the averaging half-width ``p`` (pool width ``2p+1``); ``None``
    uses each filter's own window half-width. ``mixing``, when given, is a
    real ``(C, C)`` matrix that recombines the complex filter outputs before
    the modulus. ``normalize`` applies ``1/sqrt(2n+1)`` to every filter.
    """

    omegas: tuple
    windows: tuple
    pool: int | None = None
    factor: int = 1
    phase: int = 0
    scales: tuple | None = None
    mixing: np.ndarray | None = None
    normalize: bool = True
    fast_path: bool = True
    mode: str = "circular"

    def __post_init__(self):
        omegas = tuple(float(w) for w in self.omegas)
        windows = tuple(self.windows)
        if len(windows) == 1 and len(omegas) > 1:
            windows = windows * len(omegas)
        if len(windows) != len(omegas):
            raise ValueError("need one window per frequency")
        if not all(isinstance(w, WindowSpec) for w in windows):
            raise TypeError("windows must be WindowSpec instances")
        if any(not 0.0 <= w < 2 * np.pi for w in omegas):
            raise ValueError("frequencies must lie in [0, 2*pi)")
        if len(set(omegas)) != len(omegas):
            raise ValueError("frequencies must be distinct")
        if sum(w == 0.0 for w in omegas) != 1:
            raise ValueError("a stage needs exactly one zero-frequency channel")
        if self.factor < 1 or not 0 <= self.phase < self.factor:
            raise ValueError("need factor >= 1 and 0 <= phase < factor")
        if self.pool is not None and self.pool < 0:
            raise ValueError("pool half-width must be nonnegative")
        _check_mode(self.mode)
        scales = (1.0,) * len(omegas) if self.scales is None else tuple(float(s) for s in self.scales)
        if len(scales) != len(omegas):
            raise ValueError("need one scale per channel")
        if any(not math.isfinite(s) or s < 0 for s in scales):
            raise ValueError("scales must be finite and nonnegative")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "windows", windows)
        object.__setattr__(self, "scales", scales)
        if self.mixing is not None:
            mix = np.array(self.mixing, dtype=np.float64)
            if mix.shape != (len(omegas),) * 2:
                raise ValueError("mixing matrix must be (channels, channels)")
            _check_finite(mix, "mixing matrix")
            mix.setflags(write=False)
            object.__setattr__(self, "mixing", mix)

    @property
    def channels(self) -> int:
        return len(self.omegas)

    @property
    def zero_channel(self) -> int:
        return self.omegas.index(0.0)

    def pool_of(self, c: int) -> int:
        return self.windows[c].n if self.pool is None else self.pool

    def filter(self, c: int) -> ModulatedFilter:
        return ModulatedFilter.from_window(self.windows[c], self.omegas[c])

    def taps(self, c: int) -> np.ndarray:
        """Complex taps of channel ``c``, normalization included."""
        f = self.filter(c).taps
        return f / math.sqrt(f.size) if self.normalize else f.copy()

    def filter_bank(self) -> list:
        return [self.taps(c) for c in range(self.channels)]


@dataclass(frozen=True, eq=False)
class Edge:
    channel: int
    node: "Node"
    downweight: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.downweight) or self.downweight < 0:
            raise ValueError("downweights must be finite and nonnegative")


@dataclass(frozen=True, eq=False)
class Node:
    stage: StageSpec
    children: tuple = ()

    def __post_init__(self):
        children = tuple(sorted(self.children, key=lambda e: e.channel))
        seen = [e.channel for e in children]
        if len(set(seen)) != len(seen):
            raise ValueError("at most one child per channel")
        if any(not 0 <= c < self.stage.channels for c in seen):
            raise ValueError("child channel out of range")
        object.__setattr__(self, "children", children)

    def child(self, c: int) -> Edge | None:
        for e in self.children:
            if e.channel == c:
                return e
        return None

    def leaf_channels(self) -> list:
        recursed = {e.channel for e in self.children}
        return [c for c in range(self.stage.channels) if c not in recursed]


@dataclass(frozen=True, eq=False)
class TransformGraph:
    """A finite tree of stages; ``root=None`` is the identity transform."""

    root: Node | None
    kind: str = "custom"

    def nodes(self) -> list:
        """Nodes in pre-order; a node's index here is its id."""
        out = []

        def visit(node):
            out.append(node)
            for e in node.children:
                visit(e.node)

        if self.root is not None:
            visit(self.root)
        return out

    @property
    def depth(self) -> int:
        def d(node):
            return 1 + max((d(e.node) for e in node.children), default=0)

        return 0 if self.root is None else d(self.root)

    def leaf_count(self) -> int:
        return sum(len(n.leaf_channels()) for n in self.nodes()) if self.root else 1

    def filter_count(self) -> int:
        return sum(n.stage.channels for n in self.nodes())


@dataclass(frozen=True)
class LeafInfo:
    path: tuple  # ((channel, omega), ...) from the root
    offset: int
    length: int

    @property
    def name(self) -> str:
        if not self.path:
            return "input"
        return "/".join(f"c{c}@{w:.6g}" for c, w in self.path)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray  # (..., total_length)
    leaves: tuple

    def leaf(self, i: int) -> np.ndarray:
        info = self.leaves[i]
        return self.values[..., info.offset : info.offset + info.length]

    def leaf_by_path(self, path) -> np.ndarray:
        for i, info in enumerate(self.leaves):
            if info.path == tuple(path):
                return self.leaf(i)
        raise KeyError(path)

    @property
    def names(self) -> list:
        return [info.name for info in self.leaves]

    def to_csv(self, path) -> None:
        """One column per feature; header names ``leaf[index]``; one row per signal."""
        header = [f"{info.name}[{i}]" for info in self.leaves for i in range(info.length)]
        rows = np.atleast_2d(self.values)
        lines = [",".join(header)] + [",".join(repr(float(v)) for v in r) for r in rows]
        Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# evaluation


def _is_fast_channel(taps: np.ndarray, stage: StageSpec, mixing) -> bool:
    return stage.fast_path and mixing is None and not np.any(taps.imag) and not np.any(taps.real < 0)


def _fast_kernel(taps_real: np.ndarray, pool: int) -> np.ndarray:
    return np.convolve(taps_real, np.ones(2 * pool + 1)) / (2 * pool + 1)


def apply_stage(x, stage: StageSpec, *, taps=None, scales=None, mixing="stage") -> list:
    """Evaluate one stage; returns one subsampled output per channel.

    ``taps``, ``scales`` and ``mixing`` override the stage's own filters
    (trained parameters). A channel whose taps are real and nonnegative uses
    the zero-frequency fast path when ``stage.fast_path`` is set: a single
    real convolution with the boxcar-averaged kernel, no modulus. That path
    requires ``x >= 0``.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    taps = stage.filter_bank() if taps is None else [np.asarray(t, dtype=np.complex128) for t in taps]
    scales = stage.scales if scales is None else scales
    mixing = stage.mixing if isinstance(mixing, str) else mixing
    if stage.fast_path and np.any(x < 0):
        raise NegativeInputError(
            "zero-frequency fast path needs a nonnegative input; "
            "build the stage with fast_path=False to use the general path"
        )
    N = x.shape[-1]
    fast = [_is_fast_channel(t, stage, mixing) for t in taps]
    z = {}
    for c, t in enumerate(taps):
        if not fast[c]:
            z[c] = convolve(x, t, mode=stage.mode)
    if mixing is not None:
        zs = np.stack([z[c] for c in range(len(taps))])
        z = dict(enumerate(np.tensordot(mixing, zs, axes=1)))
    outs = []
    for c, t in enumerate(taps):
        p = stage.pool_of(c)
        if fast[c]:
            h = _fast_kernel(t.real, p)
            if stage.mode == "circular" and h.size <= N:
                y = convolve(x, h, mode="circular")
            else:
                y = local_average(convolve(x, t.real, mode=stage.mode), 2 * p + 1, mode=stage.mode)
        else:
            y = local_average(np.abs(z[c]), 2 * p + 1, mode=stage.mode)
        outs.append(subsample(scales[c] * y, stage.factor, stage.phase))
    return outs


def apply_transform(x, graph: TransformGraph, params=None) -> FeatureVector:
    """Evaluate every leaf of ``graph`` on ``x`` (shape ``(..., N)``).

    ``params`` is an optional :class:`cvspec.learn.ParamSet` whose values
    replace the graph's filters, scales, mixing matrices and downweights.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    if graph.root is None:
        return FeatureVector(x.copy(), (LeafInfo((), 0, x.shape[-1]),))
    nodes = graph.nodes()
    ids = {id(n): i for i, n in enumerate(nodes)}
    pieces, infos = [], []
    offset = 0

    def visit(node, signal, path):
        nonlocal offset
        nid = ids[id(node)]
        kw = {}
        if params is not None:
            kw = dict(taps=params.taps[nid], scales=params.scales[nid], mixing=params.mixing[nid])
        outs = apply_stage(signal, node.stage, **kw)
        for c in node.leaf_channels():
            pieces.append(outs[c])
            infos.append(LeafInfo(path + ((c, node.stage.omegas[c]),), offset, outs[c].shape[-1]))
            offset += outs[c].shape[-1]
        for e in node.children:
            dw = e.downweight if params is None else params.downweights[nid][e.channel]
            visit(e.node, dw * outs[e.channel], path + ((e.channel, node.stage.omegas[e.channel]),))

    visit(graph.root, x, ())
    return FeatureVector(np.concatenate(pieces, axis=-1), tuple(infos))


def lipschitz_bound(graph: TransformGraph) -> float:
    """Upper bound ``C`` with ``||Phi(x) - Phi(y)|| <= C ||x - y||``.

    Each channel contributes ``scale * ||taps||_1`` (convolution bound; the
    modulus, moving average and subsampling are nonexpansive); channels of a
    stage add in quadrature, and a recursed channel multiplies by its edge
    downweight and the child's bound. Mixing multiplies by its spectral norm.
    """
    if graph.root is None:
        return 1.0

    def bound(node):
        st = node.stage
        mix = 1.0 if st.mixing is None else float(np.linalg.norm(st.mixing, 2))
        total = 0.0
        for c in range(st.channels):
            lc = st.scales[c] * mix * float(np.sum(np.abs(st.taps(c))))
            e = node.child(c)
            if e is not None:
                lc *= e.downweight * bound(e.node)
            total += lc * lc
        return math.sqrt(total)

    return bound(graph.root)


# ---------------------------------------------------------------------------
# builders


def default_windows(depth: int, n0: int = 2) -> list:
    """Gaussian windows with half-width ``n0 + level``: wider at each level."""
    return [gaussian_window(n0 + level) for level in range(depth)]


def _level_windows(windows, depth, n0):
    if windows is None:
        return default_windows(depth, n0)
    if isinstance(windows, WindowSpec):
        return [windows] * depth
    windows = list(windows)
    if len(windows) != depth:
        raise ValueError(f"need {depth} windows, got {len(windows)}")
    return windows


def _stage(omegas, window, factor, **kw) -> StageSpec:
    return StageSpec(tuple(omegas), (window,), factor=factor, **kw)


def build_wavelet_graph(
    depth: int,
    windows: WindowSpec | Sequence[WindowSpec] | None = None,
    *,
    omega: float = np.pi,
    factor: int = 2,
    **stage_kw,
) -> TransformGraph:
    """Chain of two-filter stages (``0`` and ``omega``), recursing on ``omega = 0``."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    ws = _level_windows(windows, depth, 2)
    node = None
    for level in reversed(range(depth)):
        st = _stage((0.0, omega), ws[level], factor, **_level_kw(stage_kw, level))
        node = Node(st, () if node is None else (Edge(0, node),))
    return TransformGraph(node, "wavelet")


def build_multiwavelet_graph(
    depth: int,
    channels: int = 4,
    windows: WindowSpec | Sequence[WindowSpec] | None = None,
    *,
    omegas: Sequence[float] | None = None,
    factor: int | None = None,
    **stage_kw,
) -> TransformGraph:
    """``channels`` filters per stage on ``2 pi m / channels``; recurse on ``omega = 0``."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if channels < 2:
        raise ValueError("need at least two channels")
    om = 2 * np.pi * np.arange(channels) / channels if omegas is None else omegas
    ws = _level_windows(windows, depth, channels)
    factor = channels if factor is None else factor
    node = None
    for level in reversed(range(depth)):
        st = _stage(om, ws[level], factor, **_level_kw(stage_kw, level))
        node = Node(st, () if node is None else (Edge(st.zero_channel, node),))
    return TransformGraph(node, "multiwavelet")


def build_packet_graph(
    depth: int,
    channels: int = 2,
    windows: WindowSpec | Sequence[WindowSpec] | None = None,
    downweights: float | Sequence[float] = 1.0,
    *,
    omegas: Sequence[float] | None = None,
    factor: int | None = None,
    max_leaves: int = DEFAULT_MAX_LEAVES,
    **stage_kw,
) -> TransformGraph:
    """Full ``channels``-ary tree; every channel is recursed.

    Edges leaving a nonzero-frequency channel carry ``downweights`` (one
    scalar, or one per level ``0..depth-2``); zero-frequency edges carry 1.
    With two channels, ``omegas`` defaults to ``(0, pi)`` and ``factor`` to 2,
    matching :func:`build_wavelet_graph`.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if channels < 2:
        raise ValueError("need at least two channels")
    if channels**depth > max_leaves:
        raise ValueError(f"{channels}**{depth} leaves exceeds the cap of {max_leaves}")
    om = 2 * np.pi * np.arange(channels) / channels if omegas is None else omegas
    ws = _level_windows(windows, depth, 2 if channels == 2 else channels)
    factor = channels if factor is None else factor
    if np.ndim(downweights) == 0:
        dws = [float(downweights)] * max(depth - 1, 0)
    else:
        dws = [float(d) for d in downweights]
        if len(dws) != depth - 1:
            raise ValueError(f"need {depth - 1} per-level downweights")

    def make(level):
        st = _stage(om, ws[level], factor, **_level_kw(stage_kw, level))
        if level == depth - 1:
            return Node(st)
        edges = tuple(
            Edge(c, make(level + 1), 1.0 if st.omegas[c] == 0.0 else dws[level]) for c in range(st.channels)
        )
        return Node(st, edges)

    return TransformGraph(make(0), "packet")


def _level_kw(stage_kw: dict, level: int) -> dict:
    # fast_path may be given per level, e.g. False only for a signed root input
    kw = dict(stage_kw)
    fp = kw.get("fast_path")
    if isinstance(fp, (list, tuple)):
        kw["fast_path"] = bool(fp[level])
    return kw


def identity_graph() -> TransformGraph:
    return TransformGraph(None, "identity")


def identity_stage() -> StageSpec:
    """Single zero-frequency filter with ``g = delta``: the identity on ``x >= 0``."""
    return StageSpec((0.0,), (WindowSpec(np.ones(1)),))


# ---------------------------------------------------------------------------
# text config (JSON)


def _window_to_json(w: WindowSpec) -> dict:
    return {"taps": [float(v) for v in w.g]}


def _window_from_json(d) -> WindowSpec:
    if isinstance(d, int):
        return gaussian_window(d)
    if "taps" in d:
        return WindowSpec(np.array(d["taps"], dtype=np.float64))
    if "gaussian" in d:
        return gaussian_window(int(d["gaussian"]), d.get("std"))
    if "boxcar" in d:
        return WindowSpec(np.ones(2 * int(d["boxcar"]) + 1))
    raise ValueError(f"bad window description {d!r}")


def _stage_to_json(st: StageSpec) -> dict:
    return {
        "filters": [{"omega": w, "window": _window_to_json(g)} for w, g in zip(st.omegas, st.windows)],
        "pool": st.pool,
        "factor": st.factor,
        "phase": st.phase,
        "scales": list(st.scales),
        "mixing": None if st.mixing is None else st.mixing.tolist(),
        "normalize": st.normalize,
        "fast_path": st.fast_path,
        "mode": st.mode,
    }


def _stage_from_json(d) -> StageSpec:
    filters = d["filters"]
    return StageSpec(
        tuple(f["omega"] for f in filters),
        tuple(_window_from_json(f["window"]) for f in filters),
        pool=d.get("pool"),
        factor=d.get("factor", 1),
        phase=d.get("phase", 0),
        scales=d.get("scales"),
        mixing=d.get("mixing"),
        normalize=d.get("normalize", True),
        fast_path=d.get("fast_path", True),
        mode=d.get("mode", "circular"),
    )


def _node_to_json(node: Node) -> dict:
    return {
        "stage": _stage_to_json(node.stage),
        "children": [{"channel": e.channel, "downweight": e.downweight, "node": _node_to_json(e.node)} for e in node.children],
    }


def _node_from_json(d) -> Node:
    edges = tuple(Edge(c["channel"], _node_from_json(c["node"]), c.get("downweight", 1.0)) for c in d.get("children", []))
    return Node(_stage_from_json(d["stage"]), edges)


def graph_to_dict(graph: TransformGraph) -> dict:
    return {
        "version": 1,
        "kind": graph.kind,
        "root": None if graph.root is None else _node_to_json(graph.root),
    }


BUILDERS = {
    "wavelet": build_wavelet_graph,
    "multiwavelet": build_multiwavelet_graph,
    "packet": build_packet_graph,
}


def graph_from_dict(d: dict) -> TransformGraph:
    """Build a graph from either an explicit tree or a builder recipe.

    Recipe form: ``{"builder": "multiwavelet", "depth": 2, "channels": 4,
    "windows": [4, 5], ...}`` where windows are Gaussian half-widths or window
    objects; remaining keys go to the builder.
    """
    if "builder" in d:
        kw = {k: v for k, v in d.items() if k not in ("builder", "version")}
        if "windows" in kw and kw["windows"] is not None:
            kw["windows"] = [_window_from_json(w) for w in kw["windows"]]
        name = kw.pop("kind", None) or d["builder"]
        builder = BUILDERS.get(d["builder"])
        if builder is None:
            raise ValueError(f"unknown builder {d['builder']!r}")
        return replace(builder(**kw), kind=name)
    if d.get("version", 1) != 1:
        raise ValueError(f"unsupported graph config version {d['version']}")
    root = d.get("root")
    return TransformGraph(None if root is None else _node_from_json(root), d.get("kind", "custom"))


def save_graph(graph: TransformGraph, path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph), indent=2) + "\n")


def load_graph(path) -> TransformGraph:
    return graph_from_dict(json.loads(Path(path).read_text()))
