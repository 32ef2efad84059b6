"""Reverse-mode differentiation through transform graphs.

The forward pass always runs the general conv -> modulus -> average path and
records what the backward pass needs on a :class:`Tape`. Complex gradients
are packed as ``dL/dRe + i dL/dIm``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..signal import _check_finite, _shift, local_average, subsample, upsample_adjoint
from ..transform import FeatureVector, LeafInfo, NegativeInputError, TransformGraph
from .params import ParamSet

MODULUS_EPS = 1e-12


class StaleTapeError(RuntimeError):
    pass


@dataclass(eq=False)
class _NodeRecord:
    x: np.ndarray  # stage input
    z: list  # complex conv outputs per channel
    u: list  # after mixing (same objects as z without mixing)
    v: list  # moving averages of |u|, before scaling
    outs: list  # subsampled, scaled outputs
    children: list  # (channel, child node id)


@dataclass(eq=False)
class Tape:
    graph: TransformGraph
    params: ParamSet
    version: int
    records: list
    features: FeatureVector
    x: np.ndarray
    consumed: bool = False


@dataclass(eq=False)
class Gradients:
    arrays: dict = field(default_factory=dict)
    input: np.ndarray | None = None

    def add(self, name: str, g) -> None:
        if name in self.arrays:
            self.arrays[name] = self.arrays[name] + g
        else:
            self.arrays[name] = g


def _conv_forward(x, taps, mode):
    m = (taps.size - 1) // 2
    y = np.zeros(x.shape, dtype=np.complex128)
    for i, t in enumerate(range(-m, m + 1)):
        y += taps[i] * _shift(x, t, mode)
    return y


def forward(x, graph: TransformGraph, params: ParamSet) -> tuple:
    """Evaluate the graph with ``params`` and keep a tape for :func:`backward`."""
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    if graph.root is None:
        fv = FeatureVector(x.copy(), (LeafInfo((), 0, x.shape[-1]),))
        return fv, Tape(graph, params, params.version, [], fv, x)
    nodes = graph.nodes()
    ids = {id(n): i for i, n in enumerate(nodes)}
    records = [None] * len(nodes)
    taps_all, scales_all, mix_all, dws_all = params.taps, params.scales, params.mixing, params.downweights
    pieces, infos = [], []
    offset = 0

    def visit(node, signal, path):
        nonlocal offset
        nid = ids[id(node)]
        st = node.stage
        if st.fast_path and np.any(signal < 0):
            raise NegativeInputError("zero-frequency fast path needs a nonnegative input")
        taps, scales, mix = taps_all[nid], scales_all[nid], mix_all[nid]
        z = [_conv_forward(signal, t, st.mode) for t in taps]
        u = z if mix is None else list(np.tensordot(mix, np.stack(z), axes=1))
        v, outs = [], []
        for c in range(st.channels):
            p = st.pool_of(c)
            vc = local_average(np.abs(u[c]), 2 * p + 1, mode=st.mode)
            v.append(vc)
            outs.append(subsample(scales[c] * vc, st.factor, st.phase))
        children = [(e.channel, ids[id(e.node)]) for e in node.children]
        records[nid] = _NodeRecord(signal, z, u, v, outs, children)
        for c in node.leaf_channels():
            pieces.append(outs[c])
            infos.append(LeafInfo(path + ((c, st.omegas[c]),), offset, outs[c].shape[-1]))
            offset += outs[c].shape[-1]
        for e in node.children:
            visit(e.node, dws_all[nid][e.channel] * outs[e.channel], path + ((e.channel, st.omegas[e.channel]),))

    visit(graph.root, x, ())
    fv = FeatureVector(np.concatenate(pieces, axis=-1), tuple(infos))
    return fv, Tape(graph, params, params.version, records, fv, x)


def backward(tape: Tape, upstream, *, _flip_modulus: bool = False) -> Gradients:
    """Gradients of ``sum(upstream * features)`` w.r.t. parameters and input.

    Sums over any batch axes. A tape can be used once, and only while its
    parameters are unchanged. ``_flip_modulus`` deliberately corrupts the
    modulus derivative; it exists to test the gradient checker.
    """
    if tape.consumed:
        raise StaleTapeError("tape already used by a backward pass")
    if tape.params.version != tape.version:
        raise StaleTapeError("parameters changed since the forward pass")
    tape.consumed = True
    g_feat = np.asarray(upstream, dtype=np.float64)
    if g_feat.shape != tape.features.values.shape:
        raise ValueError("upstream gradient shape does not match the features")
    grads = Gradients()
    graph = tape.graph
    if graph.root is None:
        grads.input = g_feat.copy()
        return grads
    nodes = graph.nodes()
    params = tape.params
    taps_all, scales_all, mix_all, dws_all = params.taps, params.scales, params.mixing, params.downweights
    ids = {id(n): i for i, n in enumerate(nodes)}

    # seed leaf gradients by replaying the leaf layout
    g_out = [dict() for _ in nodes]
    it = iter(tape.features.leaves)

    def seed(node):
        nid = ids[id(node)]
        for c in node.leaf_channels():
            info = next(it)
            g_out[nid][c] = g_feat[..., info.offset : info.offset + info.length]
        for e in node.children:
            seed(e.node)

    seed(graph.root)

    g_in = [None] * len(nodes)
    # reverse pre-order visits every child before its parent
    for nid in reversed(range(len(nodes))):
        node, rec = nodes[nid], tape.records[nid]
        st = node.stage
        for c, child in rec.children:
            gc = g_in[child]
            dw = dws_all[nid][c]
            grads.add(f"downweights/{nid}/{c}", np.array([np.sum(gc * rec.outs[c])]))
            g_out[nid][c] = dw * gc
        N = rec.x.shape[-1]
        g_u = []
        g_scales = np.zeros(st.channels)
        for c in range(st.channels):
            gw = upsample_adjoint(g_out[nid][c], N, st.factor, st.phase)
            g_scales[c] = np.sum(gw * rec.v[c])
            ga = local_average(scales_all[nid][c] * gw, 2 * st.pool_of(c) + 1, mode=st.mode)
            uc = rec.u[c]
            mag = np.abs(uc)
            safe = mag > MODULUS_EPS
            unit = np.where(safe, uc / np.where(safe, mag, 1.0), 0.0)
            if _flip_modulus:
                unit = -unit
            g_u.append(ga * unit)
        grads.add(f"scales/{nid}", g_scales)
        mix = mix_all[nid]
        if mix is None:
            g_z = g_u
        else:
            gu = np.stack(g_u)
            zs = np.stack(rec.z)
            red = tuple(range(1, gu.ndim))
            g_mix = np.real(np.tensordot(np.conj(gu), zs, axes=(red, red)))
            grads.add(f"mixing/{nid}", g_mix)
            g_z = list(np.tensordot(mix.T, gu, axes=1))
        gx = np.zeros(rec.x.shape)
        for c, taps in enumerate(taps_all[nid]):
            m = (taps.size - 1) // 2
            gt = np.empty(taps.size, dtype=np.complex128)
            for i, t in enumerate(range(-m, m + 1)):
                gt[i] = np.sum(g_z[c] * _shift(rec.x, t, st.mode))
                gx += np.real(np.conj(taps[i]) * _shift(g_z[c], -t, st.mode))
            grads.add(f"taps/{nid}/{c}", gt)
        g_in[nid] = gx
    grads.input = g_in[0]
    return grads


# ---------------------------------------------------------------------------
# classifier head


LOSSES = ("logistic", "hinge")


def class_scores(features: np.ndarray, params: ParamSet) -> np.ndarray:
    a = params.arrays
    std = (features - a["classifier/mean"]) / a["classifier/scale"]
    return std @ a["classifier/W"].T + a["classifier/b"]


def loss_and_grad(scores: np.ndarray, labels: np.ndarray, loss: str = "logistic") -> tuple:
    """Summed loss over the batch and its gradient w.r.t. the scores."""
    scores = np.atleast_2d(scores)
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(scores.shape[0])
    if loss == "logistic":
        shifted = scores - scores.max(axis=1, keepdims=True)
        logz = np.log(np.sum(np.exp(shifted), axis=1))
        total = float(np.sum(logz - shifted[rows, labels]))
        prob = np.exp(shifted - logz[:, None])
        prob[rows, labels] -= 1.0
        return total, prob
    if loss == "hinge":
        margins = 1.0 + scores - scores[rows, labels][:, None]
        margins[rows, labels] = 0.0
        active = (margins > 0).astype(np.float64)
        total = float(np.sum(margins * active))
        g = active
        g[rows, labels] = -active.sum(axis=1)
        return total, g
    raise ValueError(f"unknown loss {loss!r}; expected one of {LOSSES}")


def objective_and_grad(x, labels, graph, params: ParamSet, loss: str = "logistic", *, _flip_modulus=False) -> tuple:
    """Summed classification loss on a batch and its full gradient."""
    fv, tape = forward(x, graph, params)
    scores = class_scores(fv.values, params)
    total, g_scores = loss_and_grad(scores, labels, loss)
    if not np.isfinite(total):
        return total, Gradients(), scores  # caller decides how to fail
    a = params.arrays
    std = (fv.values - a["classifier/mean"]) / a["classifier/scale"]
    g_feat = (g_scores @ a["classifier/W"]) / a["classifier/scale"]
    grads = backward(tape, g_feat, _flip_modulus=_flip_modulus)
    grads.add("classifier/W", g_scores.T @ std)
    grads.add("classifier/b", g_scores.sum(axis=0))
    return total, grads, scores
