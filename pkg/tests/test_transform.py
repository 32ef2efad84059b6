import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvspec.signal import boxcar_window, gaussian_window, shift
from cvspec.transform import (
    NegativeInputError,
    StageSpec,
    apply_stage,
    apply_transform,
    build_multiwavelet_graph,
    build_packet_graph,
    build_wavelet_graph,
    graph_from_dict,
    identity_graph,
    identity_stage,
    lipschitz_bound,
    load_graph,
    save_graph,
)
from oracles import boxcar_average_loop, conv_double_loop


def rel_dev(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


def general(stage: StageSpec) -> StageSpec:
    return StageSpec(stage.omegas, stage.windows, stage.pool, stage.factor, stage.phase, stage.scales,
                     stage.mixing, stage.normalize, False, stage.mode)


# --- apply_stage ------------------------------------------------------------


def test_identity_stage():
    rng = np.random.default_rng(0)
    x = rng.random(17)
    (y,) = apply_stage(x, identity_stage())
    np.testing.assert_array_equal(y, x)


@pytest.mark.parametrize("mode", ["circular", "zero_pad"])
def test_fast_path_equals_general_path(mode):
    rng = np.random.default_rng(1)
    st_ = StageSpec((0.0, 1.0, 2.0), (gaussian_window(4),), factor=1, mode=mode)
    for _ in range(20):
        x = rng.random(64) * rng.uniform(0.1, 10)
        fast = apply_stage(x, st_)
        slow = apply_stage(x, general(st_))
        for a, b in zip(fast, slow):
            assert rel_dev(a, b) < 1e-12


def test_fast_path_constant_input():
    n, c = 3, 1.7
    st_ = StageSpec((0.0, np.pi), (boxcar_window(n),))
    y = apply_stage(np.full(40, c), st_)[0]
    np.testing.assert_allclose(y, c * math.sqrt(2 * n + 1), rtol=1e-14)


def test_fast_path_rejects_negative_input():
    st_ = StageSpec((0.0, np.pi), (gaussian_window(2),))
    x = np.ones(16)
    x[3] = -0.1
    with pytest.raises(NegativeInputError, match="fast_path=False"):
        apply_stage(x, st_)
    apply_stage(x, general(st_))


def test_stage_validation():
    w = gaussian_window(2)
    with pytest.raises(ValueError, match="exactly one zero"):
        StageSpec((1.0, 2.0), (w,))
    with pytest.raises(ValueError, match="distinct"):
        StageSpec((0.0, 1.0, 1.0), (w,))
    with pytest.raises(ValueError):
        StageSpec((0.0, 7.0), (w,))
    with pytest.raises(ValueError):
        StageSpec((0.0, 1.0), (w,), factor=2, phase=2)
    with pytest.raises(ValueError):
        StageSpec((0.0, 1.0), (w,), scales=(1.0, -1.0))


# --- graph shapes -----------------------------------------------------------


def test_wavelet_depth1_shapes():
    fv = apply_transform(np.random.default_rng(2).random(8), build_wavelet_graph(1, gaussian_window(1)))
    assert [l.length for l in fv.leaves] == [4, 4]


def test_wavelet_depth3_shapes():
    fv = apply_transform(np.random.default_rng(3).random(64), build_wavelet_graph(3))
    assert [l.length for l in fv.leaves] == [32, 16, 8, 8]
    assert [l.path[-1][1] for l in fv.leaves] == [np.pi, np.pi, 0.0, np.pi]


def test_multiwavelet_shapes():
    g = build_multiwavelet_graph(2, 4)
    fv = apply_transform(np.random.default_rng(4).random(64), g)
    assert [l.length for l in fv.leaves] == [16, 16, 16, 4, 4, 4, 4]
    assert g.leaf_count() == 7 and g.filter_count() == 8


def test_packet_leaf_count_and_cap():
    assert build_packet_graph(2, 2).leaf_count() == 4
    assert build_packet_graph(3, 3).leaf_count() == 27
    with pytest.raises(ValueError, match="cap"):
        build_packet_graph(7, 4)
    build_packet_graph(3, 4, max_leaves=64)


def test_identity_graph():
    x = np.random.default_rng(5).random(10)
    fv = apply_transform(x, identity_graph())
    np.testing.assert_array_equal(fv.values, x)


def test_wavelet_tone_energy_ordering():
    """A tone at pi lights the first-level detail; a tone at pi/2 the second."""
    k = np.arange(256)
    g = build_wavelet_graph(2, [gaussian_window(4), gaussian_window(4)])
    fast = 1 + np.cos(np.pi * k)
    slow = 1 + np.cos(np.pi / 2 * k)
    e = {}
    for name, x in (("fast", fast), ("slow", slow)):
        fv = apply_transform(x, g)
        e[name] = (fv.leaf(0).mean(), fv.leaf(2).mean())  # level-1 and level-2 detail
    assert e["fast"][0] > e["fast"][1]
    assert e["slow"][1] > e["slow"][0]
    want = _stage_oracle(fast, np.pi, gaussian_window(4).g, 2)
    np.testing.assert_allclose(apply_transform(fast, g).leaf(0), want, rtol=1e-12)


def test_multiwavelet_fast_equals_general_at_every_zero_node():
    rng = np.random.default_rng(6)
    g_fast = build_multiwavelet_graph(3, 4, [gaussian_window(3)] * 3)
    g_slow = build_multiwavelet_graph(3, 4, [gaussian_window(3)] * 3, fast_path=False)
    for _ in range(10):
        x = rng.random(256)
        assert rel_dev(apply_transform(x, g_fast).values, apply_transform(x, g_slow).values) < 1e-12


# --- packet graphs ----------------------------------------------------------


def test_packet_zero_downweight_reproduces_wavelet():
    rng = np.random.default_rng(7)
    x = rng.random(128)
    ws = [gaussian_window(2), gaussian_window(3), gaussian_window(4)]
    wav = apply_transform(x, build_wavelet_graph(3, ws))
    pkt = apply_transform(x, build_packet_graph(3, 2, ws, downweights=0.0))
    shared = [info.path for info in pkt.leaves if all(c == 0 for c, _ in info.path[:-1])]
    assert len(shared) == 2
    for path in shared:
        assert np.array_equal(pkt.leaf_by_path(path), wav.leaf_by_path(path))
    # the annihilated subtrees are exactly zero
    for info in pkt.leaves:
        if any(c == 1 for c, _ in info.path[:-1]):
            assert not np.any(pkt.leaf_by_path(info.path))


def _stage_oracle(x, omega, g, factor):
    n = (len(g) - 1) // 2
    taps = np.exp(1j * np.arange(-n, n + 1) * omega) * g / math.sqrt(2 * n + 1)
    y = boxcar_average_loop(np.abs(conv_double_loop(x, taps)), 2 * n + 1)
    return y[::factor]


def test_packet_matches_straight_line_oracle():
    rng = np.random.default_rng(8)
    x = rng.random(64)
    w1, w2 = gaussian_window(2), gaussian_window(3)
    dw = 0.7
    fv = apply_transform(x, build_packet_graph(2, 2, [w1, w2], downweights=dw))
    level1 = {c: _stage_oracle(x, om, w1.g, 2) for c, om in ((0, 0.0), (1, np.pi))}
    expect = {}
    for c1, om1 in ((0, 0.0), (1, np.pi)):
        inp = level1[c1] * (1.0 if c1 == 0 else dw)
        for c2, om2 in ((0, 0.0), (1, np.pi)):
            expect[((c1, om1), (c2, om2))] = _stage_oracle(inp, om2, w2.g, 2)
    assert [info.path for info in fv.leaves] == list(expect)
    for path, want in expect.items():
        np.testing.assert_allclose(fv.leaf_by_path(path), want, rtol=1e-12, atol=1e-14)


# --- properties -------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.integers(-50, 50))
def test_shift_equivariance_without_subsampling(seed, s):
    rng = np.random.default_rng(seed)
    x = rng.random(48)
    g = build_packet_graph(2, 3, [gaussian_window(2), gaussian_window(3)], downweights=0.5, factor=1)
    a = apply_transform(shift(x, s), g)
    b = apply_transform(x, g)
    for i in range(len(a.leaves)):
        np.testing.assert_allclose(a.leaf(i), shift(b.leaf(i), s), rtol=0, atol=1e-12)


def test_shift_by_factor_product_shifts_leaves_exactly():
    rng = np.random.default_rng(9)
    x = rng.random(128)
    g = build_wavelet_graph(3)
    a = apply_transform(shift(x, 8), g)
    b = apply_transform(x, g)
    for info in b.leaves:
        step = 8 // 2 ** len(info.path)
        np.testing.assert_allclose(a.leaf_by_path(info.path), np.roll(b.leaf_by_path(info.path), step), rtol=0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_leaves_nonnegative_and_lipschitz(seed):
    rng = np.random.default_rng(seed)
    g = build_packet_graph(2, 2, downweights=0.5)
    x, y = rng.random(64), rng.random(64)
    fx, fy = apply_transform(x, g).values, apply_transform(y, g).values
    assert np.all(fx >= 0) and np.all(fy >= 0)
    assert np.linalg.norm(fx - fy) <= lipschitz_bound(g) * np.linalg.norm(x - y) * (1 + 1e-12)


def test_mixing_matrix_identity_is_noop():
    rng = np.random.default_rng(10)
    x = rng.random(32)
    base = StageSpec((0.0, 1.5, 3.0), (gaussian_window(2),))
    mixed = StageSpec((0.0, 1.5, 3.0), (gaussian_window(2),), mixing=np.eye(3))
    for a, b in zip(apply_stage(x, base), apply_stage(x, mixed)):
        assert rel_dev(b, a) < 1e-12


def test_mixing_recombines_complex_outputs():
    from cvspec.signal import convolve, local_average

    rng = np.random.default_rng(11)
    x = rng.random(32)
    M = np.array([[1.0, 0.0], [0.5, -2.0]])
    st_ = StageSpec((0.0, 2.0), (gaussian_window(2),), mixing=M)
    z = [convolve(x, st_.taps(c)) for c in range(2)]
    want = local_average(np.abs(0.5 * z[0] - 2.0 * z[1]), 5)
    np.testing.assert_allclose(apply_stage(x, st_)[1], want, rtol=1e-13)


def test_batched_input_matches_rows():
    rng = np.random.default_rng(12)
    X = rng.random((3, 64))
    g = build_multiwavelet_graph(2, 4)
    fv = apply_transform(X, g)
    for r in range(3):
        np.testing.assert_array_equal(fv.values[r], apply_transform(X[r], g).values)


# --- config -----------------------------------------------------------------


@pytest.mark.parametrize(
    "graph",
    [
        build_wavelet_graph(3),
        build_multiwavelet_graph(2, 4, fast_path=[False, True]),
        build_packet_graph(2, 3, downweights=0.25, mode="zero_pad"),
        identity_graph(),
    ],
)
def test_graph_json_round_trip(tmp_path, graph):
    path = tmp_path / "g.json"
    save_graph(graph, path)
    back = load_graph(path)
    x = np.random.default_rng(13).random(81)
    assert apply_transform(x, back).values.tobytes() == apply_transform(x, graph).values.tobytes()
    assert back.kind == graph.kind


def test_graph_builder_recipe():
    g = graph_from_dict({"builder": "multiwavelet", "depth": 2, "channels": 4, "windows": [3, {"boxcar": 2}]})
    assert g.depth == 2 and g.root.stage.windows[0].n == 3
    assert np.array_equal(g.nodes()[1].stage.windows[0].g, np.ones(5))


def test_feature_csv_header(tmp_path):
    g = build_wavelet_graph(2)
    fv = apply_transform(np.random.default_rng(14).random((2, 16)), g)
    fv.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert len(header) == fv.values.shape[-1] == 8 + 4 + 4
    assert header[0] == "c1@3.14159[0]" and header[-1] == "c0@0/c1@3.14159[3]"
    assert len(lines) == 3
