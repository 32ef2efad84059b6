import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from cvspec import io
from cvspec.cli import EXIT_CHECK, EXIT_OK, EXIT_USAGE, main
from cvspec.learn import load_params
from cvspec.transform import apply_transform, build_wavelet_graph, identity_graph, save_graph


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def delta_cfg(tmp_path):
    return write(tmp_path / "delta.ini", "[process]\nkind = filtered_white_noise\ntaps = 1.0\nlength = 64\nseed = 7\n")


def read_csv(path, header=False):
    return np.loadtxt(path, delimiter=",", ndmin=2, skiprows=int(header))


def test_gen_delta_filter_reproduces_noise(tmp_path, delta_cfg):
    out = tmp_path / "gen"
    assert main(["gen", "--config", delta_cfg, "--count", "3", "--out", str(out)]) == EXIT_OK
    for i in range(3):
        x = io.read_signal(out / f"signal_{i:04d}.csv")
        assert x.size == 64
        np.testing.assert_array_equal(x, np.random.default_rng([7, i]).standard_normal(64))
    assert (out / "manifest.json").exists()


def test_gen_is_byte_reproducible(tmp_path, delta_cfg):
    for d in ("a", "b"):
        main(["gen", "--config", delta_cfg, "--format", "bin", "--out", str(tmp_path / d), "--threads", "2"])
    a = (tmp_path / "a" / "signal_0000.spw").read_bytes()
    assert a == (tmp_path / "b" / "signal_0000.spw").read_bytes()
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["outputs"] == mb["outputs"]


def test_gen_seed_override(tmp_path, delta_cfg):
    main(["gen", "--config", delta_cfg, "--seed", "3", "--out", str(tmp_path)])
    x = io.read_signal(tmp_path / "signal_0000.csv")
    np.testing.assert_array_equal(x, np.random.default_rng([3, 0]).standard_normal(64))


def test_spectrum_zero_process(tmp_path):
    cfg = write(tmp_path / "z.ini", "[process]\nkind = filtered_white_noise\ntaps = 0.0\nlength = 8\n")
    out = tmp_path / "s"
    code = main(["spectrum", "--config", cfg, "--estimator", "both", "--n", "8", "--trials", "10",
                 "--channels", "12", "--out", str(out)])
    assert code == EXIT_OK
    for name in ("absolute_spectrum.csv", "power_spectrum.csv"):
        rows = read_csv(out / name)
        assert rows.shape == (3, 12)
        assert np.all(rows[1] == 0)


def test_transform_identity_round_trip(tmp_path):
    x = np.random.default_rng(0).standard_normal(20)
    io.write_signal(tmp_path / "x.csv", x)
    save_graph(identity_graph(), tmp_path / "g.json")
    assert main(["transform", "--signal", str(tmp_path / "x.csv"), "--graph", str(tmp_path / "g.json"),
                 "--out", str(tmp_path / "o")]) == EXIT_OK
    np.testing.assert_array_equal(read_csv(tmp_path / "o" / "features.csv", header=True)[0], x)


def test_transform_matches_library(tmp_path):
    x = np.random.default_rng(1).random(64)
    io.write_signal(tmp_path / "x.spw", x, "bin")
    g = build_wavelet_graph(3)
    save_graph(g, tmp_path / "g.json")
    main(["transform", "--signal", str(tmp_path / "x.spw"), "--graph", str(tmp_path / "g.json"), "--out", str(tmp_path)])
    feats = read_csv(tmp_path / "features.csv", header=True)[0]
    np.testing.assert_array_equal(feats, apply_transform(x, g).values)


@pytest.fixture
def toy_data(tmp_path):
    lo = write(tmp_path / "lo.ini", "[process]\nkind = filtered_white_noise\ntaps = 0.1\nlength = 32\nnoise = poisson\nnoise_scale = 2\n")
    hi = write(tmp_path / "hi.ini", "[process]\nkind = filtered_white_noise\ntaps = 1.0\nlength = 32\nnoise = poisson\nnoise_scale = 2\n")
    data = tmp_path / "data"
    assert main(["dataset", "--class", f"hi={hi}", "--class", f"lo={lo}", "--count", "20", "--seed", "1",
                 "--out", str(data)]) == EXIT_OK
    save_graph(build_wavelet_graph(2), tmp_path / "g.json")
    return data, str(tmp_path / "g.json")


def test_train_and_eval(tmp_path, toy_data):
    data, graph = toy_data
    out = tmp_path / "run"
    assert main(["train", "--data", str(data), "--graph", graph, "--lr", "0.2", "--epochs", "60",
                 "--batch-size", "8", "--out", str(out)]) == EXIT_OK
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["train_accuracy"] == 1.0
    assert metrics["classes"] == ["hi", "lo"]
    hist = (out / "history.csv").read_text().splitlines()
    assert hist[0] == "epoch,loss,accuracy" and len(hist) == 61
    ev = tmp_path / "ev"
    assert main(["eval", "--data", str(data), "--graph", graph, "--params", str(out / "params.spwp"),
                 "--out", str(ev)]) == EXIT_OK
    assert json.loads((ev / "metrics.json").read_text())["accuracy"] == metrics["train_accuracy"]
    assert (ev / "manifest.json").exists()


def test_train_zero_lr_keeps_taps(tmp_path, toy_data):
    data, graph = toy_data
    out = tmp_path / "run"
    cfg = write(tmp_path / "t.ini", "[train]\nlearning_rate = 0\nepochs = 2\nmode = scales_only\n")
    assert main(["train", "--data", str(data), "--graph", graph, "--train-config", cfg, "--out", str(out)]) == EXIT_OK
    m = json.loads((out / "metrics.json").read_text())
    assert m["taps_checksum_before"] == m["taps_checksum_after"]
    assert m["mode"] == "scales_only" and m["parameter_counts"]["scales"] == 4
    p = load_params(out / "params.spwp")
    assert not np.any(p.arrays["classifier/W"])


def test_gradcheck_exit_codes(tmp_path, capsys):
    assert main(["gradcheck", "--out", str(tmp_path / "ok")]) == EXIT_OK
    assert (tmp_path / "ok" / "gradcheck.txt").read_text().splitlines()[-1] == "PASS"
    assert main(["gradcheck", "--inject-bug", "--out", str(tmp_path / "bad")]) == EXIT_CHECK
    text = capsys.readouterr().out
    assert "worst parameter:" in text and "FAIL" in text


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus", "--out", str(tmp_path)])
    assert exc.value.code == EXIT_USAGE
    assert main(["gen", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("cvspec") is None, reason="console script not installed")
def test_console_script(tmp_path, delta_cfg):
    r = subprocess.run(["cvspec", "gen", "--config", delta_cfg, "--out", str(tmp_path)], capture_output=True)
    assert r.returncode == 0
    r = subprocess.run([sys.executable, "-m", "cvspec.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
