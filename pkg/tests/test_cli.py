import json
import subprocess
import sys

import numpy as np
import pytest

from deepl0 import cli, data_io


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def synth(tmp_path):
    out = tmp_path / "data"
    assert run("gen-data", "--m", 16, "--p", 32, "--n", 400, "--sparsity", 4, "--noise", 0.01,
               "--seed", 7, "--standardize", "--out", out) == 0
    return out


def test_gen_data_deterministic(tmp_path):
    dirs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run("gen-data", "--m", 64, "--p", 128, "--n", 1200, "--sparsity", 8,
                   "--noise", 0.01, "--seed", 7, "--out", out) == 0
        dirs.append(out)
    for f in ("samples.dl0m", "codes_true.dl0m", "dictionary.dl0m"):
        assert (dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes()
    X, fp = data_io.load_matrix(dirs[0] / "samples.dl0m", return_fingerprint=True)
    assert X.shape == (1200, 64) and fp


def test_solve_msparse_sparsity(tmp_path):
    out = tmp_path / "d"
    run("gen-data", "--m", 64, "--p", 128, "--n", 300, "--sparsity", 8, "--noise", 0.01,
        "--seed", 7, "--out", out)
    codes = tmp_path / "codes.dl0m"
    assert run("solve", "--data", out / "samples.dl0m", "--dict", out / "dictionary.dl0m",
               "--regime", "msparse", "--M", 32, "--iters", 10, "--out", codes) == 0
    A = data_io.load_codes(codes)
    assert A.shape == (300, 128)
    assert np.all(np.count_nonzero(A, axis=1) <= 32)


def test_solve_trace_is_monotone(synth, tmp_path):
    trace = tmp_path / "trace.csv"
    assert run("solve", "--data", synth / "samples.dl0m", "--dict", synth / "dictionary.dl0m",
               "--lam", 0.3, "--iters", 20, "--out", tmp_path / "c.dl0m", "--trace", trace) == 0
    lines = trace.read_text().splitlines()
    assert lines[0].startswith("# config ")
    assert lines[1] == "iter,mean_objective,max_objective"
    means = [float(line.split(",")[1]) for line in lines[2:]]
    assert all(b <= a * (1 + 1e-10) for a, b in zip(means, means[1:]))


def test_train_and_eval_pipeline(synth, tmp_path):
    codes = tmp_path / "opt.dl0m"
    run("solve", "--data", synth / "samples.dl0m", "--dict", synth / "dictionary.dl0m",
        "--regime", "msparse", "--M", 4, "--iters", 50, "--out", codes)
    ckpt, report = tmp_path / "enc.ckpt", tmp_path / "train.csv"
    assert run("train", "--data", synth / "samples.dl0m", "--targets", codes, "--dict",
               synth / "dictionary.dl0m", "--kind", "msparse", "--M", 4, "--epochs", 2,
               "--out", ckpt, "--report", report) == 0
    rows = report.read_text().splitlines()
    assert rows[1] == "epoch,loss,metric,sigma,seconds" and len(rows) == 4
    results = tmp_path / "results.csv"
    assert run("eval", "--checkpoint", ckpt, "--data", synth / "samples.dl0m",
               "--targets", codes, "--out", results) == 0
    lines = results.read_text().splitlines()
    assert lines[0] == "metric,value,n,config_hash"
    assert [l.split(",")[0] for l in lines[1:]] == ["prediction_error", "support_error"]
    assert float(lines[1].split(",")[1]) < 100.0


def test_train_l0reg_and_mlp(synth, tmp_path):
    codes = tmp_path / "opt.dl0m"
    run("solve", "--data", synth / "samples.dl0m", "--dict", synth / "dictionary.dl0m",
        "--lam", 0.3, "--iters", 50, "--out", codes)
    assert run("train", "--data", synth / "samples.dl0m", "--targets", codes, "--dict",
               synth / "dictionary.dl0m", "--lam", 0.3, "--epochs", 1, "--grad-clip", 30,
               "--out", tmp_path / "l0.ckpt") == 0
    assert run("train", "--data", synth / "samples.dl0m", "--targets", codes, "--kind", "mlp",
               "--p", 32, "--epochs", 1, "--out", tmp_path / "mlp.ckpt") == 0
    assert data_io.load_checkpoint(tmp_path / "mlp.ckpt").kind.value == "mlp"


def test_classification_and_clustering(tmp_path):
    out = tmp_path / "d"
    assert run("gen-data", "--m", 16, "--p", 30, "--n", 300, "--sparsity", 3, "--classes", 3,
               "--seed", 2, "--out", out) == 0
    for loss in ("classification", "clustering"):
        ckpt = tmp_path / f"{loss}.ckpt"
        assert run("train", "--data", out / "samples.dl0m", "--labels", out / "labels.dl0m",
                   "--dict", out / "dictionary.dl0m", "--kind", "msparse", "--M", 3,
                   "--loss", loss, "--classes", 3, "--epochs", 3, "--lr", 0.1,
                   "--out", ckpt) == 0
        assert run("eval", "--checkpoint", ckpt, "--data", out / "samples.dl0m",
                   "--labels", out / "labels.dl0m", "--metric", loss,
                   "--out", tmp_path / "r.csv") == 0
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert [l.split(",")[0] for l in lines[1:]] == ["classification_error", "clustering_error"]


def test_learn_dict(synth, tmp_path):
    path = tmp_path / "learned.dl0m"
    assert run("learn-dict", "--data", synth / "samples.dl0m", "--p", 32, "--epochs", 1,
               "--out", path) == 0
    d = data_io.load_dictionary(path)
    assert d.D.shape == (16, 32)


def test_gen_data_from_idx(tmp_path):
    r = np.random.default_rng(0)
    data_io.idx_write(tmp_path / "img.idx", r.integers(0, 256, (5, 28, 28)))
    data_io.idx_write(tmp_path / "lab.idx", np.arange(5), labels=True)
    assert run("gen-data", "--idx-images", tmp_path / "img.idx", "--idx-labels",
               tmp_path / "lab.idx", "--limit", 4, "--out", tmp_path / "o") == 0
    assert data_io.load_matrix(tmp_path / "o" / "samples.dl0m").shape == (4, 256)
    assert data_io.load_matrix(tmp_path / "o" / "labels.dl0m")[:, 0].tolist() == [0, 1, 2, 3]


def test_missing_flags_exit_2(capsys):
    assert run("gen-data", "--m", 4) == 2
    assert "--p" in capsys.readouterr().err
    assert run("solve", "--data", "x") == 2


def test_bad_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        run("solve", "--regime", "nope")
    assert exc.value.code == 2


def test_missing_file_exit_1(tmp_path, capsys):
    missing = tmp_path / "nope.dl0m"
    assert run("solve", "--data", missing, "--dict", missing) == 1
    assert str(missing) in capsys.readouterr().err


def test_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"m": 8, "p": 12, "n": 20, "sparsity": 2, "seed": 4}))
    assert run("gen-data", "--config", cfg, "--out", tmp_path / "a") == 0
    assert run("gen-data", "--config", cfg, "--n", 30, "--out", tmp_path / "b") == 0
    assert data_io.load_matrix(tmp_path / "a" / "samples.dl0m").shape == (20, 8)
    assert data_io.load_matrix(tmp_path / "b" / "samples.dl0m").shape == (30, 8)


def test_config_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"m": 8, "bogus": 1}))
    with pytest.raises(SystemExit) as exc:
        run("gen-data", "--config", cfg)
    assert exc.value.code == 2


def test_fingerprint_ignores_output_paths():
    a = cli.parse_args(["solve", "--data", "x", "--out", "a"])
    b = cli.parse_args(["solve", "--data", "x", "--out", "b", "--threads", "1"])
    c = cli.parse_args(["solve", "--data", "x", "--lam", "0.2"])
    assert cli.fingerprint(a) == cli.fingerprint(b) != cli.fingerprint(c)


def test_reproduce_small(tmp_path):
    args = ["reproduce", "--m", 8, "--p", 12, "--n-train", 200, "--n-test", 50, "--lam", 0.2,
            "--opt-iters", 50, "--epochs", 2, "--threads", 1]
    assert run(*args, "--out", tmp_path / "a.csv") == 0
    assert run(*args, "--out", tmp_path / "b.csv") == 0
    text = (tmp_path / "a.csv").read_text()
    assert text == (tmp_path / "b.csv").read_text()
    methods = [l.split(",")[0] for l in text.splitlines()[1:]]
    assert methods == ["iterative-2", "iterative-5", "iterative-10", "baseline",
                       "deep-untrained", "deep"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "deepl0", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0
    for cmd in ("gen-data", "learn-dict", "solve", "train", "eval", "reproduce"):
        assert cmd in proc.stdout
