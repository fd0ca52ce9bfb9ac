import json

import numpy as np
import pytest

from cdpa import SimulationConfig, generate_setup, write_matrix_binary
from cdpa.cli import main
from cdpa._linalg import random_orthonormal


@pytest.fixture()
def bench_files(tmp_path):
    cfg = SimulationConfig(
        setup=1, theta_deg=15.0, p1=60, n=150, noise_var=0.5, seed=42
    )
    y1, y2, truth = generate_setup(cfg)
    p1 = tmp_path / "y1.cdpm"
    p2 = tmp_path / "y2.cdpm"
    write_matrix_binary(p1, y1.values)
    write_matrix_binary(p2, y2.values)
    return str(p1), str(p2), truth


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


# ----------------------------------------------------------------- ranks


def test_ranks_identical_files(tmp_path, capsys):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 4)) @ rng.standard_normal((4, 200))
    x += 0.05 * rng.standard_normal(x.shape)
    path = tmp_path / "y.cdpm"
    write_matrix_binary(path, x)
    code, out, _ = _run(capsys, ["ranks", str(path), str(path)])
    assert code == 0
    payload = json.loads(out)
    assert payload["r1"] == payload["r2"] == 4
    assert payload["screen"] is True
    assert payload["r12"] == payload["r1"]


def test_ranks_pure_noise_screen_false(tmp_path, capsys):
    rng = np.random.default_rng(1)
    a = tmp_path / "a.cdpm"
    b = tmp_path / "b.cdpm"
    write_matrix_binary(a, rng.standard_normal((60, 200)))
    write_matrix_binary(b, rng.standard_normal((70, 200)))
    code, out, _ = _run(capsys, ["ranks", str(a), str(b)])
    assert code == 0
    payload = json.loads(out)
    assert payload["r12"] == 0
    assert payload["screen"] is False


def test_ranks_benchmark_files(tmp_path, capsys):
    cfg = SimulationConfig(
        setup=1, theta_deg=15.0, p1=300, n=300, noise_var=1.0, seed=11
    )
    y1, y2, _ = generate_setup(cfg)
    p1 = tmp_path / "y1.cdpm"
    p2 = tmp_path / "y2.cdpm"
    write_matrix_binary(p1, y1.values)
    write_matrix_binary(p2, y2.values)
    code, out, _ = _run(capsys, ["ranks", str(p1), str(p2), "--no-center"])
    assert code == 0
    payload = json.loads(out)
    assert (payload["r1"], payload["r2"], payload["r12"]) == (5, 5, 5)


# ------------------------------------------------------------- decompose


def test_decompose_writes_outputs_and_manifest(bench_files, tmp_path, capsys):
    p1, p2, _ = bench_files
    out_dir = tmp_path / "run"
    code, out, _ = _run(
        capsys,
        [
            "decompose", p1, p2,
            "--ranks", "5,5,5",
            "--no-center",
            "--seed", "7",
            "--out", str(out_dir),
        ],
    )
    assert code == 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    stdout_manifest = json.loads(out)
    assert manifest == stdout_manifest
    for name in manifest["artifacts"].values():
        assert (out_dir / name).exists()
    assert manifest["ranks"] == [5, 5, 5]
    assert manifest["permutation"]["method"] == "identity"
    assert manifest["sign"] in (1, -1)
    assert 0.0 < manifest["explained_variance"] <= 1.5
    assert 0.0 < manifest["delta_theta"] <= 1.0


def test_decompose_identical_files_full_commonality(tmp_path, capsys):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((40, 5)) @ rng.standard_normal((5, 120))
    path = tmp_path / "y.cdpm"
    write_matrix_binary(path, x)
    out_dir = tmp_path / "same"
    code, out, _ = _run(
        capsys,
        ["decompose", str(path), str(path), "--ranks", "5,5,5", "--no-center",
         "--out", str(out_dir)],
    )
    assert code == 0
    manifest = json.loads(out)
    assert abs(manifest["explained_variance"] - 1.0) < 1e-6


def test_decompose_deterministic_manifest(bench_files, tmp_path, capsys):
    p1, p2, _ = bench_files
    manifests = []
    for name in ("a", "b"):
        out_dir = tmp_path / name
        code, out, _ = _run(
            capsys,
            ["decompose", p1, p2, "--ranks", "5,5,5", "--no-center",
             "--seed", "3", "--out", str(out_dir)],
        )
        assert code == 0
        text = (out_dir / "manifest.json").read_text()
        data = json.loads(text)
        data.pop("timings")
        manifests.append(json.dumps(data, sort_keys=True))
    assert manifests[0] == manifests[1]


def test_decompose_sign_auto_positive_association(bench_files, tmp_path, capsys):
    p1, p2, _ = bench_files
    code, out, _ = _run(
        capsys,
        ["decompose", p1, p2, "--ranks", "5,5,5", "--no-center", "--sign", "auto",
         "--out", str(tmp_path / "signed")],
    )
    assert code == 0
    assert json.loads(out)["sign"] == 1


def test_decompose_provided_permutation(bench_files, tmp_path, capsys):
    p1, p2, _ = bench_files
    perm_file = tmp_path / "perm.json"
    perm_file.write_text(json.dumps(list(np.random.default_rng(3).permutation(60).tolist())))
    code, out, _ = _run(
        capsys,
        ["decompose", p1, p2, "--ranks", "5,5,5", "--no-center",
         "--perm", str(perm_file), "--out", str(tmp_path / "perm_run")],
    )
    assert code == 0
    manifest = json.loads(out)
    assert manifest["permutation"]["method"] == "provided"
    assert sorted(manifest["permutation"]["indices"]) == list(range(60))


def test_decompose_requires_rank_mode(bench_files, tmp_path, capsys):
    p1, p2, _ = bench_files
    code, _, err = _run(
        capsys, ["decompose", p1, p2, "--out", str(tmp_path / "x")]
    )
    assert code == 2
    assert "ranks" in err


def test_decompose_dimension_mismatch_is_input_error(tmp_path, capsys):
    rng = np.random.default_rng(4)
    a = tmp_path / "a.cdpm"
    b = tmp_path / "b.cdpm"
    write_matrix_binary(a, rng.standard_normal((20, 50)))
    write_matrix_binary(b, rng.standard_normal((20, 60)))
    code, _, err = _run(
        capsys,
        ["decompose", str(a), str(b), "--ranks", "2,2,1", "--out", str(tmp_path / "x")],
    )
    assert code == 2
    assert "sample counts" in err


def test_decompose_numerical_failure_exit_code(tmp_path, capsys):
    rng = np.random.default_rng(5)
    a = tmp_path / "a.cdpm"
    write_matrix_binary(a, rng.standard_normal((5, 5)))
    code, _, err = _run(
        capsys,
        ["decompose", str(a), str(a), "--ranks", "3,3,2", "--no-center",
         "--out", str(tmp_path / "x")],
    )
    assert code == 3
    assert "numerical failure" in err


def test_missing_input_file_exit_code(tmp_path, capsys):
    code, _, err = _run(
        capsys,
        ["ranks", str(tmp_path / "missing1.csv"), str(tmp_path / "missing2.csv")],
    )
    assert code == 2


# ---------------------------------------------------------------- oracle


def test_oracle_values(capsys):
    code, out, _ = _run(capsys, ["oracle", "--theta", "0,15,30,45,60,75"])
    assert code == 0
    values = json.loads(out)["explained_variance"]
    want = [0.890, 0.479, 0.213, 0.126, 0.092, 0.088]
    for theta, value in zip(("0", "15", "30", "45", "60", "75"), want):
        assert abs(values[theta] - value) < 2e-3


def test_oracle_out_of_sweep_warns(capsys):
    code, out, err = _run(capsys, ["oracle", "--theta", "90"])
    assert code == 0
    assert "outside the standard sweep" in err
    assert "90" in json.loads(out)["explained_variance"]


# ----------------------------------------------------------------- match


def test_match_planted_channels(tmp_path, capsys):
    rng = np.random.default_rng(6)
    q = random_orthonormal(rng, 8, 3) * np.array([3.0, 2.0, 1.0])
    scramble = rng.permutation(8)
    b1 = tmp_path / "b1.cdpm"
    b2 = tmp_path / "b2.cdpm"
    write_matrix_binary(b1, q)
    write_matrix_binary(b2, q[scramble])
    out_file = tmp_path / "perm.json"
    code, out, _ = _run(
        capsys, ["match", str(b1), str(b2), "--method", "dspfp", "--out", str(out_file)]
    )
    assert code == 0
    payload = json.loads(out)
    assert abs(payload["objective"] - 3.0) < 1e-8
    saved = json.loads(out_file.read_text())
    assert sorted(saved) == list(range(8))

    code2, out2, _ = _run(capsys, ["match", str(b1), str(b2), "--method", "exhaustive"])
    assert code2 == 0
    assert abs(json.loads(out2)["objective"] - 3.0) < 1e-10


# -------------------------------------------------------------- simulate


def test_simulate_single_replication_sweep(tmp_path, capsys):
    code, out, _ = _run(
        capsys,
        [
            "simulate", "--setup", "1", "--theta", "15,45", "--p1", "40",
            "--noise", "0.5", "--n", "80", "--reps", "1",
            "--out", str(tmp_path / "sim"),
        ],
    )
    assert code == 0
    payload = json.loads(out)
    oracles = {c["theta_deg"]: c["oracle_explained"] for c in payload["cells"]}
    assert abs(oracles[15.0] - 0.479) < 2e-3
    assert abs(oracles[45.0] - 0.126) < 2e-3
    assert all(c["replications"] == 1 for c in payload["cells"])
    assert (tmp_path / "sim" / "replications.csv").exists()
    assert (tmp_path / "sim" / "aggregate.json").exists()


def test_simulate_setup2_autoset_p2(tmp_path, capsys):
    code, out, _ = _run(
        capsys,
        [
            "simulate", "--setup", "2", "--theta", "30", "--p1", "50",
            "--noise", "1.0", "--n", "60", "--reps", "1",
            "--out", str(tmp_path / "sim2"),
        ],
    )
    assert code == 0
    assert json.loads(out)["cells"][0]["p2"] == 900


def test_simulate_deterministic(tmp_path, capsys):
    argv = [
        "simulate", "--setup", "1", "--theta", "15", "--p1", "30",
        "--noise", "0.5", "--n", "60", "--reps", "3", "--seed", "5",
    ]
    _, out_a, _ = _run(capsys, argv + ["--out", str(tmp_path / "a")])
    _, out_b, _ = _run(capsys, argv + ["--out", str(tmp_path / "b")])
    assert out_a == out_b
    assert (tmp_path / "a" / "replications.csv").read_text() == (
        tmp_path / "b" / "replications.csv"
    ).read_text()


# -------------------------------------------------------------- bootstrap


def test_bootstrap_command(bench_files, capsys):
    p1, p2, _ = bench_files
    code, out, _ = _run(
        capsys,
        [
            "bootstrap", p1, p2, "--ranks", "5,5,5", "--replicates", "100",
            "--seed", "1", "--no-center",
        ],
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["lower"] <= payload["upper"]
    assert payload["replicates"] == 100


# ------------------------------------------------------------------ misc


def test_threads_env_default(monkeypatch):
    from cdpa.cli import _default_threads

    monkeypatch.setenv("CDPA_THREADS", "3")
    assert _default_threads() == 3
    monkeypatch.delenv("CDPA_THREADS")
    assert _default_threads() == 1
