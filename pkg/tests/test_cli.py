"""
Fault-injection checks of the command-line exit-code contract:
truncated JSON, wrong outcome counts, corrupt experiment configs,
non-convergence and partially failed sweeps.
"""
import json

import numpy as np
import pandas as pd
import pytest

import cli
import simulate
from errors import InvalidState


def _write(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return str(path)


@pytest.fixture
def trine_files(tmp_path):
    pom = tmp_path / "trine.json"
    assert cli.main(["pom-build", "--kind", "trine", "--out", str(pom)]) == cli.EXIT_OK
    counts = _write(tmp_path / "counts.json", {"counts": [6, 2, 1], "total": 9})
    return str(pom), counts


# ---------- pom-info / pom-build ----------
def test_pom_info_trine(trine_files, capsys):
    pom, _ = trine_files
    assert cli.main(["pom-info", pom]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "K = 3" in out
    assert "n_>0 = 3 of 4: INCOMPLETE" in out


def test_pom_info_homodyne_settings(tmp_path, capsys):
    settings = tmp_path / "settings.json"
    assert cli.main(["pom-build", "--kind", "homodyne", "--dim", "4", "--settings-only",
                     "--out", str(settings)]) == cli.EXIT_OK
    assert cli.main(["pom-info", str(settings)]) == cli.EXIT_OK
    assert "n_>0 = 16 of 16: COMPLETE" in capsys.readouterr().out


def test_pom_info_missing_file(tmp_path):
    assert cli.main(["pom-info", str(tmp_path / "missing.json")]) == cli.EXIT_INPUT


def test_pom_info_writes_audit(trine_files, tmp_path, capsys):
    pom, _ = trine_files
    assert cli.main(["pom-info", pom, "--report-dir", str(tmp_path / "audit")]) == cli.EXIT_OK
    assert "audit: 1 issues" in capsys.readouterr().out
    report = json.loads((tmp_path / "audit" / "audit_results.json").read_text(encoding="utf-8"))
    assert report["checks"]["unmeasured_operator_directions"]["count"] == 1


# ---------- reconstruct ----------
def test_reconstruct_writes_estimate(trine_files, tmp_path, capsys):
    pom, counts = trine_files
    out = tmp_path / "est.json"
    code = cli.main(["reconstruct", pom, counts, "--lambda", "1e-4", "--out", str(out),
                     "--report-dir", str(tmp_path / "audit")])
    assert code == cli.EXIT_OK
    rec = json.loads(out.read_text(encoding="utf-8"))
    assert rec["converged"] is True
    assert rec["estimator"]["dim"] == 2
    stdout = capsys.readouterr().out
    assert "Bloch: (" in stdout
    assert (tmp_path / "audit" / "audit_report.md").exists()


def test_reconstruct_truncated_counts(trine_files, tmp_path):
    pom, _ = trine_files
    bad = tmp_path / "bad.json"
    bad.write_text('{"counts": [6, 2', encoding="utf-8")
    assert cli.main(["reconstruct", pom, str(bad), "--out", str(tmp_path / "x.json")]) == cli.EXIT_INPUT


def test_reconstruct_wrong_outcome_count(trine_files, tmp_path):
    pom, _ = trine_files
    counts = _write(tmp_path / "c4.json", {"counts": [6, 2, 1, 0]})
    assert cli.main(["reconstruct", pom, counts, "--out", str(tmp_path / "x.json")]) == cli.EXIT_INPUT


def test_reconstruct_negative_lambda(trine_files, tmp_path):
    pom, counts = trine_files
    code = cli.main(["reconstruct", pom, counts, "--lambda", "-1", "--out", str(tmp_path / "x.json")])
    assert code == cli.EXIT_INPUT


def test_reconstruct_not_converged(trine_files, tmp_path):
    pom, counts = trine_files
    out = tmp_path / "x.json"
    code = cli.main(["reconstruct", pom, counts, "--max-iters", "2", "--out", str(out)])
    assert code == cli.EXIT_NOT_CONVERGED
    assert json.loads(out.read_text(encoding="utf-8"))["converged"] is False


def test_reconstruct_large_lambda_converges(tmp_path):
    pom = tmp_path / "trine.json"
    assert cli.main(["pom-build", "--kind", "trine", "--out", str(pom)]) == cli.EXIT_OK
    counts = _write(tmp_path / "counts.json", {"counts": [4, 3, 3]})
    code = cli.main(["reconstruct", str(pom), counts, "--lambda", "10", "--out", str(tmp_path / "x.json")])
    assert code == cli.EXIT_OK


# ---------- trine-demo ----------
def test_trine_demo(capsys):
    assert cli.main(["trine-demo"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "standard ME: INFEASIBLE" in out
    assert "MLME Bloch:" in out


# ---------- sweeps ----------
def _sweep_config(tmp_path, **kw):
    rec = {"dim_true": 2, "seed": 3, "pom_spec": {"kind": "trine"}, "copies": 500, "trials": 2,
           "lambdas": [0.1, 1.0]}
    rec.update(kw)
    return _write(tmp_path / "exp.json", rec)


def test_sweep_lambda(tmp_path, capsys):
    out_csv = tmp_path / "sweep.csv"
    logs = tmp_path / "logs"
    code = cli.main(["sweep", _sweep_config(tmp_path), str(out_csv), "--kind", "lambda",
                     "--manifest-dir", str(logs)])
    assert code == cli.EXIT_OK
    df = pd.read_csv(out_csv)
    assert df["key"].tolist() == [0.1, 1.0]
    manifests = list(logs.glob("run_report_*.json"))
    assert len(manifests) == 1
    manifest = json.loads(manifests[0].read_text(encoding="utf-8"))
    assert [s["step"] for s in manifest["steps"]] == ["LOAD_CONFIG", "SWEEP", "WRITE_CSV"]
    assert manifest["summary"]["exit_code"] == cli.EXIT_OK


def test_sweep_alias_dimension(tmp_path):
    cfg = _sweep_config(tmp_path, pom_spec={"kind": "homodyne"}, dim_true=3, noiseless=True, trials=1,
                        recon_dims=[2, 3])
    out_csv = tmp_path / "dims.csv"
    code = cli.main(["sweep-dimension", cfg, str(out_csv), "--manifest-dir", str(tmp_path / "logs")])
    assert code == cli.EXIT_OK
    df = pd.read_csv(out_csv)
    assert df["key"].tolist() == [2, 3]
    assert "truncation_distance" in df.columns


@pytest.mark.parametrize(
    "content",
    [
        '{"dim_true": 2, "seed": ',
        '{"dim_true": 2}',
        '{"dim_true": 2, "seed": 1, "copies": 0}',
        '{"dim_true": 2, "seed": 1, "pom_spec": {"kind": "trine"}, "wavelength": 3}',
    ],
)
def test_sweep_corrupt_config(tmp_path, content):
    cfg = tmp_path / "exp.json"
    cfg.write_text(content, encoding="utf-8")
    logs = tmp_path / "logs"
    code = cli.main(["sweep", str(cfg), str(tmp_path / "s.csv"), "--kind", "lambda",
                     "--manifest-dir", str(logs)])
    assert code == cli.EXIT_INPUT
    manifest = json.loads(next(logs.glob("run_report_*.json")).read_text(encoding="utf-8"))
    assert manifest["steps"][0]["status"] == "failed"
    assert not (tmp_path / "s.csv").exists()


def test_sweep_partial_failure(tmp_path, monkeypatch):
    original = simulate.mlme_reconstruct

    def flaky(data, pom, cfg, **kw):
        if cfg.lam == 1.0:
            raise InvalidState("injected failure")
        return original(data, pom, cfg, **kw)

    monkeypatch.setattr(simulate, "mlme_reconstruct", flaky)
    out_csv = tmp_path / "sweep.csv"
    code = cli.main(["sweep-lambda", _sweep_config(tmp_path), str(out_csv),
                     "--manifest-dir", str(tmp_path / "logs")])
    assert code == cli.EXIT_PARTIAL
    df = pd.read_csv(out_csv)
    assert df.loc[df["key"] == 1.0, "failures"].item() == 2


def test_sweep_seed_flag_overrides_config(tmp_path):
    base = tmp_path / "a"
    base.mkdir()
    cfg = _write(base / "exp.json", {"dim_true": 2, "seed": 11, "pom_spec": {"kind": "trine"},
                                      "copies": 300, "trials": 1, "lambdas": [0.1]})
    assert cli.main(["sweep-lambda", cfg, str(base / "ref.csv"), "--manifest-dir", str(base / "logs")]) == cli.EXIT_OK

    other = tmp_path / "b"
    other.mkdir()
    no_seed = _write(other / "exp.json", {"dim_true": 2, "pom_spec": {"kind": "trine"},
                                          "copies": 300, "trials": 1, "lambdas": [0.1]})
    logs = other / "logs"
    code = cli.main(["sweep-lambda", no_seed, str(other / "seeded.csv"), "--seed", "11", "--manifest-dir", str(logs)])
    assert code == cli.EXIT_OK
    pd.testing.assert_frame_equal(pd.read_csv(base / "ref.csv"), pd.read_csv(other / "seeded.csv"))
    manifest = json.loads(next(logs.glob("run_report_*.json")).read_text(encoding="utf-8"))
    assert manifest["seed_override"] == 11


def test_sweep_unexpected_error_is_recorded(tmp_path, monkeypatch):
    def broken(cfg):
        raise np.linalg.LinAlgError("eigenvalues did not converge")

    monkeypatch.setattr(cli, "lambda_sweep", broken)
    logs = tmp_path / "logs"
    out_csv = tmp_path / "s.csv"
    code = cli.main(["sweep-lambda", _sweep_config(tmp_path), str(out_csv), "--manifest-dir", str(logs)])
    assert code == cli.EXIT_INPUT
    manifest = json.loads(next(logs.glob("run_report_*.json")).read_text(encoding="utf-8"))
    assert manifest["steps"][-1]["step"] == "SWEEP"
    assert manifest["steps"][-1]["error"]["type"] == "LinAlgError"
    assert manifest["summary"]["exit_code"] == cli.EXIT_INPUT
    assert not out_csv.exists()
