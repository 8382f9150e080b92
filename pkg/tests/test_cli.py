import json
import math

import pytest

from vortexmf import cli
from vortexmf.schemas.results import RunArtifact
from vortexmf.schemas.run import BubbleConfig


def _run(*argv):
    return cli.main([str(a) for a in argv])


def test_bubble_writes_artifact_and_profile(tmp_path):
    out = tmp_path / "bubble.json"
    assert _run("bubble", "--alpha", 0, "--t0", 0, "--out", out, "--no-store") == 0
    artifact = RunArtifact.load(out)
    assert artifact.command == "bubble" and artifact.exit_code == 0
    assert math.isclose(artifact.payload["mass"], 8.0 * math.pi, rel_tol=1e-6)
    assert artifact.wall_time is not None
    assert (tmp_path / "bubble_profile.csv").is_file()


def test_artifact_prints_to_stdout_without_out(capsys):
    assert _run("bubble", "--alpha", 0.5, "--no-store") == 0
    data = json.loads(capsys.readouterr().out)
    assert data["command"] == "bubble"
    assert data["config"]["alpha"] == 0.5


def test_artifacts_are_deterministic(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    for path in (first, second):
        assert _run("bubble", "--alpha", -0.5, "--t0", 0.5, "--out", path, "--no-store") == 0
    a, b = RunArtifact.load(first), RunArtifact.load(second)
    assert a.to_json(include_wall_time=False) == b.to_json(include_wall_time=False)


def test_cvp_reports_oracle_errors(tmp_path):
    out = tmp_path / "cvp.json"
    code = _run("cvp", "--mesh", "disk:257", "--sigma", -0.5, "--lambda", 2.0 * math.pi,
                "--method", "newton", "--out", out, "--no-store")
    assert code == 0
    payload = RunArtifact.load(out).payload
    assert payload["status"] == "converged"
    assert payload["oracle"]["psi_sup_error"] < 1e-3
    assert set(payload["ball_masses"]) == {"0.1", "0.01"}
    assert (tmp_path / "cvp_psi.csv").is_file()


def test_cvp_sweep_writes_samples(tmp_path):
    out = tmp_path / "sweep.json"
    code = _run("cvp", "--mesh", "disk:257", "--lambda-grid", "3.14:12.56:4", "--method", "newton",
                "--out", out, "--no-store")
    assert code == 0
    payload = RunArtifact.load(out).payload
    assert len(payload["samples"]) == 4
    assert payload["branch_end"] is None
    assert (tmp_path / "sweep_samples.csv").is_file()


def test_mvp_below_uniform_exits_two(tmp_path):
    out = tmp_path / "mvp.json"
    assert _run("mvp", "--mesh", "disk:257", "--energy", 0.0, "--out", out, "--no-store") == 2
    assert RunArtifact.load(out).status == "below_uniform"


def test_config_file_with_flag_override(tmp_path):
    config = tmp_path / "run.env"
    config.write_text("MESH=disk:257\nSIGMA=-0.5\nLAM=3.0\nMETHOD=newton\n", encoding="utf-8")
    out = tmp_path / "cvp.json"
    assert _run("cvp", "--config", config, "--sigma", 0.0, "--out", out, "--no-store") == 0
    artifact = RunArtifact.load(out)
    assert artifact.config["sigma"] == 0.0
    assert artifact.config["lam"] == 3.0
    assert artifact.config["solver"]["method"] == "newton"
    assert artifact.provenance is not None


def test_configuration_errors_exit_one(tmp_path):
    assert _run("cvp", "--mesh", "disk:257", "--no-store") == 1
    assert _run("cvp", "--mesh", "torus:3", "--lambda", 1.0, "--no-store") == 1
    assert _run("cvp", "--config", tmp_path / "missing.env", "--no-store") == 1
    config = tmp_path / "bad.env"
    config.write_text("MESH=disk:257\nLAM=1.0\nCOLOUR=blue\n", encoding="utf-8")
    assert _run("cvp", "--config", config, "--no-store") == 1
    assert _run("bubble", "--alpha", -2.0, "--no-store") == 1


def test_usage_errors_exit_one():
    with pytest.raises(SystemExit) as exc:
        _run("cvp", "--bogus")
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        _run("unknown-command")
    assert exc.value.code == 1


def test_internal_errors_exit_three(monkeypatch):
    def boom(config, run):
        raise RuntimeError("boom")

    monkeypatch.setitem(cli.COMMANDS, "bubble", (BubbleConfig, boom))
    assert _run("bubble", "--alpha", 0.0, "--no-store") == 3


def test_mesh_command(tmp_path):
    out = tmp_path / "mesh.json"
    assert _run("mesh", "--mesh", "grid:1x1:1/8", "--field", "green", "--out", out, "--no-store") == 0
    payload = RunArtifact.load(out).payload
    assert payload["n_nodes"] == 81
    assert math.isclose(payload["weights_sum"], 1.0)
    assert (tmp_path / "mesh_green.csv").is_file()


def test_diagnose_planted_and_manifest(tmp_path):
    out = tmp_path / "flat.json"
    manifest_dir = tmp_path / "family"
    assert _run("diagnose", "--plant", "flat", "--sigma", 0.0, "--write-manifest", manifest_dir,
                "--out", out, "--no-store") == 0
    payload = RunArtifact.load(out).payload
    assert payload["report"]["case"] == "none"
    assert payload["report"]["regime"] == "no-blowup"
    assert payload["sup_plus_cinf"]["bounded"]

    again = tmp_path / "again.json"
    assert _run("diagnose", "--family", manifest_dir / "family_manifest.json", "--out", again, "--no-store") == 0
    artifact = RunArtifact.load(again)
    assert artifact.provenance is not None
    assert artifact.payload["report"]["members"] == 4


def test_validate_replays_an_artifact(tmp_path):
    recorded = tmp_path / "bubble.json"
    assert _run("bubble", "--alpha", 0.0, "--out", recorded, "--no-store") == 0
    out = tmp_path / "replay.json"
    assert _run("validate", "--artifact", recorded, "--out", out, "--no-store") == 0
    assert RunArtifact.load(out).payload["reproduced"] is True


def test_validate_selected_groups(tmp_path):
    out = tmp_path / "validate.json"
    code = _run("validate", "--only", "closed_forms,asymptote", "--quick", "--emit-plot-data",
                "--out", out, "--no-store")
    assert code == 0
    payload = RunArtifact.load(out).payload
    assert payload["groups"] == {"closed_forms": True, "asymptote": True}
    assert (tmp_path / "plot_data" / "S_E_asymptote.csv").is_file()


def test_runs_are_recorded_and_listed(tmp_path, capsys):
    assert _run("bubble", "--alpha", 0.25, "--out", tmp_path / "stored.json") == 0
    capsys.readouterr()
    assert _run("runs", "--limit", 5, "--command-name", "bubble") == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows and rows[0]["command"] == "bubble"
    assert rows[0]["output_path"] == str(tmp_path / "stored.json")
