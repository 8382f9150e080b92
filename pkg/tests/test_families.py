import json
import math

import numpy as np
import pytest

from vortexmf.blowup import case_three_window
from vortexmf.core.errors import ConfigurationError, DomainError
from vortexmf.domain import ScalarField, build_disk_mesh
from vortexmf.families import (
    MANIFEST_NAME,
    case_three_family,
    disk_family,
    flat_family,
    load_manifest,
    planted_family,
    write_manifest,
)
from vortexmf.io import read_field_csv, read_json, to_jsonable, write_field_csv, write_json, write_rows_csv


def test_disk_family_parameters():
    family = disk_family(-0.5, mesh="disk:513:log")
    assert len(family) == 7
    assert family.parameter == "lam"
    lams = family.column("lam")
    assert np.all(np.diff(lams) > 0)
    assert math.isclose(lams[-1], 4.0 * math.pi * (1.0 - 1e-7), rel_tol=1e-9)
    assert np.all(np.diff(family.column("peak_value")) > 0)


def test_case_three_family_rejects_mass_outside_window():
    lo, hi, _ = case_three_window(0.3)
    with pytest.raises(DomainError):
        case_three_family(0.3, lam_star=hi * 1.1)


def test_planted_family_names():
    family = planted_family("flat", sigma=-0.25)
    assert family.sigma == -0.25
    assert family.name.startswith("flat")
    with pytest.raises(ConfigurationError):
        planted_family("spiral")


def test_manifest_round_trip(tmp_path):
    family = flat_family(lam=2.0, sigma=-0.25, count=3, mesh="disk:257")
    path = write_manifest(family, tmp_path / "flat")
    assert path.name == MANIFEST_NAME
    manifest = read_json(path)
    assert [m["file"] for m in manifest["members"]] == ["member_000.csv", "member_001.csv", "member_002.csv"]

    loaded = load_manifest(path)
    assert len(loaded) == 3
    assert loaded.sigma == -0.25
    assert loaded.mesh_spec == family.mesh_spec
    for original, restored in zip(family, loaded):
        assert np.array_equal(original.v.values, restored.v.values)
        assert restored.alpha == original.alpha
        assert math.isclose(restored.lam, original.lam, rel_tol=1e-3)


def test_manifest_alpha_defaults_to_sigma_lam(tmp_path):
    family = flat_family(lam=2.0, sigma=-0.25, count=2, mesh="disk:257")
    path = write_manifest(family, tmp_path)
    data = read_json(path)
    for entry in data["members"]:
        entry.pop("alpha")
    path.write_text(json.dumps(data), encoding="utf-8")
    loaded = load_manifest(path)
    assert math.isclose(loaded.last.alpha, -0.25 * family.last.lam / (4.0 * math.pi))


def test_manifest_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_manifest(tmp_path / "missing.json")
    empty = write_json(tmp_path / "empty.json", {"sigma": 0.0, "mesh": "disk:64", "members": []})
    with pytest.raises(ConfigurationError):
        load_manifest(empty)
    bad = write_json(tmp_path / "bad.json", {"sigma": 0.0, "mesh": "disk:64", "members": [{"file": "x.csv"}]})
    with pytest.raises(ConfigurationError):
        load_manifest(bad)
    (tmp_path / "broken.json").write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_manifest(tmp_path / "broken.json")


def test_field_csv_checks_the_mesh(tmp_path):
    mesh = build_disk_mesh(64)
    field = ScalarField(mesh, mesh.r ** 2)
    path = write_field_csv(tmp_path / "field.csv", field)
    assert np.array_equal(read_field_csv(path, mesh).values, field.values)
    with pytest.raises(ConfigurationError):
        read_field_csv(path, build_disk_mesh(65))
    write_rows_csv(tmp_path / "other.csv", [{"a": 1.0, "b": 2.0}])
    with pytest.raises(ConfigurationError):
        read_field_csv(tmp_path / "other.csv", mesh)


def test_to_jsonable_handles_numpy_and_non_finite():
    data = to_jsonable({"a": np.float64(1.5), "b": np.arange(2), "c": float("inf"), "d": (np.bool_(True), math.nan)})
    assert data == {"a": 1.5, "b": [0, 1], "c": "inf", "d": [True, "nan"]}
