import json
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from app import geodesics
from app.api import commands
from app.divergence import defects
from app.main import main
from utility.presets import MAMA_MATRICES

EQUAL = [[0.3, 0.7], [0.6, 0.4]]
VERTEX_TARGET = {
    "command": "project",
    "project": {"vertices": MAMA_MATRICES, "target": MAMA_MATRICES[1]},
}


def write_config(tmp_path, payload: dict, name: str = "job.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def read_report(out) -> dict:
    return json.loads((out / "report.json").read_text(encoding="utf-8"))


def test_help_lists_presets(capsys):
    """Test that --help names every preset."""
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for name in ("figure-1", "figure-2", "mama", "bernoulli"):
        assert name in text


def test_mama_preset(tmp_path):
    """Test the worked example through the cli: defect and oracle agreement."""
    out = tmp_path / "mama"
    assert main(["--preset", "mama", "--out", str(out)]) == 0
    report = read_report(out)
    assert report["command"] == "divergence"
    defect = report["results"]["type1_pythagorean"]["integral"]
    assert defect == pytest.approx(-0.3578, abs=5e-4)
    assert report["checks"]["oracle"]
    assert report["tolerances"]["depth"] == 8
    assert report["artifacts"] == ["report.json"]
    second = [
        e
        for e in report["results"]["derivatives"]
        if e["family"] == "J" and e["problem"] == "second" and e["endpoint"] == 0
    ]
    assert len(second) == 1


def test_bernoulli_preset(tmp_path):
    """Test that the Bernoulli preset reports the three-way identity."""
    out = tmp_path / "bernoulli"
    assert main(["--preset", "bernoulli", "--out", str(out)]) == 0
    report = read_report(out)
    assert report["checks"]["bernoulli_identity"]
    assert report["checks"]["convexity"]
    derivative, defect, closed = report["results"]["bernoulli_identity"]
    assert derivative == pytest.approx(closed, abs=1e-12)
    assert defect == pytest.approx(closed, abs=1e-12)


def test_identical_matrices_give_zeros(tmp_path):
    """Test that three equal chains have zero divergences and defects."""
    config = write_config(
        tmp_path,
        {
            "command": "divergence",
            "divergence": {"matrices": [EQUAL] * 3, "oracle": False},
        },
    )
    out = tmp_path / "equal"
    assert main(["--config", config, "--out", str(out), "--depth", "4"]) == 0
    report = read_report(out)
    results = report["results"]
    assert all(v == 0.0 for v in results["divergences"].values())
    assert results["type1_pythagorean"]["pairwise"] == 0.0
    assert results["type2_pythagorean"]["pairwise"] == 0.0
    for entry in results["derivatives"]:
        assert entry["value"] == pytest.approx(0.0, abs=1e-14)
    assert report["config"]["depth"] == 4
    assert report["tolerances"]["depth"] == 4


def test_bernoulli_identity_needs_equal_rows(tmp_path):
    config = write_config(
        tmp_path,
        {
            "command": "divergence",
            "divergence": {
                "matrices": MAMA_MATRICES,
                "include_bernoulli_identity": True,
                "oracle": False,
            },
        },
    )
    assert main(["--config", config, "--out", str(tmp_path / "run")]) == 2


@pytest.mark.slow
def test_oracle_disagreement_exits_3_with_report(tmp_path, monkeypatch):
    """Test that an oracle mismatch still writes the report before failing."""

    def broken(*args, **kwargs):
        report = defects(*args, **kwargs)
        entries = [
            e.model_copy(update={"matches_oracle": False}) for e in report.derivatives
        ]
        return report.model_copy(update={"derivatives": entries})

    monkeypatch.setattr(commands, "defects", broken)
    out = tmp_path / "broken"
    assert main(["--preset", "mama", "--out", str(out)]) == 3
    assert read_report(out)["checks"]["oracle"] is False


@pytest.mark.parametrize("preset", ["figure-1", "figure-2"])
def test_figure_presets(tmp_path, preset):
    """Test that both figure fans complete and write sixteen curved paths."""
    out = tmp_path / preset
    assert main(["--preset", preset, "--out", str(out)]) == 0
    report = read_report(out)
    assert report["checks"] == {"paths_complete": True, "curved": True}
    paths = report["results"]["paths"]
    assert len(paths) == 16
    expected = [f"geodesic_{i:02d}.csv" for i in range(16)] + ["report.json"]
    assert sorted(report["artifacts"]) == expected
    frame = pd.read_csv(out / "geodesic_00.csv")
    assert list(frame.columns) == ["t", "r", "s", "dr", "ds", "energy"]
    assert frame["t"].iloc[0] == 0.0
    assert paths[0]["reason"] in ("t_max", "domain-exit")
    assert set(report["results"]["christoffel"]) == {
        "stated",
        "metric",
        "max_discrepancy",
        "agrees",
        "sign_only",
    }


def test_empty_directions_exit_2_without_files(tmp_path):
    config = write_config(
        tmp_path,
        {"command": "geodesic", "geodesic": {"start": [0.5, 0.5], "directions": []}},
    )
    out = tmp_path / "run"
    assert main(["--config", config, "--out", str(out)]) == 2
    assert not out.exists()


def test_start_outside_square_exits_2(tmp_path):
    config = write_config(
        tmp_path, {"command": "geodesic", "geodesic": {"start": [1.0, 0.5]}}
    )
    assert main(["--config", config, "--out", str(tmp_path / "run")]) == 2


def test_config_errors(tmp_path):
    """Test that unreadable, unknown and incomplete configs exit with 2."""
    out = str(tmp_path / "run")
    assert main(["--config", str(tmp_path / "missing.json"), "--out", out]) == 2

    not_json = tmp_path / "job.json"
    not_json.write_text("{", encoding="utf-8")
    assert main(["--config", str(not_json), "--out", out]) == 2

    yaml = tmp_path / "job.yaml"
    yaml.write_text("command: basis", encoding="utf-8")
    assert main(["--config", str(yaml), "--out", out]) == 2

    unknown = write_config(
        tmp_path,
        {"command": "basis", "basis": {"kind": "maxent-beta"}, "colour": "red"},
        "unknown.json",
    )
    assert main(["--config", unknown, "--out", out]) == 2

    missing = write_config(tmp_path, {"command": "project"}, "missing_section.json")
    assert main(["--config", missing, "--out", out]) == 2


def test_geodesic_determinism(tmp_path):
    """Test that two runs of one config write byte-identical files."""
    config = write_config(
        tmp_path,
        {
            "command": "geodesic",
            "geodesic": {"start": [0.35, 0.15], "n_directions": 4, "t_max": 0.5},
        },
    )
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["--config", config, "--out", str(first)]) == 0
    assert main(["--config", config, "--out", str(second), "--log-level", "debug"]) == 0
    for name in read_report(first)["artifacts"]:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_csv_round_trips_doubles(tmp_path):
    """Test that path CSVs keep every double exactly."""
    config = write_config(
        tmp_path,
        {
            "command": "geodesic",
            "geodesic": {"start": [0.5, 0.5], "directions": [0.3], "t_max": 0.2},
        },
    )
    out = tmp_path / "run"
    assert main(["--config", config, "--out", str(out)]) == 0
    frame = pd.read_csv(out / "geodesic_00.csv", float_precision="round_trip")
    end = read_report(out)["results"]["paths"][0]["end"]
    assert frame["r"].iloc[-1] == end[0]
    assert frame["s"].iloc[-1] == end[1]


@pytest.mark.slow
def test_submanifold_mode(tmp_path):
    """Test a short chart geodesic through the cli."""
    config = write_config(
        tmp_path,
        {
            "command": "geodesic",
            "geodesic": {
                "mode": "submanifold",
                "start": [0.5, 0.5],
                "directions": [0.0],
                "t_max": 0.05,
            },
        },
    )
    out = tmp_path / "run"
    assert main(["--config", config, "--out", str(out)]) == 0
    frame = pd.read_csv(out / "geodesic_00.csv")
    assert list(frame.columns)[:2] == ["t", "c1"]
    assert list(frame.columns)[-1] == "energy"
    path = read_report(out)["results"]["paths"][0]
    assert path["energy_drift"] <= 1e-6
    assert path["end"][0] > 0.5


def test_singular_chart_exits_3(tmp_path, monkeypatch):
    """Test that a degenerate chart maps to the numerical-failure exit code."""
    monkeypatch.setattr(
        geodesics, "coordinate_jacobian", lambda chart: np.zeros((2, 2))
    )
    config = write_config(
        tmp_path,
        {
            "command": "geodesic",
            "geodesic": {
                "mode": "submanifold",
                "start": [0.5, 0.5],
                "directions": [0.0],
            },
        },
    )
    assert main(["--config", config, "--out", str(tmp_path / "run")]) == 3


def test_depth_only_for_divergence(tmp_path):
    """Test that a working depth is rejected by commands that do not use it."""
    out = str(tmp_path / "run")
    assert main(["--preset", "figure-1", "--out", out, "--depth", "6"]) == 2
    config = write_config(
        tmp_path, {"command": "basis", "depth": 5, "basis": {"kind": "maxent-beta"}}
    )
    assert main(["--config", config, "--out", out]) == 2
    assert not (tmp_path / "run").exists()


def test_basis_markov_gamma(tmp_path):
    """Test that γ₁..γ₆ pass the Gram and kernel checks."""
    config = write_config(
        tmp_path,
        {
            "command": "basis",
            "basis": {
                "kind": "markov-gamma",
                "n_max": 6,
                "matrix": [[0.3, 0.7], [0.25, 0.75]],
            },
        },
    )
    out = tmp_path / "run"
    assert main(["--config", config, "--out", str(out)]) == 0
    report = read_report(out)
    assert report["checks"] == {"gram": True, "kernel": True}
    frame = pd.read_csv(out / "basis.csv")
    assert list(frame["label"]) == [f"gamma_{n}" for n in range(1, 7)]
    assert list(frame["depth"]) == [n + 2 for n in range(1, 7)]
    assert len(frame.columns) == 5 + 2 ** report["results"]["depth"]
    np.testing.assert_allclose(frame["l2_norm"], 1.0, atol=1e-10)
    assert frame["kernel_residual"].max() <= 1e-10


def test_basis_maxent_beta_values(tmp_path):
    """Test that the maximal-entropy β family is exactly ±1."""
    config = write_config(
        tmp_path, {"command": "basis", "basis": {"kind": "maxent-beta", "n_max": 4}}
    )
    out = tmp_path / "run"
    assert main(["--config", config, "--out", str(out)]) == 0
    frame = pd.read_csv(out / "basis.csv")
    values = frame.iloc[:, 5:].to_numpy()
    assert set(np.unique(values)) == {-1.0, 1.0}
    assert list(frame["c0_norm"]) == [1.0] * 4
    assert read_report(out)["checks"] == {"gram": True, "kernel": True}


def test_basis_from_raw_potential(tmp_path):
    """Test the ρ̂ family over a normalized depth-3 potential."""
    config = write_config(
        tmp_path,
        {
            "command": "basis",
            "basis": {
                "kind": "kernel-rho-hat",
                "n_max": 4,
                "potential": [0.1, -0.4, 0.7, 0.2, -0.3, 0.5, 0.0, 0.9],
            },
        },
    )
    out = tmp_path / "run"
    assert main(["--config", config, "--out", str(out)]) == 0
    assert read_report(out)["checks"] == {"gram": True, "kernel": True}


def test_basis_errors(tmp_path):
    out = str(tmp_path / "run")
    invalid = write_config(
        tmp_path, {"command": "basis", "basis": {"kind": "fourier"}}, "a.json"
    )
    assert main(["--config", invalid, "--out", out]) == 2
    no_matrix = write_config(
        tmp_path, {"command": "basis", "basis": {"kind": "markov-e"}}, "b.json"
    )
    assert main(["--config", no_matrix, "--out", out]) == 2
    bad_length = write_config(
        tmp_path,
        {
            "command": "basis",
            "basis": {"kind": "gibbs-rho", "potential": [0.1, 0.2, 0.3]},
        },
        "c.json",
    )
    assert main(["--config", bad_length, "--out", out]) == 2


def test_project_vertex_target(tmp_path):
    """Test that a vertex target projects to itself with value 0."""
    config = write_config(tmp_path, VERTEX_TARGET)
    out = tmp_path / "run"
    assert main(["--config", config, "--out", str(out)]) == 0
    results = read_report(out)["results"]
    assert results["value"] == pytest.approx(0.0, abs=1e-14)
    np.testing.assert_allclose(results["weights"], [0.0, 1.0, 0.0], atol=1e-8)
    assert results["certificate"]["passed"]


def test_project_two_vertex_max(tmp_path):
    """Test that the maximum over a segment carries a passing certificate."""
    config = write_config(
        tmp_path,
        {
            "command": "project",
            "project": {
                "vertices": [MAMA_MATRICES[0], MAMA_MATRICES[2]],
                "target": MAMA_MATRICES[1],
                "mode": "max",
            },
        },
    )
    out = tmp_path / "run"
    assert main(["--config", config, "--out", str(out)]) == 0
    report = read_report(out)
    assert report["checks"]["certificate"]
    assert report["results"]["certificate"]["on_boundary"]


def test_project_failed_certificate_still_exits_0(tmp_path, monkeypatch):
    """Test that a failed certificate is flagged in the report, not raised."""
    real = commands.project_simplex

    def uncertified(problem, max_workers=None):
        result = real(problem, max_workers)
        return replace(result, certificate=replace(result.certificate, passed=False))

    monkeypatch.setattr(commands, "project_simplex", uncertified)
    config = write_config(tmp_path, VERTEX_TARGET)
    out = tmp_path / "run"
    assert main(["--config", config, "--out", str(out)]) == 0
    assert read_report(out)["checks"]["certificate"] is False


def test_project_coinciding_vertices_exit_2(tmp_path):
    config = write_config(
        tmp_path,
        {
            "command": "project",
            "project": {"vertices": [EQUAL, EQUAL], "target": MAMA_MATRICES[1]},
        },
    )
    assert main(["--config", config, "--out", str(tmp_path / "run")]) == 2
