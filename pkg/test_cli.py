"""Tests for configuration, exporters, the operator cache and the command-line runs."""
import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from pydantic import ValidationError

from config.experiment import (
    CONFIG_ECHO,
    ExperimentConfig,
    parse_coefficient_spec,
    parse_config,
    parse_constraint,
    parse_desired_state,
    parse_domain,
)
from main import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main
from memory.operator_cache import OperatorCache
from mesh.hierarchy import UNIT_SQUARE, build_hierarchy
from orchestration.graph import ErrorRecord, ExperimentOrchestrator
from tools.export_tool import ExportTool

SMALL = ["--coeff", "constant:1", "--refine", "2", "--eps", "1e-9"]


def _rows(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


# Configuration


def test_config_defaults_and_echo(tmp_path):
    config = parse_config(overrides={"output_dir": str(tmp_path)})
    assert config.nc == [8]
    assert config.basis == ["grps"]
    assert config.refine == 2
    assert config.constraint == "nonneg-mean"
    assert config.layers_for(8) == [6]

    echoed = tmp_path / CONFIG_ECHO
    assert echoed.is_file()
    again = parse_config(echoed, echo=False)
    assert again == config


def test_config_file_with_overrides(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"nc": [4, 8], "refine": 3, "basis": ["rps"], "output_dir": str(tmp_path)}))
    config = parse_config(path, {"fine_resolution": 64, "rho": None}, echo=False)
    assert config.refine is None
    assert config.levels_for(4) == 4
    assert config.levels_for(8) == 3
    assert config.basis == ["rps"]


@pytest.mark.parametrize(
    "data",
    [
        {"nc": [1]},
        {"nc": []},
        {"nc": [8], "fine_resolution": 48},
        {"refine": 2, "fine_resolution": 64},
        {"refine": 0},
        {"layers": [0]},
        {"basis": ["fem"]},
        {"coeff": "marble"},
        {"constraint": "box:1,0"},
        {"yd": "cosine"},
        {"rho": 0.0},
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ValueError):
        ExperimentConfig(**data)


def test_config_file_errors(tmp_path):
    with pytest.raises(ValueError, match="does not exist"):
        parse_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{nc: 4")
    with pytest.raises(ValueError, match="not valid JSON"):
        parse_config(broken)


def test_spec_parsers(tmp_path):
    assert parse_domain("0,2,0,1").width == pytest.approx(2.0)
    with pytest.raises(ValueError):
        parse_domain("0,1")

    assert parse_coefficient_spec("constant:2.5", UNIT_SQUARE).kind == "constant"
    assert parse_coefficient_spec("channel:100,2,3", UNIT_SQUARE).kappa == pytest.approx(100.0)
    with pytest.raises(ValueError):
        parse_coefficient_spec("channel:100,2.5,3", UNIT_SQUARE)
    with pytest.raises(ValueError):
        parse_coefficient_spec("raster:" + str(tmp_path / "none.txt"), UNIT_SQUARE)
    with pytest.raises(ValueError):
        parse_coefficient_spec("constant:", UNIT_SQUARE)

    box = parse_constraint("box:0,1")
    assert (box.kind, box.lower, box.upper) == ("box", 0.0, 1.0)
    assert parse_constraint("none").kind == "none"
    with pytest.raises(ValueError):
        parse_constraint("halfspace")

    assert parse_desired_state("zero", UNIT_SQUARE) == 0.0
    assert parse_desired_state("constant:3", UNIT_SQUARE) == 3.0
    assert float(parse_desired_state("sine", UNIT_SQUARE)(0.5, 0.5)) == pytest.approx(1.0)


# Exporters, cache and records


def test_export_formatting(tmp_path):
    exporter = ExportTool(tmp_path / "out", digits=17)
    path = exporter.write_csv("t.csv", ["a", "b", "c", "d"], [(1, 0.1, True, None)])
    assert path.read_text().splitlines() == ["a,b,c,d", "1,0.10000000000000001,true,"]
    with pytest.raises(ValueError):
        exporter.write_csv("bad.csv", ["a", "b"], [(1,)])

    vector = _rows(exporter.write_vector("v.csv", np.array([2.0, 3.0]), "node"))
    assert [r["node"] for r in vector] == ["0", "1"]
    assert float(vector[1]["value"]) == 3.0


def test_export_mesh(tmp_path):
    mesh = build_hierarchy(nc=2, levels=1)
    lines = ExportTool(tmp_path).write_mesh("m.txt", mesh, "coarse").read_text().splitlines()
    assert lines[0] == "nodes 9"
    assert lines[10] == "triangles 8"
    assert len(lines) == 1 + 9 + 1 + 8
    with pytest.raises(ValueError):
        ExportTool(tmp_path).write_mesh("m.txt", mesh, "medium")


def test_operator_cache():
    cache = OperatorCache()
    assert OperatorCache.make_key(a=1, b="x") == OperatorCache.make_key(b="x", a=1)
    assert OperatorCache.make_key(a=1) != OperatorCache.make_key(a=2)

    calls = []

    def build():
        calls.append(1)
        return {"value": 42}

    key = OperatorCache.make_key(nc=4)
    assert cache.get_or_build(key, build)["value"] == 42
    assert cache.get_or_build(key, build)["value"] == 42
    assert len(calls) == 1
    assert (cache.hits, cache.misses) == (1, 1)
    assert cache.get(key, namespace="other") is None
    cache.put(key, 1, namespace="other")
    assert cache.size() == 2
    cache.clear("other")
    assert cache.size() == 1
    cache.clear()
    assert cache.size() == 0


def test_operator_cache_builds_once_across_threads():
    cache = OperatorCache()
    calls = []

    def build():
        calls.append(1)
        time.sleep(0.05)
        return "operators"

    key = OperatorCache.make_key(nc=8)
    with ThreadPoolExecutor(max_workers=4) as pool:
        values = list(pool.map(lambda _: cache.get_or_build(key, build), range(8)))
    assert values == ["operators"] * 8
    assert len(calls) == 1
    assert (cache.hits, cache.misses) == (7, 1)


def test_error_record():
    record = ErrorRecord(nc=4, kind="grps", layers=2, H=0.25, coarse_dof=32, err_y_h1=0.1, err_p_h1=0.2, err_u=0.3)
    assert record.combined == pytest.approx(0.6)
    assert len(record.row()) == len(ErrorRecord.columns())
    with pytest.raises(ValidationError):
        ErrorRecord(nc=4, kind="grps", layers=2, H=0.25, coarse_dof=32, err_y_h1=-0.1, err_p_h1=0.2, err_u=0.3)
    failed = ErrorRecord(nc=4, kind="grps", layers=2, H=0.25, coarse_dof=0, status="failed", message="boom")
    assert np.isnan(failed.combined)


# Command-line runs


def test_convergence_sweep(tmp_path):
    argv = ["convergence", *SMALL, "--nc", "2,4", "--layers", "1,2", "--basis", "rps,grps", "--out", str(tmp_path)]
    assert main(argv) == EXIT_OK

    rows = _rows(tmp_path / "convergence.csv")
    assert len(rows) == 8
    assert [(int(r["nc"]), r["kind"], int(r["layers"])) for r in rows] == sorted(
        (nc, kind, layers) for nc in (2, 4) for kind in ("grps", "rps") for layers in (1, 2)
    )
    for r in rows:
        assert r["status"] == "ok"
        parts = float(r["err_y_h1"]) + float(r["err_p_h1"]) + float(r["err_u"])
        assert float(r["combined"]) == pytest.approx(parts)
        assert int(r["coarse_dof"]) == ((int(r["nc"]) - 1) ** 2 if r["kind"] == "rps" else 2 * int(r["nc"]) ** 2)
    assert (tmp_path / CONFIG_ECHO).is_file()


def test_sweep_rows_are_deterministic(tmp_path):
    config = ExperimentConfig(coeff="constant:1", nc=[4], refine=2, layers=[1], basis=["grps"], output_dir=str(tmp_path))
    first = ExperimentOrchestrator(config, cache=OperatorCache(), exporter=ExportTool(tmp_path / "a")).run()
    second = ExperimentOrchestrator(config, cache=OperatorCache(), exporter=ExportTool(tmp_path / "b")).run()
    strip = lambda r: r.model_dump(exclude={"wall_time"})  # noqa: E731
    assert [strip(r) for r in first] == [strip(r) for r in second]


def test_sweep_releases_cached_operators_per_nc(tmp_path):
    config = ExperimentConfig(coeff="constant:1", nc=[2, 4], refine=2, layers=[1], basis=["rps"], output_dir=str(tmp_path))
    cache = OperatorCache()
    orchestrator = ExperimentOrchestrator(config, cache=cache, exporter=ExportTool(tmp_path))
    records = orchestrator.run()
    assert [r.status for r in records] == ["ok", "ok"]
    for nc in config.nc:
        assert cache.size(orchestrator.context_namespace(nc)) == 0
    assert cache.misses == 3


def test_grps_on_one_refinement_level_fails_per_row(tmp_path):
    argv = ["convergence", "--coeff", "constant:1", "--refine", "1", "--nc", "2", "--layers", "1", "--basis", "grps,rps"]
    assert main([*argv, "--out", str(tmp_path)]) == EXIT_PARTIAL
    rows = {r["kind"]: r for r in _rows(tmp_path / "convergence.csv")}
    assert rows["grps"]["status"] == "failed"
    assert rows["grps"]["message"].startswith("basis:")
    assert rows["rps"]["status"] == "ok"


def test_missing_raster_marks_rows_failed(tmp_path):
    argv = ["convergence", "--coeff", f"raster:{tmp_path / 'absent.txt'}", "--nc", "2", "--layers", "1", "--out", str(tmp_path)]
    assert main(argv) == EXIT_PARTIAL
    rows = _rows(tmp_path / "convergence.csv")
    assert len(rows) == 1
    assert rows[0]["status"] == "failed"
    assert "prepare" in rows[0]["message"]


def test_invalid_nc_is_a_config_error(tmp_path):
    assert main(["convergence", "--nc", "1", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_solve_writes_solution_dumps(tmp_path):
    argv = ["solve", *SMALL, "--nc", "4", "--layers", "2", "--basis", "rps", "--out", str(tmp_path)]
    assert main(argv) == EXIT_OK

    mesh = build_hierarchy(nc=4, levels=2)
    assert len(_rows(tmp_path / "y_rps_nc4_l2.csv")) == mesh.n_fine_nodes
    assert len(_rows(tmp_path / "p_rps_nc4_l2.csv")) == mesh.n_fine_nodes
    assert len(_rows(tmp_path / "u_rps_nc4_l2.csv")) == mesh.n_fine_triangles
    trace = _rows(tmp_path / "trace_rps_nc4_l2.csv")
    assert int(trace[0]["n"]) == 1
    errors = _rows(tmp_path / "errors_rps_nc4_l2.csv")
    assert errors[0]["status"] == "ok"
    assert (tmp_path / "mesh_nc4.txt").read_text().startswith(f"nodes {mesh.n_fine_nodes}\n")


def test_decay_writes_profiles(tmp_path):
    argv = ["decay", *SMALL, "--nc", "8", "--layers", "1,2", "--basis", "grps", "--out", str(tmp_path)]
    assert main(argv) == EXIT_OK

    profile = _rows(tmp_path / "decay_grps_nc8.csv")
    assert float(profile[0]["r"]) == 0.0
    assert float(profile[0]["tail_fraction"]) == pytest.approx(1.0)
    assert float(profile[-1]["tail_fraction"]) == 0.0
    for name in ("slice_grps_nc8_global.csv", "slice_grps_nc8_l1.csv", "slice_grps_nc8_l2.csv"):
        assert len(_rows(tmp_path / name)) == 33
    basis_rows = _rows(tmp_path / "basis_grps_nc8_global.csv")
    assert {r["basis"] for r in basis_rows} == {"0"}
