#!/usr/bin/env python3
"""Tests for configuration, reports, storage and the command-line runner"""

import json
import math

import pytest

from src.core.config import (
    ExperimentConfig,
    apply_overrides,
    from_dict,
    load_config,
    parse_ladder,
)
from src.core.engine import GBsdeLabEngine, tree_refinement
from src.core.errors import ConfigError, InvalidLadder
from src.core.report import COLUMNS, CheckRecord, RunReport
from src.main import main
from src.model.types import GParams
from src.storage.report_storage_handler import CHECK_METADATA, ReportStorageHandler, make_record


def test_default_config():
    config = load_config()
    assert config.problem == "sqrt_z"
    assert config.n_ladder == (2, 4, 8, 16)
    assert config.solver.n_time == 200
    assert config.tolerances.linear_rep == 1e-9


def test_nested_config_from_dict():
    config = from_dict({
        "problem": "lipschitz",
        "n_ladder": [2, 4],
        "solver": {"n_time": 40, "search": {"grid_points": 101}},
        "tree": {"n_steps": 5, "sigma_set": [0.5, 1.0]},
        "pde": {"n_space": 101},
    })
    assert config.n_ladder == (2, 4)
    assert config.solver.search.grid_points == 101
    assert config.tree.sigma_set == (0.5, 1.0)
    assert config.pde.n_space == 101
    assert from_dict(config.to_dict()) == config


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError) as info:
        from_dict({"solver": {"nspace": 10}})
    assert "config.solver" in str(info.value)
    assert "nspace" in str(info.value)
    with pytest.raises(ConfigError):
        from_dict({"ladder": [2, 4]})
    with pytest.raises(ConfigError):
        from_dict({"solver": 3})


def test_invalid_values_become_config_errors():
    with pytest.raises(ConfigError):
        from_dict({"n_ladder": [4, 2]})
    with pytest.raises(ConfigError):
        from_dict({"solver": {"interpolation": "cubic"}})


def test_load_config_from_file(tmp_path):
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps({"problem": "singular_uv", "seed": 5}))
    config = load_config(path)
    assert config.problem == "singular_uv"
    assert config.seed == 5
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "broken.json")


def test_overrides():
    config = ExperimentConfig()
    lattice = apply_overrides(config, n_ladder=(4, 8), threads=2, steps=30, space=301)
    assert lattice.n_ladder == (4, 8)
    assert lattice.solver.threads == 2
    assert lattice.solver.n_time == 30
    assert lattice.solver.n_space == 301
    assert lattice.tree.n_steps == config.tree.n_steps
    tree = apply_overrides(config, steps=5, tree_steps=True)
    assert tree.tree.n_steps == 5
    assert tree.solver.n_time == config.solver.n_time
    with pytest.raises(ConfigError):
        apply_overrides(config, n_ladder=(8, 4))


def test_parse_ladder():
    assert parse_ladder("2,4, 8") == (2, 4, 8)
    with pytest.raises(ConfigError):
        parse_ladder("2,four")


def test_tree_refinement():
    assert tree_refinement(GParams(0.5, 1.0)) == 2
    assert tree_refinement(GParams(1.0, 1.0)) == 1
    assert tree_refinement(GParams(1.0 / math.pi, 1.0)) is None


def test_check_record_margin_and_pass():
    ok = CheckRecord("x", "anchor", value=1.0, bound=2.0)
    assert ok.margin == 1.0 and ok.passed
    bad = CheckRecord("x", "anchor", value=3.0, bound=2.0)
    assert bad.margin == -1.0 and not bad.passed
    assert not CheckRecord("x", "anchor", value=float("nan"), bound=1.0).passed
    forced = CheckRecord("x", "anchor", value=0.0, bound=1.0, passed=False)
    assert not forced.passed


def test_make_record_finds_the_anchor():
    record = make_record("qv_bound.holds.linear", -0.1, 0.0)
    assert record.anchor == CHECK_METADATA["qv_bound.holds"]["anchor"]
    assert record.passed
    assert make_record("gap.error", 1.0, 0.0).anchor == CHECK_METADATA["error"]["anchor"]
    assert make_record("gap.ratio", 1.0, 2.0, n=8).n == 8


def test_report_summary_and_round_trip():
    report = RunReport("gap", "sqrt_z")
    report.add(make_record("gap.ratio", 1.0, 2.0, n=8))
    report.add(make_record("gap.decreasing", 0.3, 0.2, n=16))
    assert report.summary() == "2 checks, 1 failed"
    assert not report.passed
    again = RunReport.from_dict(json.loads(json.dumps(report.to_dict())))
    assert again.records == report.records


def test_storage_writes_json_and_csv(tmp_path):
    report = RunReport("norms", "sqrt_z", environment={"seed": 0})
    report.add(make_record("norms.bounded.lower.sup_Y2", 1.1, 2.0))
    report.add(make_record("gap.ratio", 1.0, 2.0, n=4))
    storage = ReportStorageHandler(tmp_path / "run")
    storage.store_report(report)
    assert storage.load_report().records == report.records
    table = storage.load_checks()
    assert list(table.columns) == COLUMNS
    assert table["pass"].tolist() == [True, True]
    assert table["n"].isna().tolist() == [True, False]


def test_engine_rejects_a_bad_ladder():
    config = ExperimentConfig(problem="sqrt_z", n_ladder=(1, 2))
    with pytest.raises(InvalidLadder):
        GBsdeLabEngine(config)


def run(tmp_path, *argv):
    return main(list(argv) + ["--out", str(tmp_path), "--quiet"])


def test_unknown_problem_exits_with_two(tmp_path):
    assert run(tmp_path, "solve", "--problem", "heston") == 2
    assert run(tmp_path, "sandwich", "--n", "8,4") == 2


def test_linear_rep_subcommand(tmp_path):
    assert run(tmp_path, "linear-rep", "--steps", "4") == 0
    report = ReportStorageHandler(tmp_path).load_report()
    assert report.passed
    assert len(report.records) == 6


def test_qv_bound_subcommand(tmp_path):
    assert run(tmp_path, "qv-bound", "--steps", "4") == 0
    ids = ReportStorageHandler(tmp_path).load_checks()["check_id"].tolist()
    assert ids == ["qv_bound.holds.constant", "qv_bound.holds.linear",
                   "qv_bound.holds.step", "qv_bound.equality"]


def test_expect_subcommand(tmp_path):
    assert run(tmp_path, "expect", "--steps", "100", "--space", "601") == 0
    assert ReportStorageHandler(tmp_path).load_report().passed


def test_stage_errors_are_recorded(tmp_path, capsys):
    assert run(tmp_path, "qv-bound", "--steps", "15") == 1
    out = capsys.readouterr().out
    assert "Error:" in out
    table = ReportStorageHandler(tmp_path).load_checks()
    assert table["check_id"].tolist() == ["qv-bound.error"]
    assert not table["pass"].any()


def test_reruns_write_identical_csv(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert run(first, "linear-rep", "--steps", "4") == 0
    assert run(second, "linear-rep", "--steps", "4") == 0
    assert (first / "checks.csv").read_bytes() == (second / "checks.csv").read_bytes()


def checks(tmp_path):
    return ReportStorageHandler(tmp_path).load_checks()


def write_config(tmp_path, **values):
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(values))
    return str(path)


def test_solve_subcommand(tmp_path):
    assert run(tmp_path, "solve", "--problem", "lipschitz", "--steps", "50", "--space", "301") == 0
    ids = checks(tmp_path)["check_id"].tolist()
    assert ids[:2] == ["solve.boundary_weight", "solve.k_residual"]
    assert "solve.tree.interpolated" in ids
    assert "solve.k_martingale" in ids
    assert (tmp_path / "solution.npz").exists()


def test_props_subcommand(tmp_path):
    assert run(tmp_path, "props", "--problem", "sqrt_z", "--n", "2,4") == 0
    table = checks(tmp_path)
    assert table["check_id"].iloc[0] == "props.precondition"
    assert {"props.linear_growth", "props.gap_bound"} <= set(table["check_id"])
    assert set(table["n"].dropna().astype(int)) == {2, 4}


def test_sandwich_subcommand(tmp_path):
    code = run(tmp_path, "sandwich", "--problem", "sqrt_z", "--n", "2,4",
               "--steps", "50", "--space", "301")
    table = checks(tmp_path)
    assert code == (0 if table["pass"].all() else 1)
    same_n = table[table["check_id"] == "sandwich.lower_le_upper"]
    assert same_n["n"].astype(int).tolist() == [2, 4]
    assert same_n["pass"].all()
    assert "sandwich.uniform_bound" in table["check_id"].tolist()
    assert not table["check_id"].str.endswith(".error").any()


def test_gap_subcommand(tmp_path):
    code = run(tmp_path, "gap", "--problem", "sqrt_z", "--n", "4,8",
               "--steps", "50", "--space", "301")
    table = checks(tmp_path)
    assert code == (0 if table["pass"].all() else 1)
    assert table["check_id"].tolist() == ["gap.ratio", "gap.ratio_spread", "gap.decreasing"]
    assert table["n"].astype(int).tolist() == [8, 8, 8]


def test_compare_subcommand(tmp_path):
    config = write_config(tmp_path, compare_pairs=3, tree={"n_steps": 6})
    out = tmp_path / "out"
    assert run(out, "compare", "--config", config, "--problem", "comparison_pair") == 0
    ids = checks(out)["check_id"].tolist()
    assert ids == ["compare.tree", "compare.tree.random", "compare.lattice", "compare.lattice.random"]


def test_compare_without_pairs_fails(tmp_path):
    config = write_config(tmp_path, compare_pairs=0)
    out = tmp_path / "out"
    assert run(out, "compare", "--config", config, "--problem", "lipschitz") == 1
    table = checks(out)
    assert table["check_id"].tolist() == ["compare.error"]
    assert not table["pass"].any()


def test_cross_check_subcommand(tmp_path):
    code = run(tmp_path, "cross-check", "--problem", "lipschitz", "--n", "2",
               "--steps", "50", "--space", "301")
    table = checks(tmp_path)
    assert code == (0 if table["pass"].all() else 1)
    assert len(table) == 2
    assert table["check_id"].str.startswith("cross_check.origin").all()
    assert table["n"].isna().tolist() == [True, False]


def test_norms_subcommand(tmp_path):
    code = run(tmp_path, "norms", "--problem", "sqrt_z", "--n", "2,4", "--steps", "4")
    table = checks(tmp_path)
    assert code == (0 if table["pass"].all() else 1)
    ids = table["check_id"].tolist()
    assert ids
    assert all(i.startswith("norms.bounded.") for i in ids)
    assert any(".lower." in i for i in ids) and any(".upper." in i for i in ids)
