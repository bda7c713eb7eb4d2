import json

import numpy as np
import pytest

from cat0flow import ConfigError, InvalidParameterError
from cat0flow.cli import main
from cat0flow.scenario import (
    load_shipped,
    oracle,
    parse_config,
    parse_config_text,
    run_scenario,
    serialize,
    shipped_scenarios,
    verify_suite,
)

MINIMAL = """
name = "minimal"
seed = 4

[domain]
kind = "cycle"
n = 8

[target]
kind = "euclidean"

[initial]
preset = "fourier"

[flow]
t_end = 0.5
dt = 0.125

[constants]
M0 = 1.0
eps = [0.05]

[[checks]]
name = "energy_monotone"
"""


def test_minimal_config_parses_and_stores_eps0():
    cfg = parse_config_text(MINIMAL)
    assert cfg.domain == {"kind": "cycle", "n": 8, "length": 1.0}
    assert cfg.derived["eps0"] == pytest.approx(1 / 8)
    assert len(cfg.times()) == 5


def test_config_round_trip_identity():
    cfg = parse_config_text(MINIMAL)
    assert parse_config_text(serialize(cfg)) == cfg
    for name in shipped_scenarios():
        c = load_shipped(name)
        assert parse_config_text(serialize(c)) == c


def test_shipped_suite_spans_all_targets():
    kinds = set()
    for name in shipped_scenarios():
        t = load_shipped(name).target
        kinds.add(t["kind"])
        kinds.update(f["kind"] for f in t.get("factors", []))
    assert len(shipped_scenarios()) >= 6
    assert {"euclidean", "tripod", "tree", "hyperbolic", "product"} <= kinds


def test_eps_above_bound_names_eps0():
    with pytest.raises(ConfigError, match=r"constants\.eps\[0\].*eps0"):
        parse_config_text(MINIMAL.replace("eps = [0.05]", "eps = [1.25]"))


def test_cyclic_tree_rejected():
    text = MINIMAL.replace('[target]\nkind = "euclidean"',
                           '[target]\nkind = "tree"\nvertices = ["a", "b", "c"]\n'
                           'edges = [["a", "b", 1.0], ["b", "c", 1.0], ["c", "a", 1.0]]')
    with pytest.raises(ConfigError, match="target tree is not acyclic"):
        parse_config_text(text)


def test_all_errors_reported_at_once():
    text = MINIMAL.replace('preset = "fourier"', 'preset = "nope"').replace("n = 8", "n = 1")
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text)
    paths = [e.split(":")[0] for e in exc.value.errors]
    assert "initial.preset" in paths and "domain.n" in paths


def test_syntax_error_has_line_and_column():
    with pytest.raises(ConfigError, match=r"line 2, column"):
        parse_config_text('name = "x"\n[domain\n')


def test_non_increasing_times_rejected():
    text = MINIMAL.replace("t_end = 0.5\ndt = 0.125", "times = [0.0, 0.2, 0.1]")
    with pytest.raises(ConfigError, match="strictly increasing"):
        parse_config_text(text)


def test_parse_config_reads_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(MINIMAL)
    assert parse_config(p).name == "minimal"
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.toml")


def test_smoke_scenario_center_values(tmp_path):
    cfg = load_shipped("smoke")
    art = run_scenario(cfg, tmp_path)
    assert art.passed and art.exit_code == 0
    rows = (tmp_path / "trace.csv").read_text().splitlines()
    assert rows[0] == "t,vertex_id,point,energy_density"
    center = [r for r in rows[1:] if r.split(",")[:2] == ["1", "1"]][0]
    assert float(center.split(",")[2]) == pytest.approx(0.25, abs=1e-12)
    cfg.flow["m"] = 1
    run_scenario(cfg, tmp_path / "m1")
    rows = (tmp_path / "m1" / "trace.csv").read_text().splitlines()
    center = [r for r in rows[1:] if r.split(",")[:2] == ["1", "1"]][0]
    assert float(center.split(",")[2]) == pytest.approx(1 / 3, abs=1e-12)


def test_reports_json_schema(tmp_path):
    run_scenario(parse_config_text(MINIMAL), tmp_path)
    reps = json.loads((tmp_path / "reports.json").read_text())
    assert reps[0]["check"] == "energy_monotone" and "min" in reps[0]
    assert reps[0]["paper_anchor"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert len(manifest["config_sha256"]) == 64 and manifest["seed"] == 4


def test_rerun_is_byte_identical(tmp_path):
    cfg = load_shipped("tripod_cycle16")
    run_scenario(cfg, tmp_path / "a")
    run_scenario(cfg, tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name
        assert b"\r\n" not in f.read_bytes()


def test_numerical_failure_writes_marker(tmp_path):
    cfg = parse_config_text(MINIMAL.replace("dt = 0.125", "dt = 0.125\nmax_sweeps = 1\ntol = 1e-15"))
    art = run_scenario(cfg, tmp_path)
    assert art.exit_code == 4
    assert (tmp_path / "FAILED").exists() and (tmp_path / "manifest.json").exists()


def test_oracle_cases():
    _, rows = oracle("euclidean-heat", {"n": 3, "length": 2, "t": 1})
    assert float(rows[1][2]) == pytest.approx(np.exp(-2.0), rel=1e-12)
    _, rows = oracle("tree-brute-barycenter", {})
    assert float(rows[0][-1]) <= 2.0 / 2000
    _, rows = oracle("grid-hj-closedform", {"eps_cells": 8, "p": 2})
    eps = 8 / 256
    assert all(abs(float(r[2]) + eps / 2) < 1e-15 for r in rows)
    with pytest.raises(InvalidParameterError):
        oracle("no-such-case")


def test_verify_cat0_suite():
    res = verify_suite("cat0", seed=3)
    assert res["pass"]
    families = {r.check.split("[")[0] for r in res["reports"] if r.check.startswith("cat0_")}
    assert len(families) == 5


def test_verify_rejects_unknown_suite():
    with pytest.raises(InvalidParameterError):
        verify_suite("nope")


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "--config", "smoke", "--out", str(tmp_path / "s")]) == 0
    bad = tmp_path / "bad.toml"
    bad.write_text(MINIMAL.replace("eps = [0.05]", "eps = [1.25]"))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "b")]) == 3
    assert "eps0" in capsys.readouterr().err
    assert main(["oracle", "--case", "euclidean-heat", "--params", "n=4",
                 "--out", str(tmp_path)]) == 3
    assert main(["oracle", "--case", "grid-hj-closedform", "--params", "n=65",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "oracle_grid-hj-closedform.csv").exists()


def test_cli_check_failure_exit_code(tmp_path):
    # the dyadic lip factor of this flow is about 1.06, above the requested bound
    text = MINIMAL.replace("[constants]", '[constants]\nP0 = "0"').replace(
        'name = "energy_monotone"', 'name = "energy_monotone"\n\n[[checks]]\n'
        'name = "lip"\ntolerance = 1.0000001')
    text = text.replace("t_end = 0.5\ndt = 0.125", "t_end = 1.0\ndt = 0.0078125")
    p = tmp_path / "c.toml"
    p.write_text(text)
    code = main(["run", "--config", str(p), "--out", str(tmp_path / "o")])
    reps = json.loads((tmp_path / "o" / "reports.json").read_text())
    lip = [r for r in reps if r["check"] == "lip_time_factor"][0]
    assert lip["pass"] is False and lip["max"] > 1.01
    assert code == 2
