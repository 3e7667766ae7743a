import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuscoflow import cli
from cuscoflow.scenario import ScenarioError, from_dict, load_scenario, serialize

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

MINIMAL = {
    "dimension": 2,
    "operator": {"kind": "QuadraticGradient", "Q": [[1, 0], [0, 1]]},
    "cusco": {"kind": "Singleton", "f": [0, 0]},
}


def write(tmp_path, data, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data), encoding="utf-8")
    return p


def errors_of(data):
    with pytest.raises(ScenarioError) as exc:
        from_dict(data)
    return exc.value.errors


def test_minimal_scenario_defaults():
    sc = from_dict(MINIMAL)
    assert sc.h == 1e-3 and sc.T == 5 and sc.seed == 0


def test_negative_radius_rejected():
    data = dict(MINIMAL, set={"kind": "Ball", "center": [0, 0], "radius": -1})
    assert ("set.radius", "radius must be ≥ 0") in errors_of(data)


def test_non_psd_rejected():
    data = dict(MINIMAL, operator={"kind": "QuadraticGradient", "Q": [[1, 0], [0, -1e-3]]})
    assert any("not PSD" in msg and path == "operator.Q" for path, msg in errors_of(data))


def test_schema_errors_carry_paths():
    data = dict(MINIMAL, cusco={"kind": "Nope"}, operator={"kind": "NormalConeOf",
                                                         "body": {"kind": "Ball", "center": [0], "radius": 1}})
    paths = [p for p, _ in errors_of(data)]
    assert "cusco.kind" in paths and any(p.startswith("operator.body") for p in paths)
    assert any("unknown variant tag" in m for _, m in errors_of(dict(MINIMAL, check={"variant": "zz"})))


def test_decimal_strings_accepted():
    data = dict(MINIMAL, integrator={"h": "0.01", "T": "1.5", "x0": ["0.1", "0.30000000000000004"]})
    sc = from_dict(data)
    assert sc.h == 0.01 and sc.x0[1] == 0.30000000000000004


def test_seed_is_parsed_exactly():
    top = 2**64 - 1
    assert from_dict(dict(MINIMAL, seed=top)).seed == top
    assert from_dict(dict(MINIMAL, seed=str(top))).seed == top
    assert from_dict(dict(MINIMAL, seed=2**64 - 1024)).seed == 2**64 - 1024
    for bad in (2**64, -1, 1.5, True, "x"):
        assert ("seed", "must be an integer in [0, 2^64)") in errors_of(dict(MINIMAL, seed=bad))


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.json")), ids=lambda p: p.stem)
def test_canned_round_trip(path):
    sc = load_scenario(path)
    again = from_dict(json.loads(serialize(sc)))
    assert again == sc
    assert serialize(again) == serialize(sc)


@settings(max_examples=25, deadline=None)
@given(h=st.floats(1e-4, 0.1), r=st.floats(0, 10), c=st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2),
       seed=st.integers(0, 2**64 - 1))
def test_round_trip_property(h, r, c, seed):
    data = dict(MINIMAL, set={"kind": "Ball", "center": c, "radius": r}, integrator={"h": h, "T": 1.0},
                seed=seed, cusco={"kind": "BallValued", "center": c, "radius": r})
    sc = from_dict(data)
    assert from_dict(json.loads(serialize(sc))) == sc


def test_simulate_row_count(tmp_path):
    p = write(tmp_path, dict(MINIMAL, integrator={"h": 0.01, "T": 0.5, "x0": [1, 0]}))
    assert cli.main(["simulate", str(p), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()
    assert len(rows) == 1 + 51  # header + ⌈T/h⌉ + 1
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["steps"] == 50 and np.allclose(summary["final"], [1.01 ** -50, 0])


def test_drift_counterexample_exit_one(tmp_path):
    out = tmp_path / "o"
    code = cli.main(["check-invariance", str(SCENARIOS / "drift_counterexample.json"), "--out", str(out)])
    assert code == 1
    rep = json.loads((out / "certificate.json").read_text())
    assert rep["verdict"] == "fail" and rep["witnesses"]
    assert {"scenario", "variant", "tol", "points", "verdict", "hypothesis_checks", "seed"} <= set(rep)


def test_sweep_three_rows(tmp_path):
    out = tmp_path / "o"
    p = write(tmp_path, dict(MINIMAL, integrator={"T": 0.5, "x0": [1, 0]}))
    assert cli.main(["sweep", str(p), "--param", "h", "--values", "1e-2", "1e-3", "1e-4", "--out", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert len(rows) == 4
    diffs = [float(r.split(",")[-1]) for r in rows[1:]]
    assert diffs[0] > diffs[1] > diffs[2] == 0


def test_check_lyapunov_report_fields(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["check-lyapunov", str(SCENARIOS / "gradient_flow.json"), "--out", str(out)]) == 0
    rep = json.loads((out / "lyapunov.json").read_text())
    assert rep["a"] == 0 and rep["V(x0)"] == 0.5 and "worst_violation_t" in rep


@pytest.mark.parametrize("cmd,scenario,expected", [
    ("simulate", "gradient_flow", 0),
    ("check-invariance", "sweeping_ball", 0),
    ("check-invariance", "damped_box", 0),
    ("check-invariance", "drift_counterexample", 1),
    ("check-invariance", "weak_point", 0),
    ("check-lyapunov", "gradient_flow", 0),
    ("check-lyapunov", "drift_counterexample", 1),
    ("check-invariance", "gradient_flow", 2),
    ("check-lyapunov", "sweeping_ball", 2),
])
def test_exit_codes(tmp_path, cmd, scenario, expected):
    args = [cmd, str(SCENARIOS / f"{scenario}.json"), "--out", str(tmp_path)]
    assert cli.main(args) == expected


def test_strong_variant_on_weak_scenario_fails(tmp_path):
    args = ["check-invariance", str(SCENARIOS / "weak_point.json"), "--variant", "normal-inf", "--out", str(tmp_path)]
    assert cli.main(args) == 1


def test_error_exit_codes(tmp_path, capsys):
    assert cli.main(["simulate", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert cli.main(["simulate", str(bad), "--out", str(tmp_path)]) == 2
    p = write(tmp_path, dict(MINIMAL, set={"kind": "Ball", "center": [0, 0], "radius": -1}))
    assert cli.main(["simulate", str(p), "--out", str(tmp_path)]) == 2
    assert "radius must be ≥ 0" in capsys.readouterr().err
    blocker = tmp_path / "file"
    blocker.write_text("x")
    ok = write(tmp_path, MINIMAL, "ok.json")
    assert cli.main(["simulate", str(ok), "--out", str(blocker / "sub")]) == 2


@pytest.mark.parametrize("cmd,scenario", [
    ("simulate", "damped_box"), ("check-invariance", "sweeping_ball"), ("sweep", "gradient_flow"),
])
def test_outputs_are_byte_identical(tmp_path, cmd, scenario):
    runs = []
    for i in range(2):
        out = tmp_path / str(i)
        cli.main([cmd, str(SCENARIOS / f"{scenario}.json"), "--out", str(out), "--seed", "5"])
        runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert runs[0] == runs[1] and runs[0]


def test_seed_changes_jittered_mesh(tmp_path):
    data = dict(MINIMAL, set={"kind": "Ball", "center": [0, 0], "radius": 1},
                operator={"kind": "NormalConeOf", "body": {"kind": "Ball", "center": [0, 0], "radius": 1}},
                sampler={"n_points": 8, "jitter": 1.0})
    p = write(tmp_path, data)
    pts = []
    for seed in ("1", "2"):
        cli.main(["check-invariance", str(p), "--seed", seed, "--out", str(tmp_path / seed)])
        pts.append(json.loads((tmp_path / seed / "certificate.json").read_text())["points"][0]["x"])
    assert pts[0] != pts[1]
