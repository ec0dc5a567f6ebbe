import json

import pytest

from shadowprice.cli import RunConfig, UsageError, main, run
from shadowprice.serialize import loads


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    free, ns = d / "ce.json", d / "ce_ns.json"
    assert main(["counterexample", "--n", "10", "--kmax", "20", "--mode", "unconstrained",
                 "--endowment", "4,-1", "--output", str(free)]) == 0
    assert main(["counterexample", "--kmax", "20", "--mode", "no_short", "--endowment", "4,0",
                 "--output", str(ns)]) == 0
    return d, free, ns


def structured(command, path, **kw):
    status, out = run(RunConfig(command, input=str(path), format="structured", **kw))
    return status, loads(out)


def test_diagnose_counterexample(files):
    _, free, _ = files
    status, rep = structured("diagnose", free)
    assert status == 0
    assert rep["kind"] == "martingale"
    assert rep["pins"]
    assert rep["tolerances"]["margin"] == 1e-10
    # fails on the kmax = 20 truncation, same cause as acceptance criterion 2
    assert rep["verdict"] == "no shadow price: pinned martingale system infeasible", rep["verdict"]


def test_shadow_noshort(files):
    _, _, ns = files
    status, rep = structured("shadow", ns)
    assert status == 0 and rep["shadow_price"] is True
    assert [c["passed"] for c in rep["certificate"]["conditions"]] == [True] * 4
    assert rep["frictionless"]["passed"]


def test_validate_malformed(files, capsys):
    d, free, _ = files
    raw = json.loads(free.read_bytes())
    raw["nodes"][1]["prob"] = 0.5
    bad = d / "bad.json"
    bad.write_text(json.dumps(raw))
    assert main(["validate", "--input", str(bad)]) == 1
    out = capsys.readouterr().out
    assert "error.kind: ValidationError" in out and "error.node: 0" in out
    garbage = d / "garbage.json"
    garbage.write_bytes(b"{not json")
    status, rep = structured("validate", garbage)
    assert status == 1 and rep["error"]["kind"] == "ParseError"


def test_validate_ok_text(files, capsys):
    _, free, _ = files
    assert main(["validate", "--input", str(free)]) == 0
    out = capsys.readouterr().out
    assert "valid: True" in out and "tolerances.gap:" in out


def test_deterministic_reports(files):
    _, free, ns = files
    for cmd, path in (("solve", free), ("shadow", ns), ("scps", free)):
        a = run(RunConfig(cmd, input=str(path), format="structured"))
        b = run(RunConfig(cmd, input=str(path), format="structured"))
        assert a == b


def test_solver_failure_exit_two(tmp_path):
    from shadowprice.market_core import frictionless
    from shadowprice.scenario import make_scenario, make_tree, save_scenario
    tree = make_tree([-1, 0], [0, 1], [1, 1])
    s = make_scenario(tree, [frictionless([1, 3]), frictionless([1, 2])], [1, 0],
                      mode="unconstrained")
    p = tmp_path / "falling.json"
    p.write_bytes(save_scenario(s))
    status, rep = structured("solve", p)
    assert status == 2 and rep["error"]["kind"] == "Unbounded"
    status, rep = structured("arbitrage", p)
    assert status == 0 and rep["verdict"] == "arbitrage"


def test_solve_with_brute_force(tmp_path):
    p = tmp_path / "small.json"
    assert main(["counterexample", "--kmax", "3", "--output", str(p)]) == 0
    status, rep = structured("solve", p, grid=1e-3)
    assert status == 0
    assert abs(rep["brute_force"]["difference"]) <= 2e-3


def test_pins_noshort_empty(files):
    _, _, ns = files
    status, rep = structured("pins", ns)
    assert status == 0 and rep["pins"] == []


def test_arbitrage_needs_frictionless(files):
    _, free, _ = files
    status, rep = structured("arbitrage", free)
    assert status == 1 and rep["error"]["kind"] == "UsageError"


@pytest.mark.parametrize("kw", [{"tol_gap": 0.0}, {"tol_check": -1.0}, {"grid": 0.0}])
def test_config_validation(kw):
    with pytest.raises(UsageError):
        RunConfig("solve", input="x.json", **kw)
    with pytest.raises(UsageError):
        RunConfig("solve")


def test_missing_file():
    status, rep = structured("validate", "/nonexistent/ce.json")
    assert status == 1 and rep["error"]["kind"] == "UsageError"


def test_power_counterexample(tmp_path):
    p = tmp_path / "pow.json"
    assert main(["counterexample", "--kmax", "3", "--mode", "no_short", "--endowment", "4,0",
                 "--utility", "power", "--p", "0.5", "--output", str(p)]) == 0
    status, rep = structured("validate", p)
    assert status == 0 and rep["utility"]["kind"] == "power"
