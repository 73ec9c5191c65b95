import copy
import json

import pytest

from bw_planner import cli
from bw_planner.analytic import CumulativeModel, loss_exact, solve_root
from bw_planner.distributions import Exponential

MM1 = {
    "schema": "bw-planner/1",
    "system": {
        "ell": 1,
        "arrival": {"family": "exponential", "rate": 0.5},
        "thinning": [1.0],
        "mu": 1.0,
        "C": 1,
        "cumulative_quotas": [6],
        "horizon": 4000,
    },
}

TWO_CLASS = {
    "schema": "bw-planner/1",
    "seed": 3,
    "system": {
        "ell": 2,
        "arrival": {"family": "erlang", "shape": 2, "rate": 2.8},
        "thinning": [0.5, 0.5],
        "mu": 1.0,
        "C": 2,
        "class_quotas": [2, 4],
        "cumulative_quotas": [2, 5],
        "class_costs": [2.0, 1.0],
        "cumulative_costs": [1.5, 1.0],
        "horizon": 4000,
    },
    "simulate": {"trajectory": True},
    "validate": {"levels": 10, "seeds": 3},
}


def scenario_file(tmp_path, base=MM1, name="scenario.json", **system):
    doc = copy.deepcopy(base)
    doc["system"].update(system)
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def with_section(tmp_path, section, block, base=MM1, **system):
    doc = copy.deepcopy(base)
    doc[section] = block
    doc["system"].update(system)
    path = tmp_path / f"{section}.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def run_json(capsys, *argv):
    cli.main([*argv, "--format", "json", "-q"])
    return json.loads(capsys.readouterr().out)


def exit_code(*argv):
    with pytest.raises(SystemExit) as info:
        cli.main(list(argv))
    return info.value.code


# ============================================================================
# solve
# ============================================================================

def test_solve_single_class(tmp_path, capsys):
    record = run_json(capsys, "solve", "--scenario", scenario_file(tmp_path))
    level = record["levels"][0]
    assert level["varsigma"] == pytest.approx(0.5, abs=1e-12)
    assert level["rho"] == 0.5
    assert level["quota"] == 6
    assert level["overflow"] == pytest.approx(0.5 ** 7, rel=1e-10)
    assert level["loss_exact"] == pytest.approx(0.5 * 0.5 ** 6 / (1 - 0.5 ** 7), rel=1e-12)
    assert record["heavy_load"] is None


def test_solve_matches_library_calls(tmp_path, capsys):
    record = run_json(capsys, "solve", "--scenario", scenario_file(tmp_path, C=2, arrival={"family": "exponential", "rate": 1.2}))
    model = CumulativeModel(Exponential(1.2), 1.2, 1.0, 2)
    assert record["levels"][0]["varsigma"] == solve_root(model).varsigma
    assert record["levels"][0]["loss_exact"] == loss_exact(model, 6)


def test_solve_heavy_load(tmp_path, capsys):
    path = with_section(tmp_path, "solve", {"delta": 0.02, "Delta": 1.0}, C=2,
                        arrival={"family": "exponential", "rate": 1.96})
    heavy = run_json(capsys, "solve", "--scenario", path)["heavy_load"]
    # exponential arrivals at load 0.98: rho_2 = 2 / (1.96 / 1)^2
    kappa = 0.5 + 4 * (2 / 1.96 ** 2) / 2
    assert heavy["kappa"] == pytest.approx(kappa)
    assert heavy["root"] == pytest.approx(1 - 0.02 / kappa)
    assert heavy["root"] == pytest.approx(heavy["root_exact"], abs=5e-3)


def test_solve_table(tmp_path, capsys):
    cli.main(["solve", "--scenario", scenario_file(tmp_path), "-q"])
    out = capsys.readouterr().out
    assert "ANALYTIC SOLUTION" in out
    assert "LOSS AT QUOTAS" in out


def test_unstable_scenario_exits_2(tmp_path, capsys):
    assert exit_code("solve", "--scenario", scenario_file(tmp_path, arrival={"family": "exponential", "rate": 1.5})) == 2
    err = capsys.readouterr().err
    assert "rho" in err
    assert ">= 1" in err


# ============================================================================
# Usage and schema errors
# ============================================================================

def test_schema_error_exits_1(tmp_path, capsys):
    assert exit_code("solve", "--scenario", scenario_file(tmp_path, colour="red")) == 1
    assert "colour" in capsys.readouterr().err


def test_usage_errors_exit_1(tmp_path):
    assert exit_code("plot", "--scenario", scenario_file(tmp_path)) == 1
    assert exit_code("solve") == 1
    assert exit_code("solve", "--scenario", scenario_file(tmp_path), "--format", "xml") == 1
    assert exit_code("solve", "--scenario", str(tmp_path / "absent.json")) == 1


# ============================================================================
# simulate
# ============================================================================

def test_simulate_is_deterministic(tmp_path):
    path = scenario_file(tmp_path, base=TWO_CLASS)
    for name in ("a", "b"):
        cli.main(["simulate", "--scenario", path, "--reps", "2", "--out", str(tmp_path / name), "--format", "json", "-q"])
    for output in ("simulate.json", "trajectory.csv"):
        first = (tmp_path / "a" / output).read_bytes()
        assert first
        assert first == (tmp_path / "b" / output).read_bytes()


def test_seed_override_changes_estimates(tmp_path, capsys):
    path = scenario_file(tmp_path, base=TWO_CLASS)
    a = run_json(capsys, "simulate", "--scenario", path)
    b = run_json(capsys, "simulate", "--scenario", path, "--seed", "4")
    assert a["seed"] == 3 and b["seed"] == 4
    assert a["estimate"] != b["estimate"]


def test_simulate_estimates_are_fractions(tmp_path, capsys):
    record = run_json(capsys, "simulate", "--scenario", scenario_file(tmp_path, base=TWO_CLASS), "--reps", "3")
    estimate = record["estimate"]
    assert estimate["replications"] == 3
    for name in ("class_J", "cum_J", "departure_cum_J"):
        assert all(0.0 <= v <= 1.0 for v in estimate[name])
    assert len(record["analytic"]["cum_J"]) == 2
    # no output directory: trajectory is skipped
    assert record["trajectory"] is None


def test_simulate_csv(tmp_path, capsys):
    cli.main(["simulate", "--scenario", scenario_file(tmp_path, base=TWO_CLASS), "--format", "csv", "-q"])
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("level,class_J,class_J_half_width,cum_J")
    assert len(lines) == 3


def test_zero_horizon_gives_empty_report(tmp_path, capsys):
    record = run_json(capsys, "simulate", "--scenario", scenario_file(tmp_path, horizon=0))
    assert record["estimate"]["arrivals"] == 0


@pytest.mark.slow
def test_simulated_overflow_matches_geometric_tail(tmp_path, capsys):
    # about 10^6 arrivals over 10 replications
    path = scenario_file(tmp_path, horizon=330_000)
    estimate = run_json(capsys, "simulate", "--scenario", path, "--reps", "10")["estimate"]
    # 95 % Student-t half-width over 10 replications is 2.262 standard errors
    se = estimate["half_widths"]["cum_J"][0] / 2.262
    assert abs(estimate["cum_J"][0] - 0.5 ** 7) <= 3 * se


# ============================================================================
# optimize
# ============================================================================

def test_optimize_single_class(tmp_path, capsys):
    path = with_section(tmp_path, "optimize", {"epsilon": 0.01})
    record = run_json(capsys, "optimize", "--scenario", path)
    assert record["optimum"] == 6
    assert record["certificate"]["kind"] == "threshold"
    assert record["certificate"]["valid"]
    assert record["levels"][0]["N_cum"] == 6
    assert record["trace"]


def test_optimize_trivial_budget(tmp_path, capsys):
    path = with_section(tmp_path, "optimize", {"epsilon": 1.0, "alpha": [1.0]})
    record = run_json(capsys, "optimize", "--scenario", path)
    assert record["optimum"] == 0
    assert record["certificate"]["kind"] == "lower-bound binding"


def test_optimize_depletion_starts_at_stability_bound(tmp_path, capsys):
    path = with_section(tmp_path, "optimize", {"decision": "depletion_C", "epsilon": 0.05, "N_1": 10},
                        arrival={"family": "exponential", "rate": 2.5}, C=3)
    record = run_json(capsys, "optimize", "--scenario", path)
    assert record["trace"][0]["value"] == 3
    assert record["optimum"] == 6
    assert record["name"] == "C"


def test_optimize_audit_failure_exits_3(tmp_path, monkeypatch, capsys):
    from bw_planner.errors import MonotonicityViolation

    def broken(problem):
        raise MonotonicityViolation("J-bar increases", [{"value": 1, "J_bar": 0.1}, {"value": 2, "J_bar": 0.2}])

    monkeypatch.setattr(cli, "optimize", broken)
    path = with_section(tmp_path, "optimize", {"epsilon": 0.01})
    assert exit_code("optimize", "--scenario", path) == 3
    assert "J-bar increases" in capsys.readouterr().err


def test_optimize_without_block_exits_1(tmp_path):
    assert exit_code("optimize", "--scenario", scenario_file(tmp_path)) == 1


# ============================================================================
# validate
# ============================================================================

def test_validate_default_scenario_passes(tmp_path, capsys):
    record = run_json(capsys, "validate", "--scenario", scenario_file(tmp_path, base=TWO_CLASS))
    pathwise = [c for c in record["checks"] if c["kind"] == "pathwise"]
    assert {c["check"] for c in pathwise} == {"cumulative_equivalence", "reflection", "crossing_levels_1_10"}
    assert all(c["deviation"] == 0 for c in pathwise)
    statistical = [c for c in record["checks"] if c["kind"] == "statistical"]
    assert len(statistical) == 2
    assert all(c["threshold"] == 0.01 and c["deviation"] >= 0 for c in statistical)
    assert record["passed"]


def test_validate_fails_loudly_on_corrupted_trajectory(tmp_path, monkeypatch, capsys):
    real_run = cli.run

    def corrupted(system, replication=0):
        trajectory = real_run(system, replication)
        contents = trajectory.contents.copy()
        contents[len(contents) // 2, 0] += 1
        trajectory.contents = contents
        return trajectory

    monkeypatch.setattr(cli, "run", corrupted)
    assert exit_code("validate", "--scenario", scenario_file(tmp_path, base=TWO_CLASS)) == 3
    captured = capsys.readouterr()
    assert "FAIL" in captured.out
    assert "Pathwise check failed" in captured.err
