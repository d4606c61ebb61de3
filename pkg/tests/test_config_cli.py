"""Run-config schema, canonical emission, command line round trips."""

import json
import os

import numpy as np
import pytest

from nlstefan import SchemaViolationError, cli
from nlstefan.config import (
    InlineProblem,
    RunConfig,
    emit_run_config,
    parse_run_config,
    realize,
)
from nlstefan.fileio import load_trajectory_states, read_field_csv, read_json

INLINE = {
    "problem": {
        "s": 0.5, "p": 3.0, "lam": 1.0, "eps": 0.05, "horizon": 0.1,
        "box": {"lo": [-1.0], "hi": [1.0], "nodes": [33], "r_infinity": 4.0},
        "unknown": {"lo": [-1.0], "hi": [1.0]},
        "datum": {"type": "constant", "value": 1.0},
        "initial": {"type": "constant", "value": -1.0},
    }
}


# ---------------------------------------------------------------- schema


def test_parse_minimal_preset_config():
    cfg = parse_run_config('{"problem": "const1d"}')
    assert cfg.problem == "const1d"
    preset, problem, solver_cfg = realize(cfg)
    assert preset.name == "const1d"
    assert problem.grid.n_nodes == 65


def test_parse_empty_config_defaults_to_melt():
    cfg = parse_run_config("{}")
    assert cfg.problem == "melt1d"
    assert cfg.seed == 0
    assert cfg.continuation.eps_values == [0.2, 0.1, 0.05, 0.025]


def test_parse_inline_problem():
    cfg = parse_run_config(json.dumps(INLINE))
    assert isinstance(cfg.problem, InlineProblem)
    preset, problem, solver_cfg = realize(cfg)
    assert preset is None
    assert problem.grid.shape == (33,)
    assert problem.eps == 0.05
    assert problem.far_value == 1.0
    assert solver_cfg.dt == pytest.approx(0.001)


def test_parse_rejects_shallow_growth_exponent():
    bad = json.loads(json.dumps(INLINE))
    bad["problem"]["p"] = 2.0
    with pytest.raises(SchemaViolationError) as exc:
        parse_run_config(json.dumps(bad))
    assert any("p must exceed 2" in v for v in exc.value.violations)


def test_parse_rejects_bad_differentiability():
    bad = json.loads(json.dumps(INLINE))
    bad["problem"]["s"] = 1.2
    with pytest.raises(SchemaViolationError) as exc:
        parse_run_config(json.dumps(bad))
    assert any("s must lie in (0, 1)" in v for v in exc.value.violations)


def test_violations_are_aggregated_with_paths():
    bad = {
        "problem": "melt1d",
        "bogus": 1,
        "solver": {"dt": -0.5, "mystery": True},
        "analysis": {"levels": 1},
        "seed": -3,
    }
    with pytest.raises(SchemaViolationError) as exc:
        parse_run_config(json.dumps(bad))
    v = exc.value.violations
    assert len(v) >= 5
    assert any(x.startswith("bogus:") for x in v)
    assert any(x.startswith("solver.dt:") for x in v)
    assert any(x.startswith("solver.mystery:") for x in v)
    assert any(x.startswith("analysis.levels:") for x in v)
    assert any(x.startswith("seed:") for x in v)


def test_booleans_are_not_numbers():
    bad = json.loads(json.dumps(INLINE))
    bad["problem"]["eps"] = True
    with pytest.raises(SchemaViolationError) as exc:
        parse_run_config(json.dumps(bad))
    assert any("expected a number" in v for v in exc.value.violations)


def test_bad_json_reports_the_line():
    with pytest.raises(SchemaViolationError) as exc:
        parse_run_config('{\n  "problem": melt\n}')
    assert any(v.startswith("json:") and "line 2" in v for v in exc.value.violations)


def test_top_level_must_be_an_object():
    with pytest.raises(SchemaViolationError, match="top level"):
        parse_run_config("[1, 2]")


def test_emit_parse_is_idempotent():
    for source in ('{"problem": "twophase1d", "seed": 7}', json.dumps(INLINE),
                   json.dumps({"problem": "melt1d",
                               "solver": {"dt_policy": "intrinsic", "dt_factor": 2.0},
                               "analysis": {"anchor": [0.5, 0.5], "rho0": 0.3},
                               "tail": {"rho": 0.2, "window": [0.0, 0.5]}})):
        once = emit_run_config(parse_run_config(source))
        twice = emit_run_config(parse_run_config(once))
        assert once == twice


def test_realize_applies_overrides_and_solver_section():
    cfg = parse_run_config(json.dumps({
        "problem": "melt1d",
        "overrides": {"n_nodes": 33, "horizon": 0.1, "eps": 0.2, "n_steps": 5},
        "solver": {"newton_max": 7, "store_every": 2},
    }))
    preset, problem, solver_cfg = realize(cfg)
    assert problem.grid.shape == (33,)
    assert problem.horizon == 0.1
    assert problem.eps == 0.2
    assert solver_cfg.newton_max == 7
    assert solver_cfg.store_every == 2
    assert solver_cfg.dt == pytest.approx(0.1 / 5)


def test_inline_core_initial_round_trip():
    core = json.loads(json.dumps(INLINE))
    core["problem"]["initial"] = {"type": "core", "value": -1.0,
                                  "inside": 1.0, "radius": 0.5}
    core["problem"]["datum"]["value"] = -1.0
    cfg = parse_run_config(json.dumps(core))
    _, problem, _ = realize(cfg)
    x = problem.grid.coordinates()[:, 0]
    inner = np.abs(x) < 0.5
    assert np.all(problem.initial[inner & problem.unknown_mask] == 1.0)
    assert np.all(problem.initial[~inner] == -1.0)
    assert emit_run_config(cfg) == emit_run_config(parse_run_config(emit_run_config(cfg)))


# ---------------------------------------------------------------- cli


def write_cfg(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def tree_bytes(root):
    out = {}
    for base, _, files in os.walk(root):
        for fn in files:
            full = os.path.join(base, fn)
            out[os.path.relpath(full, root)] = open(full, "rb").read()
    return out


def test_cli_solve_writes_a_reloadable_trajectory(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"problem": "const1d"})
    out = str(tmp_path / "run")
    rc = cli.main(["solve", "--config", cfg, "--out", out])
    assert rc == 0
    assert "worst residual" in capsys.readouterr().out
    manifest, times, states = load_trajectory_states(out)
    assert manifest["format"] == "nlstefan-trajectory-1"
    assert manifest["config"]["problem"] == "const1d"
    assert len(states) == manifest["n_stored"] == len(times)
    idx, coords, csv_vals = read_field_csv(os.path.join(out, "fields", "step_00000.csv"))
    assert np.array_equal(csv_vals, states[0])


def test_cli_solve_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, {"problem": "const1d"})
    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    assert cli.main(["solve", "--config", cfg, "--out", out_a]) == 0
    assert cli.main(["solve", "--config", cfg, "--out", out_b]) == 0
    assert tree_bytes(out_a) == tree_bytes(out_b)


def test_cli_tail(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"problem": "const1d",
                               "tail": {"rho": 0.3, "window": [0.0, 0.1]}})
    out = str(tmp_path / "tail")
    rc = cli.main(["tail", "--config", cfg, "--out", out])
    assert rc == 0
    payload = read_json(os.path.join(out, "tail.json"))
    assert payload["rho"] == 0.3
    assert payload["tail"] > 0.0
    assert f"{payload['tail']:.17g}" in capsys.readouterr().out


def test_cli_lemma_check(tmp_path, capsys):
    out = str(tmp_path / "lemma")
    rc = cli.main(["lemma-check", "--out", out, "--seed", "0"])
    assert rc == 0
    assert "all_passed=True" in capsys.readouterr().out
    verdicts = read_json(os.path.join(out, "verdicts.json"))
    assert verdicts["iteration_lemma"]["all_passed"] is True
    assert verdicts["decay_lemma"]["negative_control_diverged"] is True
    with open(os.path.join(out, "lemma_iter.csv")) as fh:
        header = fh.readline().strip()
        rows = fh.readlines()
    assert header == "m2,n2,l2,omega0,epsilon,min_margin,passed"
    # 3 choices for n2 x ordered (m2, l2) pairs x 3 omega0 values
    assert len(rows) == 3 * 6 * 3
    assert all(r.strip().endswith(",1") for r in rows)


def test_cli_verify_const_preset(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"problem": "const1d"})
    out = str(tmp_path / "verify")
    rc = cli.main(["verify", "--config", cfg, "--out", out])
    assert rc == 0
    stdout = capsys.readouterr().out
    for name in ("max_principle", "comparison", "normalization",
                 "caccioppoli", "measure_density"):
        assert f"verify {name}: PASS" in stdout
    payload = read_json(os.path.join(out, "verify.json"))
    assert payload["passed"] is True
    assert payload["checks"]["max_principle"]["defect"] == 0.0


def test_cli_continuation_const_family(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {
        "problem": "const1d",
        "overrides": {"value": 0.3},
        "continuation": {"eps_values": [0.2, 0.1], "delta_resolve": 0.05},
    })
    out = str(tmp_path / "family")
    rc = cli.main(["continuation", "--config", cfg, "--out", out])
    assert rc == 0
    payload = read_json(os.path.join(out, "family.json"))
    assert payload["eps_values"] == [0.2, 0.1]
    assert payload["successive_distances"] == [0.0]
    assert payload["band_fractions"] == [0.0, 0.0]
    assert payload["monotone"] is True
    assert payload["errors"] == {}
    for stem in ("limit_u", "limit_w", "limit_v"):
        idx, coords, vals = read_field_csv(os.path.join(out, f"{stem}.csv"))
        assert vals.shape == (65,)
    # u = 0.3 > delta everywhere: w = 1 and v = u + 1
    _, _, u = read_field_csv(os.path.join(out, "limit_u.csv"))
    _, _, w = read_field_csv(os.path.join(out, "limit_w.csv"))
    _, _, v = read_field_csv(os.path.join(out, "limit_v.csv"))
    assert np.all(w == 1.0)
    assert np.array_equal(v, u + w)
    assert os.path.isdir(os.path.join(out, "eps_0.2"))
    assert os.path.isdir(os.path.join(out, "eps_0.1"))


def test_cli_analyze_modulus_small_melt(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {
        "problem": "melt1d",
        "overrides": {"n_nodes": 65, "horizon": 0.1, "eps": 0.05, "n_steps": 20},
        "analysis": {"anchor": [0.5, 0.1], "rho0": 0.3, "levels": 6, "shrink": 0.8},
    })
    out = str(tmp_path / "mod")
    rc = cli.main(["analyze-modulus", "--config", cfg, "--out", out])
    assert rc == 0
    assert "modulus fit:" in capsys.readouterr().out
    payload = read_json(os.path.join(out, "modulus.json"))
    for key in ("anchor", "rho0", "omega0", "c", "varsigma", "residual", "n_samples"):
        assert key in payload
    assert payload["anchor"] == [0.5, 0.1]
    with open(os.path.join(out, "modulus.csv")) as fh:
        assert fh.readline().strip() == "level,radius,osc"
        rows = [line.strip().split(",") for line in fh]
    assert len(rows) == 6
    radii = [float(r[1]) for r in rows]
    assert radii == pytest.approx([0.3 * 0.8 ** i for i in range(6)])
    with open(os.path.join(out, "sequences.csv")) as fh:
        assert fh.readline().strip() == "level,rho,omega,theta,osc,tail_ratio"


def test_cli_missing_out_is_a_schema_violation(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"problem": "const1d"})
    rc = cli.main(["solve", "--config", cfg])
    assert rc == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "SchemaViolationError"
    assert any("--out" in v for v in err["error"]["violations"])


def test_cli_bad_config_exits_with_violations(tmp_path, capsys):
    bad = write_cfg(tmp_path, {"problem": "melt1d", "solver": {"dt": "fast"}})
    rc = cli.main(["solve", "--config", bad, "--out", str(tmp_path / "x")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "SchemaViolationError"
    assert any(v.startswith("solver.dt:") for v in err["error"]["violations"])


def test_cli_unknown_preset(tmp_path, capsys):
    rc = cli.main(["solve", "--preset", "nonsense", "--out", str(tmp_path / "x")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "InvalidParamsError"
    assert "unknown preset" in err["error"]["message"]
