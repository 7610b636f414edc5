import json
import os
import shutil

import numpy as np
import pytest

from henon_thermo import SCHEMA_VERSION, __version__, cli
from henon_thermo import artifacts as io
from henon_thermo.errors import ConvergenceError


def write_config(tmp_path, **kw):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(kw))
    return str(p)


# find-astar ---------------------------------------------------------------------

def test_find_astar_planar(tmp_path, capsys):
    assert cli.main(["find-astar", "--b", "1e-4", "--out", str(tmp_path)]) == 0
    doc = io.read_json(tmp_path / "manifolds" / "a_star.json", "a_star")
    assert abs(doc["data"]["a_star"] - 2) < 0.1
    assert json.loads(capsys.readouterr().out)["mode"] == "planar"


def test_find_astar_one_dimensional(tmp_path):
    assert cli.main(["find-astar", "--b", "0", "--out", str(tmp_path)]) == 0
    assert io.read_json(tmp_path / "manifolds" / "a_star.json")["data"]["a_star"] == 2.0


def test_find_astar_bad_bracket(tmp_path, capsys):
    cfg = write_config(tmp_path, bracket=[1.95, 1.99])
    assert cli.main(["find-astar", "--config", cfg, "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "gap(1.95)" in err and "gap(1.99)" in err


# configuration -------------------------------------------------------------------

@pytest.mark.parametrize("bad", [{"colour": "blue"}, {"epsilon": 0.7}, {"b": 0.5},
                                 {"t_grid": [-1.0, 0.0]}, {"stages": ["plotting"]},
                                 {"cutoff_schedule": [10, 99]}])
def test_config_rejections(tmp_path, capsys, bad):
    cfg = write_config(tmp_path, **bad)
    assert cli.main(["pipeline", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "ConfigError" in capsys.readouterr().err


def test_config_not_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("b = 1e-4")
    assert cli.main(["pipeline", "--config", str(p)]) == 2


def test_b_zero_only_for_find_astar(tmp_path):
    assert cli.main(["manifolds", "--b", "0", "--out", str(tmp_path)]) == 2


def test_flags_override_config_and_env_sets_out(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, b=1e-3, seed=4)
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env_out"))
    c = cli.RunConfig.load(cfg, {"b": 1e-5})
    assert c.b == 1e-5 and c.seed == 4 and c.out == str(tmp_path / "env_out")
    c2 = cli.RunConfig.load(cfg, {"out": "flag_out"})
    assert c2.out == "flag_out"


def test_config_digest_ignores_out_and_jobs():
    a = cli.RunConfig.load(None, {"out": "x", "jobs": 1})
    b = cli.RunConfig.load(None, {"out": "y", "jobs": 4})
    assert a.digest() == b.digest()
    assert a.digest() != cli.RunConfig.load(None, {"seed": 1}).digest()


# pipeline -------------------------------------------------------------------------

def test_missing_upstream_stage_is_named(tmp_path, capsys):
    out = str(tmp_path / "empty")
    assert cli.main(["pipeline", "--stages", "inducing", "--out", out]) == 2
    err = capsys.readouterr().err
    assert "DependencyError" in err and "'manifolds'" in err


def test_report_without_artifacts(tmp_path, capsys):
    assert cli.main(["report", "--out", str(tmp_path)]) == 2
    assert "DependencyError" in capsys.readouterr().err


def test_outputs_carry_echo_and_version(pipeline_out):
    for root, _, files in os.walk(pipeline_out):
        for f in files:
            if f.endswith(".json"):
                doc = json.load(open(os.path.join(root, f), encoding="utf-8"))
                assert doc["code_version"] == __version__
                assert doc["schema_version"] == SCHEMA_VERSION
                if f != "timings.json":
                    assert doc["config"]["b"] == 1e-4


def test_csv_outputs_are_plain(pipeline_out):
    for root, _, files in os.walk(pipeline_out):
        for f in files:
            if f.endswith(".csv"):
                raw = open(os.path.join(root, f), "rb").read()
                assert b"\r" not in raw and b";" not in raw
                raw.decode("utf-8")


def test_pressure_curve_changes_sign(pipeline_out):
    t, P, _ = cli._read_curve_csv(pipeline_out / "pressure" / "pressure_curve.csv")
    inside = (t > 0) & (t < 1)
    signs = np.sign(P[(t >= 0) & (t <= 1)])
    assert inside.any() and signs[0] > 0 and signs[-1] < 0


def test_json_numbers_have_full_precision(pipeline_out):
    text = open(pipeline_out / "pressure" / "pressure_curve.json", encoding="utf-8").read()
    t_u = json.loads(text)["data"]["t_u"]
    assert format(t_u, ".17g") in text


def test_cached_rerun(pipeline_out, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(pipeline_out, out)
    cfg = cli.RunConfig.load(None, {"out": str(out)})
    status = cli.run_pipeline(cfg)
    assert set(status.values()) == {"cached"}
    # editing an artifact invalidates that stage only
    p = out / "stats" / "acf.csv"
    p.write_text(p.read_text() + "31,0\n")
    ctx = cli.Context(cfg)
    assert cli._cached(ctx, "stats") is False and cli._cached(ctx, "pressure") is True


def test_failed_stage_is_marked_stale(pipeline_out, tmp_path, monkeypatch, capsys):
    out = tmp_path / "copy"
    shutil.copytree(pipeline_out, out)

    def boom(ctx):
        raise ConvergenceError("transfer operator stalled")

    monkeypatch.setitem(cli.STAGE_FUN, "stats", boom)
    assert cli.main(["stats", "--out", str(out), "--no-cache"]) == 3
    assert "[stage stats]" in capsys.readouterr().err
    stale = io.read_json(out / "stats" / "stale.json", "stale")["data"]
    assert stale["error"] == "ConvergenceError"
    assert not cli._cached(cli.Context(cli.RunConfig.load(None, {"out": str(out)})), "stats")


def test_internal_error_exit_code(pipeline_out, tmp_path, monkeypatch, capsys):
    out = tmp_path / "copy"
    shutil.copytree(pipeline_out, out)
    monkeypatch.setitem(cli.STAGE_FUN, "stats", lambda ctx: 1 / 0)
    assert cli.main(["stats", "--out", str(out), "--no-cache"]) == 1
    assert "internal error [stage stats]" in capsys.readouterr().err


# report ---------------------------------------------------------------------------------

def test_report_matches_schema(pipeline_out):
    doc = json.load(open(pipeline_out / "report.json", encoding="utf-8"))
    cli.validate_report(doc)
    assert [c["id"] for c in doc["data"]["criteria"]] == list(range(1, 13))


def test_tampered_pressure_file_fails(pipeline_out, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(pipeline_out, out)
    p = out / "pressure" / "pressure_curve.csv"
    lines = p.read_text().splitlines()
    t, P, r = lines[3].split(",")
    lines[3] = f"{t},{float(P) + 0.2!r},{r}"
    p.write_text("\n".join(lines) + "\n")
    rep = cli.build_report(cli.RunConfig.load(None, {"out": str(out)}))
    crit3 = rep["criteria"][2]
    assert crit3["name"] == "pressure anchors" and not crit3["pass"]


def test_tower_entropy_helper():
    assert cli.tower_entropy([0.5, 0.5], [2, 2]) == pytest.approx(np.log(2) / 2, abs=1e-12)


def test_determinism_ignores_user_files(pipeline_out, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(pipeline_out, out)
    (out / "run.json").write_text('{"seed": 0}\n')
    res = cli.determinism_check(cli.RunConfig.load(None, {"out": str(out)}))
    assert res["identical"] and "run.json" not in res["differing"]
    assert all(k.split(os.sep)[0] in cli.STAGES for k in io.tree_digests(out)
               if k not in ("run.json", "report.json"))
