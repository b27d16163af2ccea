import json

import numpy as np
import pytest
from click.testing import CliRunner

from isoext.cli import main
from isoext.demos import bump_state
from isoext.extension import strip_data
from isoext.io import (ConfigError, RunConfig, load_boundary_data, load_state, read_obj_vertices,
                       save_boundary_data, save_state, write_obj)


@pytest.fixture
def cli():
    return CliRunner()


def test_state_bundle_roundtrip(tmp_path):
    state = bump_state(resolution=17)
    save_state(tmp_path / "s", state, {"K": 8.0})
    back = load_state(tmp_path / "s")
    assert np.array_equal(back.v.values, state.v.values)
    assert np.array_equal(back.v.jac, state.v.jac)
    assert np.array_equal(back.rho.grad, state.rho.grad)
    assert np.array_equal(back.G.values, state.G.values)
    assert (back.M, back.r, back.tau) == (state.M, state.r, state.tau)
    assert json.loads((tmp_path / "s" / "manifest.json").read_text())["K"] == 8.0


def test_missing_manifest_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_state(tmp_path)


def test_obj_vertices_match_nodes(tmp_path):
    v = bump_state(resolution=17).v
    write_obj(tmp_path / "m.obj", v)
    assert np.array_equal(read_obj_vertices(tmp_path / "m.obj"), v.values.reshape(-1, 3))
    faces = [ln for ln in (tmp_path / "m.obj").read_text().splitlines() if ln.startswith("f ")]
    assert len(faces) == 2 * 16 * 16


def test_boundary_data_roundtrip(tmp_path):
    data = strip_data(resolution=(17, 17))
    save_boundary_data(tmp_path / "b.npz", data)
    back = load_boundary_data(tmp_path / "b.npz")
    assert back.grid == data.grid
    assert np.array_equal(back.f, data.f) and np.array_equal(back.mu_hess, data.mu_hess)


def test_config_rejects_unknown_fields():
    with pytest.raises(ConfigError, match="bogus"):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError, match="Q"):
        RunConfig.from_dict({"schedule": {"Q": 3}})


@pytest.mark.parametrize("section, value", [("a", 0.6), ("A", 1.0), ("tol", -1.0), ("Q_max", 1.5)])
def test_config_rejects_bad_schedule(section, value):
    with pytest.raises(ConfigError, match=section):
        RunConfig.from_dict({"schedule": {section: value}})


def test_config_roundtrip(tmp_path):
    cfg = RunConfig.from_dict({"schedule": {"A": 32.0}, "grid": {"resolution": [65, 65]}})
    cfg.save(tmp_path / "c.json")
    assert RunConfig.load(tmp_path / "c.json") == cfg


def test_corrugation_table_is_deterministic(cli, tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        res = cli.invoke(main, ["demo-corrugation", "--ns", "8", "--nt", "16",
                                "--out", str(tmp_path / name)])
        assert res.exit_code == 0, res.output
        outs.append((tmp_path / name).read_text())
    assert outs[0] == outs[1]
    lines = outs[0].splitlines()
    assert lines[0] == "s,t,gamma1,gamma2,residual" and len(lines) == 1 + 8 * 16


def test_decompose_matrix(cli):
    res = cli.invoke(main, ["decompose", "--frame", "standard", "--matrix", "1.1,0;0,1"])
    assert res.exit_code == 0
    a = np.array(json.loads(res.output)["a"])
    assert np.allclose(a ** 2, [1.1, 1.0, 0.0], atol=1e-14)


def test_decompose_rejects_asymmetric_matrix(cli):
    res = cli.invoke(main, ["decompose", "--matrix", "1,0.1;0,1"])
    assert res.exit_code == 2


def test_extend_straight_line_exits_with_math_failure(cli, tmp_path):
    res = cli.invoke(main, ["extend", "--demo", "line", "--resolution", "33", "33",
                            "--out", str(tmp_path)])
    assert res.exit_code == 3
    margins = json.loads((tmp_path / "margins.json").read_text())
    assert margins["condition"]["margin"] <= 0 and not margins["condition"]["admissible"]


def test_extend_missing_field_exits_with_validation_error(cli, tmp_path):
    data = strip_data(resolution=(17, 17))
    save_boundary_data(tmp_path / "b.npz", data)
    arrays = dict(np.load(tmp_path / "b.npz"))
    del arrays["mu"]
    np.savez(tmp_path / "bad.npz", **arrays)
    res = cli.invoke(main, ["extend", "--data", str(tmp_path / "bad.npz"), "--out", str(tmp_path)])
    assert res.exit_code == 2
    assert "mu" in res.output


def test_extend_then_iterate(cli, tmp_path):
    res = cli.invoke(main, ["extend", "--demo", "strip", "--resolution", "65", "65",
                            "--K", "32", "--out", str(tmp_path / "ext")])
    assert res.exit_code == 0, res.output
    margins = json.loads((tmp_path / "ext" / "margins.json").read_text())
    assert margins["definition"]["boundary_trace"] == 0.0
    state = load_state(tmp_path / "ext" / "state")
    assert np.array_equal(read_obj_vertices(tmp_path / "ext" / "extension.obj"),
                          state.v.values.reshape(-1, 3))
    # the desk-scale extension radius is above r2, so strict iteration gives up
    res = cli.invoke(main, ["iterate", "--state", str(tmp_path / "ext" / "state"), "--q-max", "1",
                            "--out", str(tmp_path / "it")])
    assert res.exit_code == 4
    summary = json.loads((tmp_path / "it" / "summary.json").read_text())
    assert summary["stop_reason"] == "escalation exhausted"


def test_iterate_demo_is_deterministic(cli, tmp_path):
    reports = []
    for name in ("x", "y"):
        res = cli.invoke(main, ["iterate", "--demo-bump", "0.4", "--tol", "0", "--q-max", "2",
                                "--no-strict", "--no-meshes", "--out", str(tmp_path / name)])
        assert res.exit_code == 0, res.output
        reports.append((tmp_path / name / "report.csv").read_text())
    assert reports[0] == reports[1]
    assert len(reports[0].splitlines()) == 3


def test_iterate_rejects_alpha_at_theorem_bound(cli, tmp_path):
    res = cli.invoke(main, ["iterate", "--demo-bump", "0.4", "--alpha", "0.2",
                            "--out", str(tmp_path)])
    assert res.exit_code == 2
    assert "1/(n(n+1)+1)" in res.output


def test_iterate_needs_exactly_one_source(cli, tmp_path):
    res = cli.invoke(main, ["iterate", "--out", str(tmp_path)])
    assert res.exit_code == 2
