import csv
import json
import os

import numpy as np
import pytest

from kerrlattice.cli import main


def _cfg(tmp_path, text):
    path = tmp_path / "run.toml"
    path.write_text(text)
    return str(path)


def _read(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _meta(out):
    with open(os.path.join(out, "meta.json")) as fh:
        return json.load(fh)


SMALL = """
[model]
g = {g}
j = {j}
[numerics]
n_levels = 15
n_k = 9
"""


@pytest.mark.parametrize("text", [
    "[model]\nbogus = 1\n",
    "[nonsense]\nx = 1\n",
    "[model]\ng = 'three'\n",
    "[model]\nkappa = -1.0\n",
    "[model]\ndelta_mode = 'sideways'\n",
    "[output]\nformat = 'xml'\n",
    "not toml [[[",
])
def test_config_errors_exit_2(tmp_path, capsys, text):
    out = tmp_path / "out"
    assert main(["steady", "--config", _cfg(tmp_path, text), "--out", str(out)]) == 2
    assert "config error" in capsys.readouterr().err
    assert not out.exists()


def test_missing_config_file(tmp_path):
    assert main(["steady", "--config", str(tmp_path / "absent.toml")]) == 2


def test_vacuum_steady_state(tmp_path):
    out = str(tmp_path / "out")
    assert main(["steady", "--config", _cfg(tmp_path, SMALL.format(g=0.0, j=0.0)), "--out", out]) == 0
    rows = _read(os.path.join(out, "steady.csv"))
    assert len(rows) == 1
    r = rows[0]
    assert r["branch"] == "symmetric" and r["flags"] == "converged"
    assert float(r["re_alpha"]) == 0 and float(r["im_alpha"]) == 0
    assert abs(float(r["n"])) < 1e-12 and abs(float(r["purity"]) - 1) < 1e-12
    assert os.path.exists(os.path.join(out, "plot_steady.py"))


def test_rerun_is_byte_identical(tmp_path):
    cfg = _cfg(tmp_path, SMALL.format(g=3.0, j=0.5) + "[steady]\nj_values = [0.2, 0.5]\n")
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["steady", "--config", cfg, "--out", a]) == 0
    assert main(["steady", "--config", cfg, "--out", b]) == 0
    with open(os.path.join(a, "steady.csv"), "rb") as fa, open(os.path.join(b, "steady.csv"), "rb") as fb:
        assert fa.read() == fb.read()


def test_meta_contents(tmp_path):
    out = str(tmp_path / "out")
    cfg = _cfg(tmp_path, SMALL.format(g=1.0, j=0.1))
    assert main(["steady", "--config", cfg, "--out", out, "--check-truncation"]) == 0
    meta = _meta(out)
    for key in ("config", "version", "flags", "truncation", "failures", "exit_code", "wall_time_s", "timestamp"):
        assert key in meta
    assert meta["config"]["model"]["g"] == 1.0
    assert meta["config"]["numerics"]["n_levels"] == 15
    assert meta["flags"]["check_truncation"] is True
    assert meta["truncation"]["n_levels"] == [15, 25]
    assert meta["truncation"]["max_relative_drift"] < 1e-3
    assert meta["exit_code"] == 0 and meta["failures"] == []


def test_broken_wigner_unavailable_exits_3(tmp_path, capsys):
    out = str(tmp_path / "out")
    cfg = _cfg(tmp_path, SMALL.format(g=0.0, j=0.0) + "[wigner]\nbranch = 'broken'\n")
    assert main(["wigner", "--config", cfg, "--out", out]) == 3
    assert "BranchUnavailable" in capsys.readouterr().err
    meta = _meta(out)
    assert meta["exit_code"] == 3 and meta["failures"]


def test_wigner_output(tmp_path):
    out = str(tmp_path / "out")
    cfg = _cfg(tmp_path, SMALL.format(g=0.0, j=0.0) + "[wigner]\nn_points = 21\nhalf_width = 3.0\n")
    assert main(["wigner", "--config", cfg, "--out", out]) == 0
    with open(os.path.join(out, "wigner.csv")) as fh:
        head = [ln for ln in fh if ln.startswith("#")]
    assert "# branch=symmetric\n" in head
    rows = _read(os.path.join(out, "wigner.csv"))
    assert len(rows) == 21 * 21
    w = {(float(r["re_z"]), float(r["im_z"])): float(r["w"]) for r in rows}
    assert w[(0.0, 0.0)] == pytest.approx(2 / np.pi, rel=1e-8)  # vacuum


def test_single_cell_sweep(tmp_path):
    out = str(tmp_path / "out")
    text = SMALL.format(g=0.0, j=0.0) + "[sweep]\nj_min = 0.1\nj_max = 0.1\nn_j = 1\ng_min = 0.2\ng_max = 0.2\nn_g = 1\n"
    assert main(["sweep", "--config", _cfg(tmp_path, text), "--out", out]) == 0
    rows = _read(os.path.join(out, "phase.csv"))
    assert len(rows) == 1
    assert rows[0]["n_branches"] == "1" and rows[0]["flags"] == "Converged"
    assert float(rows[0]["max_im_omega"]) < 0


def test_dynamics_from_vacuum(tmp_path):
    out = str(tmp_path / "out")
    text = SMALL.format(g=1.0, j=0.1) + "[dynamics]\nalpha0 = [0.0, [0.3, 0.1]]\n[integrator]\nt_max = 2.0\n"
    assert main(["dynamics", "--config", _cfg(tmp_path, text), "--out", out]) == 0
    traj = _read(os.path.join(out, "traj_0.csv"))
    assert len(traj) == 21
    assert all(float(r["re_alpha"]) == 0 and float(r["im_alpha"]) == 0 for r in traj)
    ends = _read(os.path.join(out, "endpoints.csv"))
    assert [e["idx"] for e in ends] == ["0", "1"]
    assert float(ends[1]["re_alpha0"]) == 0.3 and float(ends[1]["im_alpha0"]) == 0.1
    assert ends[0]["class"] == "undecided"  # t_max reached before the stop rule
    assert os.path.exists(os.path.join(out, "traj_1.csv"))


def test_fixed_step_dynamics_reproducible(tmp_path):
    text = SMALL.format(g=1.0, j=0.1) + "[dynamics]\nalpha0 = [0.5]\n[integrator]\nt_max = 0.5\n"
    cfg = _cfg(tmp_path, text)
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["dynamics", "--config", cfg, "--out", a, "--fixed-step"]) == 0
    assert main(["dynamics", "--config", cfg, "--out", b, "--fixed-step"]) == 0
    assert _meta(a)["integrator_method"] == "rk4"
    with open(os.path.join(a, "traj_0.csv"), "rb") as fa, open(os.path.join(b, "traj_0.csv"), "rb") as fb:
        assert fa.read() == fb.read()


def test_json_format(tmp_path):
    out = str(tmp_path / "out")
    cfg = _cfg(tmp_path, SMALL.format(g=0.0, j=0.0) + "[output]\nformat = 'json'\n")
    assert main(["steady", "--config", cfg, "--out", out]) == 0
    with open(os.path.join(out, "steady.json")) as fh:
        data = json.load(fh)
    assert data["columns"][0] == "j" and len(data["rows"]) == 1
    assert not os.path.exists(os.path.join(out, "steady.csv"))


def test_uncoupled_dispersion_is_flat(tmp_path):
    out = str(tmp_path / "out")
    assert main(["stability", "--config", _cfg(tmp_path, SMALL.format(g=1.0, j=0.0)), "--out", out]) == 0
    rows = _read(os.path.join(out, "dispersion.csv"))
    assert len(rows) == 9
    im = np.array([float(r["max_im_at_k"]) for r in rows])
    assert np.ptp(im) < 1e-9 and im.max() < 0
    assert _meta(out)["stability_formulation"] == "conjugate-channel"


def test_workers_override_validation(tmp_path):
    assert main(["steady", "--workers", "0", "--out", str(tmp_path / "o")]) == 2
