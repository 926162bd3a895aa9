import json

import pytest

from plasmonic_eigs.cli import cli_dispatch
from plasmonic_eigs.config import ConfigError, RunConfig

SMALL_CFG = {"mesh": {"inclusion_rings": 2, "annulus_rings": 3, "angular_segments": 16, "refinements": 0},
             "eigen": {"k_pos": 2, "k_neg": 1, "krylov_dim": 24}}


def _write(tmp_path, d, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return p


def test_roundtrip(tmp_path):
    cfg = RunConfig.from_dict(SMALL_CFG)
    p = tmp_path / "r.json"
    cfg.save(p)
    back = RunConfig.load(p)
    assert back == cfg and back.sha1() == cfg.sha1()
    assert back.to_json() == cfg.to_json()


@pytest.mark.parametrize("d", [{"nope": {}}, {"mesh": {"rings": 3}}, {"eigen": {"tol": -1}},
                               {"geometry": {"deltas": [0.1, 0.2]}}, {"materials": {"sigma_minus": -1.0}},
                               {"outputs": {"formats": ["pdf"]}}, {"eigen": {"k_pos": 20, "krylov_dim": 20}}])
def test_rejects_bad_config(d):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(d)


def test_admissibility():
    assert RunConfig().admissibility() == []
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"materials": {"sigma_minus": -2.0}}).admissibility()
    assert RunConfig.from_dict({"materials": {"sigma_minus": -1.26}}).admissibility()


def test_cli_critical_set(tmp_path, capsys):
    assert cli_dispatch(["critical-set", "--kmax", "3", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "k,eta_k,inv_eta_k" and out[1].startswith("1,-2.0,")
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert [f["path"] for f in man["files"]] == ["critical_set.csv"]


def test_cli_exit_codes(tmp_path):
    bad = _write(tmp_path, {"materials": {"sigma_minus": -1.0}})
    assert cli_dispatch(["solve", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    crit = _write(tmp_path, {"materials": {"sigma_minus": -2.0}}, "crit.json")
    assert cli_dispatch(["solve", "--config", str(crit), "--out", str(tmp_path / "o")]) == 1
    assert cli_dispatch(["solve", "--bogus"]) == 1
    assert cli_dispatch(["solve", "--config", str(tmp_path / "missing.json")]) == 1


def test_cli_solve_is_reproducible(tmp_path):
    cfg = _write(tmp_path, SMALL_CFG)
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert cli_dispatch(["solve", "--config", str(cfg), "--out", str(d)]) == 0
        outs.append(d)
    for name in ("eigen.csv", "eigvec_m1.vtk", "eigvec_p1.vtk"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    rows = (outs[0] / "eigen.csv").read_text().splitlines()
    assert rows[0] == "index,lambda,residual,sign" and rows[1].startswith("-1,")


def test_cli_mesh_and_oracle(tmp_path, monkeypatch):
    monkeypatch.setenv("PLASMONIC_EIGS_OUT", str(tmp_path))
    cfg = _write(tmp_path, SMALL_CFG)
    assert cli_dispatch(["mesh", "--config", str(cfg)]) == 0
    assert (tmp_path / "mesh" / "mesh.txt").exists() and (tmp_path / "mesh" / "mesh.vtk").exists()
    assert cli_dispatch(["oracle", "--kind", "farfield", "--count", "1"]) == 0
    rows = (tmp_path / "oracle" / "oracle.csv").read_text().splitlines()
    assert rows[1].startswith("farfield,0,1,5.78318596")


def test_cli_export_eigvec(tmp_path):
    cfg = _write(tmp_path, SMALL_CFG)
    assert cli_dispatch(["export-eigvec", "--config", str(cfg), "--index", "1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "eigvec_p1.vtk").exists()
    assert cli_dispatch(["export-eigvec", "--config", str(cfg), "--index", "5", "--out", str(tmp_path)]) == 1
