import json
import os

import numpy as np
import pytest

from frustro.errors import ConfigError, ParameterError, SweepError, TruncationError
from frustro.runner import (ExperimentConfig, SweepResult,
                            compare_frustrated_unfrustrated, emit_figure_data,
                            run_sweep)
from frustro.scattering import load_record

# small free-packet geometry, fast enough to run in a fixture
FAST = dict(sigma_omega=0.6, length=35, boson_dim=3, chi=12, workers=0)


@pytest.fixture(scope="module")
def free_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    cfg = ExperimentConfig(alphas=[0.0], omegas=[5.0], out_dir=str(out),
                           **FAST)
    return run_sweep(cfg)


def test_config_roundtrip_and_hash():
    cfg = ExperimentConfig(alphas=[0.1, 0.2], omegas=[1.0, 2.0],
                           out_dir="a", workers=3)
    cfg2 = ExperimentConfig.from_json(cfg.to_json())
    assert cfg2 == cfg
    # execution details stay out of the provenance hash
    moved = ExperimentConfig(alphas=[0.1, 0.2], omegas=[1.0, 2.0],
                             out_dir="elsewhere", workers=None)
    assert moved.config_hash() == cfg.config_hash()
    physics = ExperimentConfig(alphas=[0.1, 0.2], omegas=[1.0, 2.5],
                               out_dir="a", workers=3)
    assert physics.config_hash() != cfg.config_hash()


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        ExperimentConfig(alphas=[2.5], omegas=[1.0])
    with pytest.raises(ConfigError):
        ExperimentConfig(alphas=[0.1], omegas=[])
    with pytest.raises(ConfigError):
        ExperimentConfig(alphas=[0.1], omegas=[1.0], variant="twisted")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"alphas": [0.1], "omegas": [1.0],
                                    "turbo": True})


def test_free_sweep_is_transparent(free_sweep):
    # with the couplings off the packet passes through unchanged
    assert free_sweep.n_failed == 0
    s = free_sweep.cells[0]["summary"]
    assert s["p_transmit"] == pytest.approx(1.0, abs=1e-3)
    assert abs(s["gamma_total"]) < 1e-3
    assert s["n_inelastic_x"] == pytest.approx(0.0, abs=1e-3)


def test_manifest_roundtrip(free_sweep):
    loaded = SweepResult.load(free_sweep.manifest_path())
    assert loaded.config == free_sweep.config
    assert loaded.config_hash == free_sweep.config_hash
    assert len(loaded.cells) == len(free_sweep.cells)
    recs = list(loaded.records())
    assert len(recs) == 1
    alpha, omega_bar, rec = recs[0]
    assert alpha == 0.0
    assert rec.length == 35


def test_manifest_tamper_detection(free_sweep, tmp_path):
    with open(free_sweep.manifest_path()) as fh:
        doc = json.load(fh)
    doc["config"]["chi"] = doc["config"]["chi"] + 2
    bad = tmp_path / "tampered.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="provenance"):
        SweepResult.load(str(bad))


def test_no_partial_files(free_sweep):
    leftovers = [n for n in os.listdir(free_sweep.config.out_dir)
                 if n.endswith(".part")]
    assert leftovers == []


def test_emit_fig2_files_and_determinism(free_sweep, tmp_path):
    out = tmp_path / "fig2"
    paths = emit_figure_data(free_sweep, "fig2", out_dir=str(out))
    names = [os.path.basename(p) for p in paths]
    assert sorted(n for n in names if "numeric" in n) == [
        "elastic_r2_numeric.csv", "elastic_t2_numeric.csv",
        "elastic_tyx2_numeric.csv"]
    assert sorted(n for n in names if "analytic" in n) == [
        "elastic_r2_analytic.csv", "elastic_t2_analytic.csv",
        "elastic_tyx2_analytic.csv"]
    assert names[-1] == "manifest.json"
    blobs = {p: open(p, "rb").read() for p in paths}
    again = emit_figure_data(free_sweep, "fig2", out_dir=str(out))
    for p in again:
        assert open(p, "rb").read() == blobs[p]
    # every output names the producing config
    for p in paths[:-1]:
        first = open(p).readline()
        assert free_sweep.config_hash in first


def test_emit_fig3_counts(free_sweep, tmp_path):
    out = tmp_path / "fig3"
    paths = emit_figure_data(free_sweep, "fig3", out_dir=str(out))
    names = [os.path.basename(p) for p in paths]
    assert names == ["elastic_counts.csv", "inelastic_counts.csv",
                     "manifest.json"]
    rows = open(paths[0]).read().splitlines()
    assert rows[1].split(",")[0] == "alpha"
    assert len(rows) == 3


def test_emit_figs2_manifest_only(free_sweep, tmp_path):
    paths = emit_figure_data(free_sweep, "figS2", out_dir=str(tmp_path / "s2"))
    assert [os.path.basename(p) for p in paths] == ["manifest.json"]
    doc = json.load(open(paths[0]))
    assert doc["files"] == []


def test_emit_rejects_bad_requests(free_sweep, tmp_path):
    with pytest.raises(ParameterError, match="unknown figure"):
        emit_figure_data(free_sweep, "fig9")
    # supplementary heatmaps need the parallel layout
    with pytest.raises(ConfigError, match="parallel"):
        emit_figure_data(free_sweep, "figS3", out_dir=str(tmp_path))


def test_partial_failures_recorded(free_sweep, tmp_path, monkeypatch):
    import frustro.runner as runner_mod
    rec = load_record(free_sweep.cells[0]["path"])

    def fake_run(scfg, ground=None):
        if abs(scfg.k0 - 0.3) < 1e-9:
            raise TruncationError("lost the state")
        return rec

    monkeypatch.setattr(runner_mod, "ground_state", lambda c: None)
    monkeypatch.setattr(runner_mod, "run_scattering", fake_run)
    cfg = ExperimentConfig(alphas=[0.0], omegas=[1.0, 2.0, 3.0, 4.0, 5.0],
                           out_dir=str(tmp_path), **FAST)
    res = run_sweep(cfg)
    assert res.n_failed == 1
    bad = [c for c in res.cells if "error" in c]
    assert bad[0]["omega_bar"] == 3.0
    assert "TruncationError" in bad[0]["error"]
    # the good cells still made it into the merged table
    assert len(res.counts_rows()) == 4


def test_too_many_failures_raise(free_sweep, tmp_path, monkeypatch):
    import frustro.runner as runner_mod

    def fake_run(scfg, ground=None):
        raise TruncationError("lost the state")

    monkeypatch.setattr(runner_mod, "ground_state", lambda c: None)
    monkeypatch.setattr(runner_mod, "run_scattering", fake_run)
    cfg = ExperimentConfig(alphas=[0.0], omegas=[1.0, 2.0], out_dir=str(tmp_path),
                           **FAST)
    with pytest.raises(SweepError, match="2 of 2"):
        run_sweep(cfg)
    # the manifest with the error entries was still written
    manifest = os.path.join(str(tmp_path), f"sweep-{cfg.config_hash()}.json")
    doc = json.load(open(manifest))
    assert all("error" in c for c in doc["cells"])


def test_compare_layouts_agree_at_zero_coupling(tmp_path):
    cfg = ExperimentConfig(alphas=[0.0], omegas=[5.0], out_dir=str(tmp_path),
                           **FAST)
    rows, path = compare_frustrated_unfrustrated(cfg)
    assert os.path.exists(path)
    assert len(rows) == 1
    row = rows[0]
    n_el_frustrated, n_el_parallel = row[2], row[5]
    assert n_el_frustrated == pytest.approx(n_el_parallel, abs=0.01)
    assert abs(row[4]) < 0.01 and abs(row[7]) < 0.01
