import json
from dataclasses import replace

import numpy as np
import pytest

from kickloc.errors import CapacityError, CheckpointError, DomainError
from kickloc.experiment import (
    EnsembleConfig,
    EnsembleRunner,
    OracleCheck,
    SweepConfig,
    TransitionReport,
    estimate_kc,
    read_checkpoint,
    relative_spread,
    resolve_workers,
    resume_ensemble,
    run_ensemble,
    run_k_scan,
    run_method_comparison,
    run_sweep,
    verify_oracle,
    write_run_outputs,
)
from kickloc.measurement import EnsembleRng, MeasurementSpec, RngStream, measured_step
from kickloc.qstate import MapParams, initial_state


def _cfg(**kw):
    base = dict(params=MapParams(2.0, 2.0, 6), spec=MeasurementSpec(6, "trajectories"), M=8, t_max=300, seed=4)
    base.update(kw)
    return EnsembleConfig(**base)


def test_sample_times():
    cfg = _cfg(t_max=20_000)
    t = cfg.sample_times()
    assert t[0] == 1 and t[-1] == 20_000 and 10_000 in t
    assert np.all(np.diff(t) > 0)
    lo, hi = cfg.averaging_window()
    assert (lo, hi) == (18_001, 20_000)
    in_window = t[(t >= lo) & (t <= hi)]
    assert len(in_window) >= 200
    # geometric part: about 30 points per decade below the window
    assert 100 <= np.sum(t < lo) <= 140


@pytest.mark.parametrize(
    "kw",
    [
        dict(M=0),
        dict(t_max=0),
        dict(window_fraction=0.0),
        dict(window_stride=0),
        dict(snapshot_times=(400,)),
        dict(seed=-1),
        dict(n0=32),
        dict(spec=MeasurementSpec(7, "trajectories")),
        dict(spec=MeasurementSpec(None, "none")),  # deterministic with M=8
        dict(spec=MeasurementSpec(2, "density-matrix")),
    ],
)
def test_config_validation(kw):
    with pytest.raises(DomainError):
        _cfg(**kw)


def test_config_dict_round_trip():
    cfg = _cfg(snapshot_times=(10, 5), n0=-3, evolution="circuit")
    back = EnsembleConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg
    assert back.config_hash() == cfg.config_hash()
    assert replace(cfg, checkpoint_every=50).config_hash() == cfg.config_hash()
    assert replace(cfg, seed=5).config_hash() != cfg.config_hash()


def test_resolve_workers(monkeypatch):
    monkeypatch.setenv("KICKLOC_WORKERS", "3")
    assert resolve_workers() == 3
    assert resolve_workers(2) == 2
    monkeypatch.delenv("KICKLOC_WORKERS")
    assert resolve_workers() >= 1
    with pytest.raises(DomainError):
        resolve_workers(0)


def test_runner_row_matches_single_state_path():
    cfg = _cfg(M=3, t_max=40)
    runner = EnsembleRunner(cfg, 1)
    runner.advance_to(40)
    for row in range(3):
        s, rng = initial_state(6), RngStream(cfg.seed, row)
        for _ in range(40):
            s = measured_step(s, cfg.params, cfg.spec, rng)
        np.testing.assert_allclose(runner.psi[row], s.amplitudes, atol=1e-12)


def test_circuit_evolution_matches_fft():
    a = run_ensemble(_cfg(M=2, t_max=30), 1)
    b = run_ensemble(_cfg(M=2, t_max=30, evolution="circuit"), 1)
    np.testing.assert_allclose(a.final_probabilities, b.final_probabilities, atol=1e-10)


@pytest.mark.parametrize("backend", ["trajectories", "random-phase"])
def test_results_independent_of_worker_count(backend, tmp_path):
    cfg = _cfg(spec=MeasurementSpec(3, backend), M=7)
    outs = []
    for w in (1, 2, 4):
        res = run_ensemble(cfg, w)
        write_run_outputs(res, tmp_path / str(w))
        outs.append((tmp_path / str(w) / "series.csv").read_bytes())
        assert np.array_equal(res.final_probabilities, run_ensemble(cfg, 1).final_probabilities)
    assert outs[0] == outs[1] == outs[2]


def test_norm_preserved_in_series():
    res = run_ensemble(_cfg(spec=MeasurementSpec(2, "random-phase"), t_max=500), 2)
    assert np.max(res.series.norm_check) <= 1e-10


def test_density_matrix_run():
    cfg = _cfg(spec=MeasurementSpec(3, "density-matrix"), M=1, t_max=60)
    res = run_ensemble(cfg)
    assert np.max(res.series.norm_check) <= 1e-10
    with pytest.raises(CapacityError):
        EnsembleRunner(replace(cfg, params=MapParams(2.0, 2.0, 9), spec=MeasurementSpec(1, "density-matrix")))


def test_snapshots(tmp_path):
    res = run_ensemble(_cfg(snapshot_times=(0, 50, 300)), 1)
    assert sorted(res.snapshots) == [0, 50, 300]
    assert res.snapshots[0].p[32] == 1
    np.testing.assert_allclose(res.snapshots[300].p, res.final_probabilities.mean(axis=0), atol=1e-15)
    files = write_run_outputs(res, tmp_path, "r")
    assert {f.name for f in files} == {"r.csv", "r.json", "r_dist_t0.csv", "r_dist_t50.csv", "r_dist_t300.csv"}
    meta = json.loads((tmp_path / "r.json").read_text())
    assert meta["cell_length"] == 1 and meta["config"]["M"] == 8
    assert meta["gate_counts_per_step"]["diagonal"] == 1


def test_checkpoint_resume_equals_uninterrupted(tmp_path):
    cfg = _cfg(spec=MeasurementSpec(2, "trajectories"), t_max=400, snapshot_times=(100, 350))
    ck = tmp_path / "run.klck"
    full = run_ensemble(cfg, 2)
    part = run_ensemble(cfg, 2, ck, halt_at=170)
    assert not part.completed and ck.exists()
    resumed = resume_ensemble(ck, workers=3)
    assert resumed.completed
    assert np.array_equal(resumed.final_probabilities, full.final_probabilities)
    for name in ("times", "second_moment", "second_moment_stderr", "ipr", "norm_check"):
        assert np.array_equal(getattr(resumed.series, name), getattr(full.series, name))
    assert np.array_equal(resumed.snapshots[100].p, full.snapshots[100].p)


def test_periodic_checkpoints_do_not_change_results(tmp_path):
    cfg = _cfg(t_max=200)
    a = run_ensemble(cfg, 1)
    b = run_ensemble(replace(cfg, checkpoint_every=50), 1, tmp_path / "c.klck")
    assert np.array_equal(a.final_probabilities, b.final_probabilities)
    assert read_checkpoint(tmp_path / "c.klck").t == 200


def test_checkpoint_rejects_corruption_and_other_configs(tmp_path):
    cfg = _cfg(t_max=100)
    ck = tmp_path / "c.klck"
    run_ensemble(cfg, 1, ck, halt_at=40)
    data = bytearray(ck.read_bytes())
    with pytest.raises(CheckpointError, match="different configuration"):
        read_checkpoint(ck, replace(cfg, params=MapParams(2.5, 2.0, 6)))
    bad = tmp_path / "bad.klck"
    bad.write_bytes(b"XXXX" + bytes(data[4:]))
    with pytest.raises(CheckpointError, match="magic"):
        read_checkpoint(bad)
    flipped = bytearray(data)
    flipped[-100] ^= 0xFF
    bad.write_bytes(bytes(flipped))
    with pytest.raises(CheckpointError, match="corrupted"):
        read_checkpoint(bad)
    bad.write_bytes(bytes(data[:20]))
    with pytest.raises(CheckpointError, match="truncated"):
        read_checkpoint(bad)
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "missing.klck")
    assert read_checkpoint(ck, cfg).t == 40


def test_run_sweep():
    out = run_sweep(_cfg(t_max=50), "k", [1.0, 3.0])
    assert [v for v, _ in out] == [1.0, 3.0]
    assert out[1][1].series.value_at(50) > out[0][1].series.value_at(50)
    with pytest.raises(DomainError):
        run_sweep(_cfg(), "k", [1.0, 1.0])
    with pytest.raises(DomainError):
        run_sweep(_cfg(), "k", [1.0, float("nan")])
    with pytest.raises(DomainError):
        run_sweep(_cfg(), "speed", [1.0])


def test_relative_spread_and_kc():
    assert relative_spread([10, 10, 10]) == 0
    assert relative_spread([8, 12]) == pytest.approx(0.4)
    xi = [[100, 101, 99], [100, 110, 120], [100, 200, 400]]
    assert estimate_kc([2, 4, 6], xi) == 6
    assert estimate_kc([2, 4], xi[:2]) is None


def test_transition_report(tmp_path):
    r = TransitionReport(np.array([2.0, 4.0]), np.array([9, 10]), np.array([[10, 10.5], [50, 90]]), np.array([20, 60.0]), 256, 4.0)
    assert r.xi0_at_kc == 60 and r.xi0_over_L == pytest.approx(60 / 256)
    assert r.consistent()
    r.to_csv(tmp_path / "k.csv")
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert len(lines) == 3
    assert json.loads(json.dumps(r.to_dict()))["k_c"] == 4.0
    none = replace(r, k_c=None)
    assert none.xi0_over_L is None and not none.consistent()


def test_small_k_scan(tmp_path):
    base = _cfg(params=MapParams(1.0, 2.0, 5), spec=MeasurementSpec(1, "trajectories"), M=4, t_max=200)
    sweep = SweepConfig(base, (0.5, 6.0), (5, 6), m_offset=3, outdir=tmp_path)
    rep = run_k_scan(sweep)
    assert rep.xi.shape == (2, 2) and rep.cell_length == 8
    assert (tmp_path / "k_scan.csv").exists() and (tmp_path / "k_scan.json").exists()
    # weak kicks stay near n = 0 whatever the register
    assert rep.spread[0] < 0.05
    with pytest.raises(DomainError):
        SweepConfig(base, (1.0,), (3, 5), m_offset=3)


def test_method_comparison_small():
    cfg = _cfg(params=MapParams(2.0, 2.0, 7), spec=MeasurementSpec(7, "trajectories"), M=200, t_max=400)
    cmp = run_method_comparison(cfg, 2)
    assert cmp.trajectories.config.seed != cmp.random_phase.config.seed
    assert cmp.random_phase.config.spec.backend.value == "random-phase"
    assert cmp.fraction_consistent >= 0.9 and cmp.consistent
    with pytest.raises(DomainError):
        run_method_comparison(_cfg(spec=MeasurementSpec(2, "random-phase")))


def test_oracle_check_statistics():
    chk = OracleCheck(np.array([0.5, 0.5, 0.0]), np.array([0.51, 0.49, 0.0]), 10_000)
    assert chk.max_abs_diff == pytest.approx(0.01)
    assert chk.max_z == pytest.approx(2.0)
    assert chk.passed(3) and not chk.passed(1.5)


def test_verify_oracle_small():
    chk = verify_oracle(MapParams(2.0, 2.0, 3), 2, 10, 20_000, seed=1)
    assert chk.passed()
    exact = verify_oracle(MapParams(2.0, 2.0, 3), None, 10, 5)
    assert exact.max_abs_diff < 1e-12


def test_rng_rows_match_streams():
    ens = EnsembleRng(9, range(3, 7))
    block = ens.at(70)
    for i, row in enumerate(range(3, 7)):
        np.testing.assert_array_equal(block[i], RngStream(9, row).at(70))
