import json
import math

import numpy as np
import pytest

from epdwave.experiments import (
    ConvergenceRecord,
    ExperimentConfig,
    ExperimentError,
    binning_report,
    compute_pool,
    draw_subset,
    fit_rate,
    mean_errors,
    read_records,
    run_convergence,
    write_outputs,
    write_records,
)
from epdwave.samplers import SamplerSpec

NS = np.array([10, 20, 35, 60, 100, 160, 200], dtype=float)


def test_fit_exact_power():
    a, b, res = fit_rate(list(zip(NS, 7 * NS ** -0.5)), "power")
    assert a == pytest.approx(7, abs=1e-9) and b == pytest.approx(0.5, abs=1e-9)
    assert res < 1e-12


def test_fit_constant():
    _, b, _ = fit_rate(list(zip(NS, np.full(NS.size, 0.3))), "power")
    assert b == pytest.approx(0, abs=1e-12)


def test_fit_exact_power_log():
    a, b, res = fit_rate(list(zip(NS, 3 * NS ** -0.5 * np.log2(NS))), "power_log")
    assert b == pytest.approx(0.5, abs=1e-9) and a == pytest.approx(3, abs=1e-9)
    assert res < 1e-12


def test_fit_uses_means_over_replicates():
    recs = [ConvergenceRecord(2.0, 0.0, int(n), r, 7 * n ** -0.5 * (1 + 0.1 * (-1) ** r), 0)
            for n in NS for r in range(2)]
    assert fit_rate(recs, "power", 2.0, 0.0)[1] == pytest.approx(0.5, abs=1e-9)


def test_fit_validation():
    with pytest.raises(ValueError):
        fit_rate([(10, 1.0), (20, 0.5)])
    with pytest.raises(ValueError):
        fit_rate([(10, 1.0), (20, 0.0), (30, 0.1)])
    with pytest.raises(ValueError):
        fit_rate([(10, 1.0), (20, 0.5), (30, 0.2)], "cubic")


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(M=10, Ns=(5, 20))
    with pytest.raises(ValueError):
        ExperimentConfig(replicates=0)
    with pytest.raises(ValueError):
        ExperimentConfig(ps=(0.5,))
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})
    cfg = ExperimentConfig(M=50, Ns=(5, 10))
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_subsets_are_deterministic_and_fresh():
    a = draw_subset(100, 20, 0, 0)
    assert np.array_equal(a, draw_subset(100, 20, 0, 0))
    assert len(np.unique(a)) == 20
    assert not np.array_equal(a, draw_subset(100, 20, 0, 1))
    assert np.array_equal(draw_subset(100, 100, 0, 3), np.arange(100))


@pytest.fixture(scope="module")
def small_pool():
    return compute_pool(SamplerSpec(n=40, seed=1), 40)


def small_config(**kw):
    base = dict(sampler=SamplerSpec(n=40, seed=1), M=40, Ns=(5, 10, 40), replicates=2, resolution=5)
    base.update(kw)
    return ExperimentConfig(**base)


def test_small_run_is_deterministic(small_pool, tmp_path):
    cfg = small_config(ps=(1.0, 2.0), taus=(0.0, 1.0))
    recs = run_convergence(cfg, small_pool)
    assert len(recs) == 3 * 2 * 2 * 2
    assert all(r.error >= 0 for r in recs)
    again = run_convergence(cfg, small_pool)
    write_records(recs, tmp_path / "a.csv")
    write_records(again, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back = read_records(tmp_path / "a.csv")
    assert [(r.p, r.tau, r.N, r.replicate, r.error, r.nnz_coeffs) for r in back] == \
        [(r.p, r.tau, r.N, r.replicate, r.error, r.nnz_coeffs) for r in recs]
    for r0, r1 in zip(recs[::2], recs[1::2]):
        if r0.p == r1.p and r1.tau > r0.tau:
            assert r1.nnz_coeffs <= r0.nnz_coeffs


def test_full_sample_beats_small_sample(small_pool):
    recs = run_convergence(small_config(replicates=1), small_pool)
    Ns, means = mean_errors(recs, 2.0, 0.0)
    assert means[-1] < means[0]


def test_outputs(small_pool, tmp_path):
    cfg = small_config(Ns=(5, 10, 20))
    recs = run_convergence(cfg, small_pool)
    paths = write_outputs(recs, cfg, tmp_path / "out", binning_report(small_pool, cfg))
    fits = json.loads(open(paths["fits.json"]).read())
    assert {f["model"] for f in fits} == {"power", "power_log"}
    assert set(fits[0]) == {"p", "tau", "model", "a", "b", "residual"}
    assert ExperimentConfig.from_dict(json.loads(open(paths["config.json"]).read())) == cfg
    binning = json.loads(open(paths["binning.json"]).read())
    assert binning[0]["reference_binning_cost"] > 0
    timings = open(paths["timings.csv"]).read().splitlines()
    assert timings[0] == "p,tau,N,replicate,seconds" and len(timings) == len(recs) + 1


def test_errors_name_the_failing_replicate(small_pool):
    with pytest.raises(ExperimentError, match=r"N=5 replicate=0"):
        run_convergence(small_config(K=30, J=5), small_pool)
    with pytest.raises(ValueError):
        run_convergence(small_config(), small_pool[:10])
