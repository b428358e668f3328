import math
from dataclasses import replace

import numpy as np
import pytest

from mpqkd.channel import build_click_model
from mpqkd.config import DetectorModel, ScenarioConfig, SourceModel
from mpqkd.montecarlo import (beam_splitter_table, chunk_generator, compare_with_analytic,
                              ideal_single_photon_phase_error, run_monte_carlo,
                              single_photon_phase_error)
from mpqkd.pairing import analytic_pairing_efficiency

SHORT = ScenarioConfig().at_distance(20).with_strategy(kind="flexible", p_save=0.5, l=50)


def test_same_seed_same_table():
    a = run_monte_carlo(SHORT, seed=11, rounds=200_000, chunk_size=50_000)
    b = run_monte_carlo(SHORT, seed=11, rounds=200_000, chunk_size=50_000)
    c = run_monte_carlo(SHORT, seed=12, rounds=200_000, chunk_size=50_000)
    assert a.table == b.table and a.gap_sum == b.gap_sum
    assert a.table != c.table


def test_substreams_differ():
    x = chunk_generator(5, 0).random(4)
    y = chunk_generator(5, 1).random(4)
    assert not np.allclose(x, y)
    assert np.array_equal(x, chunk_generator(5, 0).random(4))


def test_vacuum_sources_give_empty_table():
    vac = SourceModel(p_mu=0.0, p_nu=0.0, p_o=1.0)
    scen = replace(ScenarioConfig(), alice=vac, bob=vac, detector=DetectorModel(pd0=0.0, pd1=0.0))
    run = run_monte_carlo(scen, seed=0, rounds=10**6, check_rate=False)
    assert all(v == 0 for v in run.table.counts().values())
    assert run.pairs == 0 and run.kept_rounds == 0
    with pytest.raises(ValueError, match="kept effective rounds"):
        run_monte_carlo(scen, seed=0, rounds=10**6)


def test_misalignment_is_rejected():
    scen = replace(SHORT, misalignment=replace(SHORT.misalignment, enabled=True))
    with pytest.raises(ValueError, match="misalignment"):
        run_monte_carlo(scen, seed=0, rounds=1000)


def test_rounds_must_be_positive():
    with pytest.raises(ValueError):
        run_monte_carlo(SHORT, seed=0, rounds=0)


@pytest.mark.parametrize("tagged", [False, True])
def test_quick_agreement_with_analytic(tagged):
    run = run_monte_carlo(SHORT, seed=99, rounds=10**6, tagged=tagged)
    for row in compare_with_analytic(run, SHORT):
        limit = 3.5 if row.name in ("r", "T_mean_rounds") else 5.0
        assert abs(row.z) < limit, row


def test_chunking_does_not_change_pairing_statistics():
    runs = [run_monte_carlo(SHORT, seed=4, rounds=300_000, chunk_size=cs) for cs in (1 << 12, 1 << 17)]
    for run in runs:
        r_exp = analytic_pairing_efficiency(build_click_model(SHORT).q, SHORT.strategy.l)
        assert abs(run.pairs / run.rounds - r_exp) < 5 * math.sqrt(r_exp / run.rounds)


def test_pairing_efficiency_at_low_click_rate():
    # tune the link so that about one round in a hundred is kept
    scen = ScenarioConfig().at_distance(0).with_strategy(kind="original", l=200)
    scen = replace(scen, detector=replace(scen.detector, eta_d0=0.03, eta_d1=0.03))
    q = build_click_model(scen).q
    assert 0.005 < q < 0.02
    run = run_monte_carlo(scen, seed=21, rounds=2 * 10**6)
    r = analytic_pairing_efficiency(q, 200)
    assert abs(run.pairs / run.rounds - r) < 3 * math.sqrt(r * (1 - r) / run.rounds)


def test_beam_splitter_table_normalised():
    bs = beam_splitter_table(8)
    sums = bs.sum(axis=2)
    assert np.allclose(sums, 1.0, atol=1e-12)
    # Hong-Ou-Mandel: one photon in each port never splits
    assert bs[1, 1, 1] == pytest.approx(0.0, abs=1e-15)
    assert bs[1, 1, 0] == pytest.approx(0.5)


@pytest.mark.parametrize("M", [4, 8, 16, 32])
def test_single_photon_phase_error_ideal_channel(M):
    ideal = replace(ScenarioConfig(), M=M, detector=DetectorModel(1.0, 1.0, 0.0, 0.0)).at_distance(0)
    assert single_photon_phase_error(ideal) == pytest.approx(ideal_single_photon_phase_error(M), abs=1e-6)


def test_single_photon_phase_error_with_loss_and_noise():
    scen = ScenarioConfig().at_distance(50)
    e = single_photon_phase_error(scen)
    assert ideal_single_photon_phase_error(scen.M) <= e < 0.5
    assert single_photon_phase_error(scen, n_points=512) == pytest.approx(e, rel=1e-4)


def test_tagged_run_reports_true_singles():
    run = run_monte_carlo(SHORT, seed=1, rounds=200_000, tagged=True)
    assert run.true_n11_z is not None
    assert 0 < run.true_n11_z <= run.table.n_mu_mu
    assert run_monte_carlo(SHORT, seed=1, rounds=200_000).true_n11_z is None
