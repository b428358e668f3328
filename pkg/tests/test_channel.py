import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

import reference as ref
from mpqkd.channel import (avg_effective_prob, build_click_model, click_probs,
                           effective_intensities, periodic_mean)
from mpqkd.config import DetectorModel, LinkModel, ScenarioConfig, config_to_flat
from mpqkd.pairing import MU, NU, O, round_label

IDEAL = DetectorModel(eta_d0=1.0, eta_d1=1.0, pd0=0.0, pd1=0.0)


def test_vacuum_in_vacuum_out():
    tl, tr = effective_intensities(0.0, 0.0, 1.234, LinkModel(), DetectorModel())
    assert (tl, tr) == (0.0, 0.0)


def test_destructive_interference():
    tl, tr = effective_intensities(0.3, 0.3, math.pi, LinkModel(), IDEAL)
    assert tl == pytest.approx(0.0, abs=1e-15)
    assert tr == pytest.approx(0.6)


def test_published_signal_at_zero_km():
    # 0.78/2 * (0.542 + 0.542 + 2 * 0.542) = 0.84552
    tl, tr = effective_intensities(0.542, 0.542, 0.0, LinkModel(), DetectorModel())
    assert tl == pytest.approx(0.84552, abs=1e-12)
    assert tr == pytest.approx(0.0, abs=1e-15)


def test_dark_counts_only():
    p = 1e-3
    det = DetectorModel(pd0=p, pd1=p)
    ql, qr = click_probs(0.0, 0.0, 0.7, LinkModel(), det)
    assert ql == pytest.approx(p * (1 - p), rel=1e-14)
    assert qr == pytest.approx(p * (1 - p), rel=1e-14)
    assert click_probs(0.0, 0.0, 0.7, LinkModel(), IDEAL) == (0.0, 0.0)


@pytest.mark.parametrize("delta", [0.0, 0.4, math.pi / 2, 2.9])
def test_click_probs_match_reference(delta):
    scen = ScenarioConfig().at_distance(100)
    got = click_probs(0.542, 0.035, delta, scen.link, scen.detector)
    want = ref.clicks(config_to_flat(scen), 0.542, 0.035, delta)
    assert got == pytest.approx(want, rel=1e-13)


def test_vacuum_average_is_zero_without_dark_counts():
    assert avg_effective_prob(0.0, 0.0, LinkModel(), IDEAL) == 0.0


@pytest.mark.parametrize("distance", [0, 100, 400])
@pytest.mark.parametrize("pair", [(0.542, 0.542), (0.035, 0.542), (0.035, 0.035), (0.0, 0.542)])
def test_quadrature_grid_independent(distance, pair):
    scen = ScenarioConfig().at_distance(distance)
    coarse = avg_effective_prob(*pair, scen.link, scen.detector, n_points=512)
    fine = avg_effective_prob(*pair, scen.link, scen.detector, n_points=4096)
    assert abs(coarse - fine) <= 1e-10 * fine
    assert fine == pytest.approx(ref.q_avg(config_to_flat(scen), *_tokens(pair)), rel=1e-11)


def _tokens(pair):
    name = {0.0: "o", 0.035: "v", 0.542: "m"}
    return name[pair[0]], name[pair[1]]


def test_average_matches_sampling():
    scen = ScenarioConfig()
    rng = np.random.default_rng(2024)
    n = 10**7
    delta = rng.uniform(0, 2 * np.pi, n)
    ql, qr = click_probs(0.542, 0.542, delta, scen.link, scen.detector)
    hits = rng.random(n) < ql + qr
    est = hits.mean()
    se = math.sqrt(est * (1 - est) / n)
    exact = avg_effective_prob(0.542, 0.542, scen.link, scen.detector)
    assert abs(est - exact) < 3 * se


def test_original_keeps_everything():
    cm = build_click_model(ScenarioConfig().with_strategy(kind="original"))
    assert cm.q == cm.q0


def test_flexible_full_save_drops_label_two():
    scen = ScenarioConfig().at_distance(50).with_strategy(kind="flexible", p_save=1.0)
    cm = build_click_model(scen)
    label2 = sum(cm.prob_a[i] * cm.prob_b[j] * cm.q_table[i, j]
                 for i in range(3) for j in range(3) if round_label(i, j) == 2)
    assert cm.q == pytest.approx(cm.q0 - label2, rel=1e-14)
    assert cm.q < cm.q0


def test_flexible_small_save_keeps_label_zero_only():
    scen = ScenarioConfig().at_distance(50).with_strategy(kind="flexible", p_save=1e-12)
    cm = build_click_model(scen)
    label0 = sum(cm.prob_a[i] * cm.prob_b[j] * cm.q_table[i, j]
                 for i in range(3) for j in range(3) if round_label(i, j) == 0)
    assert cm.q == pytest.approx(label0, rel=1e-9)


def test_click_model_invariants():
    cm = build_click_model(ScenarioConfig().at_distance(30).with_strategy(p_save=0.3))
    assert np.all((cm.q_table >= 0) & (cm.q_table <= 1))
    assert cm.q0 == pytest.approx(float(np.sum(cm.prob_a[:, None] * cm.prob_b[None, :] * cm.q_table)))
    assert cm.q <= cm.q0


@given(
    ta=st.floats(0, 3), tb=st.floats(0, 3),
    distance=st.floats(0, 500),
    ed0=st.floats(0, 1), ed1=st.floats(0, 1),
    pd0=st.floats(0, 0.5), pd1=st.floats(0, 0.5),
)
def test_probabilities_bounded_on_dense_grid(ta, tb, distance, ed0, ed1, pd0, pd1):
    link = LinkModel(total_distance=distance)
    det = DetectorModel(ed0, ed1, pd0, pd1)
    ql, qr = click_probs(ta, tb, np.linspace(0, 2 * np.pi, 257), link, det)
    assert np.all(ql >= 0) and np.all(qr >= 0)
    assert np.all(ql + qr <= 1 + 1e-15)


@given(ta=st.floats(0, 2), tb=st.floats(0, 2), delta=st.floats(0, 2 * math.pi),
       ed0=st.floats(0.01, 1), ed1=st.floats(0.01, 1))
def test_pi_shift_swaps_ports(ta, tb, delta, ed0, ed1):
    det = DetectorModel(ed0, ed1, 0.0, 0.0)
    tl, _ = effective_intensities(ta, tb, delta, LinkModel(), det)
    _, tr = effective_intensities(ta, tb, delta + math.pi, LinkModel(), det)
    assert tl == pytest.approx(tr * ed0 / ed1, rel=1e-9, abs=1e-12)


def test_average_monotone_in_intensity_and_transmittance():
    det = replace(DetectorModel(), pd0=0.0, pd1=0.0)
    # exactly-one-click probability is monotone only while double clicks stay rare
    taus = [0.0, 0.01, 0.035, 0.1, 0.3, 0.542]
    for distance in (20, 40, 200):
        link = LinkModel(total_distance=distance)
        table = np.array([[avg_effective_prob(a, b, link, det) for b in taus] for a in taus])
        assert np.all(np.diff(table, axis=0) >= -1e-15)
        assert np.all(np.diff(table, axis=1) >= -1e-15)
    for split in (0.2, 0.5, 0.8):
        values = [avg_effective_prob(0.3, 0.2, LinkModel(total_distance=d, split=split), det)
                  for d in (300, 200, 100, 50, 0)]
        assert np.all(np.diff(values) >= 0)


def test_doubling_grid_changes_little():
    scen = ScenarioConfig().at_distance(250)
    for n in (256, 1024):
        a = build_click_model(scen, n_points=n).q_table
        b = build_click_model(scen, n_points=2 * n).q_table
        assert np.max(np.abs(a - b) / b) < 1e-10


def test_periodic_mean_of_cosine_square():
    assert periodic_mean(lambda d: np.cos(d) ** 2, 64) == pytest.approx(0.5, abs=1e-15)


def test_intensity_indices():
    assert (O, NU, MU) == (0, 1, 2)
