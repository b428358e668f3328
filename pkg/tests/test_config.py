import math
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from mpqkd.config import (ConfigError, ScenarioConfig, SourceModel, dumps_config, load_config,
                          loads_config, save_config)


def test_empty_file_gives_published_defaults(tmp_path):
    path = tmp_path / "empty.toml"
    path.write_text("")
    cfg = load_config(path)
    assert cfg == ScenarioConfig()
    assert (cfg.detector.eta_d0, cfg.detector.eta_d1) == (0.78, 0.78)
    assert (cfg.detector.pd0, cfg.detector.pd1) == (1e-8, 1e-8)
    assert (cfg.alice.mu, cfg.alice.nu, cfg.alice.p_mu, cfg.alice.p_nu) == (0.542, 0.035, 0.261, 0.344)
    assert cfg.link.loss_coeff == 0.2
    assert cfg.strategy.l == 200000
    assert cfg.N == 7.24e13
    assert cfg.M == 16
    mis = cfg.misalignment
    assert (mis.e_hom, mis.delta_f, mis.omega_fiber, mis.clock_f) == (0.04, 10.0, 5.9e3, 1e9)


def test_flat_dotted_keys_are_read():
    cfg = loads_config('mode = "asymptotic"\nlink.total_distance = 150\nstrategy.p_save = 0.25\n')
    assert cfg.mode == "asymptotic"
    assert cfg.link.total_distance == 150.0
    assert cfg.strategy.p_save == 0.25


def test_probabilities_must_sum_to_one():
    with pytest.raises(ConfigError) as err:
        loads_config("alice.p_mu = 0.5\n")
    assert "alice.p_o" in str(err.value)


@pytest.mark.parametrize("text, path", [
    ("detector.eta_d2 = 0.5\n", "detector.eta_d2"),
    ("foo = 1\n", "foo"),
    ("strategy.kind = \"greedy\"\n", "strategy.kind"),
    ("strategy.l = 2.5\n", "strategy.l"),
    ("link.total_distance = \"far\"\n", "link.total_distance"),
    ("alice.nu = 0.6\n", "alice.nu"),
    ("M = 1\n", "M"),
    ("eps.eps_pe = 0\n", "eps.eps_pe"),
    ("misalignment.e_hom = 0.7\n", "misalignment.e_hom"),
    ("strategy.p_save = 0\n", "strategy.p_save"),
])
def test_validation_errors_name_the_field(text, path):
    with pytest.raises(ConfigError) as err:
        loads_config(text)
    assert err.value.path == path


def test_parse_error_is_a_config_error():
    with pytest.raises(ConfigError):
        loads_config("this is = = not valid\n")


def test_round_trip_default(tmp_path):
    path = tmp_path / "cfg.toml"
    save_config(ScenarioConfig(), path)
    assert load_config(path) == ScenarioConfig()


@given(
    distance=st.floats(0, 800, allow_nan=False),
    p_save=st.floats(1e-6, 1.0, exclude_min=False),
    pd=st.floats(0, 1e-3),
    l=st.integers(1, 10**7),
    kind=st.sampled_from(["original", "flexible"]),
    mode=st.sampled_from(["asymptotic", "finite"]),
    enabled=st.booleans(),
)
def test_round_trip_is_exact(distance, p_save, pd, l, kind, mode, enabled):
    cfg = ScenarioConfig()
    cfg = replace(cfg, mode=mode, detector=replace(cfg.detector, pd0=pd),
                  misalignment=replace(cfg.misalignment, enabled=enabled))
    cfg = cfg.at_distance(distance).with_strategy(kind=kind, p_save=p_save, l=l).validate()
    assert loads_config(dumps_config(cfg)) == cfg


def test_source_ordering():
    s = SourceModel()
    assert s.intensities == (0.0, 0.035, 0.542)
    assert math.isclose(sum(s.probs), 1.0, abs_tol=1e-12)


def test_link_symmetric_split():
    link = ScenarioConfig().at_distance(100).link
    assert link.eta_a == link.eta_b == pytest.approx(10 ** (-0.2 * 50 / 10))
    assert link.eta == pytest.approx(0.01)
