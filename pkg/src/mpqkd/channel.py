"""Single-round click statistics of the two-detector interference station.

Intensity choices are indexed 0, 1, 2 for vacuum, decoy and signal. Phase
averages use a fixed uniform grid on [0, 2*pi); for smooth periodic
integrands this trapezoidal rule converges spectrally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import DetectorModel, LinkModel, ScenarioConfig
from .pairing import MU, NU, O, save_probability_table

INTENSITY_NAMES = ("o", "nu", "mu")
QUAD_POINTS = 1024


def phase_grid(n_points: int = QUAD_POINTS) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n_points) / n_points


def periodic_mean(func: Callable[[np.ndarray], np.ndarray], n_points: int = QUAD_POINTS) -> float:
    """(1/2pi) * integral over one period of ``func``, trapezoidal on a uniform grid."""
    return float(np.mean(func(phase_grid(n_points))))


def effective_intensities(tau_a, tau_b, delta, link: LinkModel, det: DetectorModel):
    """Mean photon numbers reaching the left and right detectors."""
    xa = link.eta_a * np.asarray(tau_a, dtype=float)
    xb = link.eta_b * np.asarray(tau_b, dtype=float)
    cross = 2.0 * np.sqrt(xa * xb) * np.cos(delta)
    tau_l = 0.5 * det.eta_d0 * (xa + xb + cross)
    tau_r = 0.5 * det.eta_d1 * (xa + xb - cross)
    # rounding can push a perfectly dark port a hair below zero
    return np.maximum(tau_l, 0.0), np.maximum(tau_r, 0.0)


def click_probs(tau_a, tau_b, delta, link: LinkModel, det: DetectorModel):
    """Probabilities that only the left / only the right detector clicks."""
    tau_l, tau_r = effective_intensities(tau_a, tau_b, delta, link, det)
    no_l = (1.0 - det.pd0) * np.exp(-tau_l)
    no_r = (1.0 - det.pd1) * np.exp(-tau_r)
    return (1.0 - no_l) * no_r, no_l * (1.0 - no_r)


def avg_effective_prob(tau_a: float, tau_b: float, link: LinkModel, det: DetectorModel,
                       n_points: int = QUAD_POINTS) -> float:
    def integrand(delta):
        ql, qr = click_probs(tau_a, tau_b, delta, link, det)
        return ql + qr

    return periodic_mean(integrand, n_points)


@dataclass(frozen=True)
class ClickModel:
    """Tabulated effective-round probabilities for one scenario.

    ``q_table[ia, ib]`` is the phase-averaged probability that exactly one
    detector clicks when Alice sends intensity ``ia`` and Bob ``ib``.
    """

    q_table: np.ndarray
    save_table: np.ndarray
    prob_a: np.ndarray
    prob_b: np.ndarray
    tau_a: np.ndarray
    tau_b: np.ndarray
    q0: float
    q: float
    link: LinkModel
    det: DetectorModel
    n_points: int = QUAD_POINTS

    def clicks(self, ia: int, ib: int, delta):
        """Per-phase (qL, qR) for the intensity pair (ia, ib)."""
        return click_probs(self.tau_a[ia], self.tau_b[ib], delta, self.link, self.det)

    def phase_average(self, func: Callable[[np.ndarray], np.ndarray]) -> float:
        return periodic_mean(func, self.n_points)

    def as_dict(self) -> dict:
        return {
            "q": {f"{INTENSITY_NAMES[i]},{INTENSITY_NAMES[j]}": float(self.q_table[i, j])
                  for i in range(3) for j in range(3)},
            "q0": self.q0,
            "q_saved": self.q,
        }


def build_click_model(scenario: ScenarioConfig, n_points: int = QUAD_POINTS) -> ClickModel:
    link, det = scenario.link, scenario.detector
    tau_a = np.array(scenario.alice.intensities)
    tau_b = np.array(scenario.bob.intensities)
    prob_a = np.array(scenario.alice.probs)
    prob_b = np.array(scenario.bob.probs)

    grid = phase_grid(n_points)
    ql, qr = click_probs(tau_a[:, None, None], tau_b[None, :, None], grid[None, None, :], link, det)
    q_table = np.mean(ql + qr, axis=-1)

    save = save_probability_table(scenario.strategy)
    weights = prob_a[:, None] * prob_b[None, :] * q_table
    q0 = float(np.sum(weights))
    q = float(np.sum(weights * save))
    return ClickModel(q_table=q_table, save_table=save, prob_a=prob_a, prob_b=prob_b,
                      tau_a=tau_a, tau_b=tau_b, q0=q0, q=q, link=link, det=det, n_points=n_points)
