"""Round labels, the save-probability map, greedy pairing and the analytic
expected pair counts.

Intensity indices: 0 = vacuum (o), 1 = decoy (nu), 2 = signal (mu).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

O, NU, MU = 0, 1, 2

# sum classes of a party's two intensity choices within a pair
CLASS_MEMBERS = {
    "o": ((O, O),),
    "nu": ((O, NU), (NU, O)),
    "mu": ((O, MU), (MU, O)),
    "2nu": ((NU, NU),),
    "2mu": ((MU, MU),),
    "mu+nu": ((MU, NU), (NU, MU)),
}
CLASSES = tuple(CLASS_MEMBERS)
_CLASS_OF = {pair: name for name, members in CLASS_MEMBERS.items() for pair in members}


def sum_class(first: int, second: int) -> str:
    return _CLASS_OF[(first, second)]


def round_label(ia: int, ib: int) -> int:
    """Announcement label of an effective round.

    0: nobody sent the decoy; 1: decoy against vacuum; 2: decoy against
    signal; 3: both sent the decoy.
    """
    if ia != NU and ib != NU:
        return 0
    if ia == NU and ib == NU:
        return 3
    other = ib if ia == NU else ia
    return 1 if other == O else 2


def save_probability(ia: int, ib: int, strategy) -> float:
    """Probability that an effective round with choices (ia, ib) is kept for pairing."""
    if strategy.kind == "original":
        return 1.0
    label = round_label(ia, ib)
    if label == 0:
        return 1.0
    if label == 2:
        return 0.0
    return float(strategy.p_save)


def save_probability_table(strategy) -> np.ndarray:
    return np.array([[save_probability(i, j, strategy) for j in range(3)] for i in range(3)])


# --------------------------------------------------------------------------
# greedy pairing


def filter_rounds(labels: Sequence[int], clicks: Sequence[int], keep_bits: Sequence[int]) -> list[int]:
    """First stage of the flexible strategy: the kept-effective flags C'.

    ``keep_bits`` are the pre-drawn Bernoulli(p_save) coins, one per round.
    """
    out = []
    for label, c, s in zip(labels, clicks, keep_bits):
        if label == 0:
            out.append(int(c))
        elif label == 2:
            out.append(0)
        else:
            out.append(int(s) * int(c))
    return out


def pair_rounds(flags: Sequence[int], l: int) -> list[tuple[int, int]]:
    """Pair kept effective rounds left to right, at most ``l`` apart.

    Indices are 0-based. A front whose next kept round lies more than ``l``
    away is replaced by that round. A front still open at the end of the
    sequence is dropped.
    """
    pairs = []
    open_front = False
    front = 0
    for i, c in enumerate(flags):
        if c != 1:
            continue
        if not open_front:
            front = i
            open_front = True
        elif i - front <= l:
            pairs.append((front, i))
            open_front = False
        else:
            front = i
    return pairs


def pair_positions(positions: Sequence[int], l: int):
    """Pair an increasing sequence of kept-round positions.

    Same rule as :func:`pair_rounds`, but driven by the kept positions
    only. Returns ``(front_idx, rear_idx, open_idx)``: indices into
    ``positions`` of each pair's rounds, and of the front left open at the
    end (-1 if none) so a caller can carry it into the next chunk.
    """
    fronts: list[int] = []
    rears: list[int] = []
    cur = -1
    cur_pos = 0
    for idx, p in enumerate(positions):
        if cur < 0:
            cur, cur_pos = idx, p
        elif p - cur_pos <= l:
            fronts.append(cur)
            rears.append(idx)
            cur = -1
        else:
            cur, cur_pos = idx, p
    return np.array(fronts, dtype=np.int64), np.array(rears, dtype=np.int64), cur


# --------------------------------------------------------------------------
# analytic pairing statistics


def analytic_pairing_efficiency(q: float, l: int) -> float:
    """Expected pairs per round for kept-round probability ``q``."""
    if q <= 0.0:
        return 0.0
    hit = -math.expm1(l * math.log1p(-q)) if q < 1.0 else 1.0
    return 1.0 / (1.0 / q + (1.0 / q) / hit)


def mean_pairing_interval(q: float, l: int, clock_f: float) -> float:
    """Average time between the two rounds of a pair, in seconds."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    if q == 1.0:
        return 1.0 / clock_f
    hit = -math.expm1(l * math.log1p(-q))
    return (1.0 - l * q * (1.0 / hit - 1.0)) / (q * clock_f)


COUNT_KEYS = (
    "n_mu_mu", "n_o_mu", "n_mu_o", "n_o_o",
    "n_nu_nu_prime", "n_nu_nu_dprime", "n_o_nu", "n_nu_o",
    "n_2nu_2nu", "n_o_2nu", "n_2nu_o",
    "m_z", "m_x",
)

# (Alice class, Bob class) for the plain sum-class entries
PLAIN_CLASSES = {
    "n_mu_mu": ("mu", "mu"),
    "n_o_mu": ("o", "mu"),
    "n_mu_o": ("mu", "o"),
    "n_o_o": ("o", "o"),
    "n_o_nu": ("o", "nu"),
    "n_nu_o": ("nu", "o"),
    "n_o_2nu": ("o", "2nu"),
    "n_2nu_o": ("2nu", "o"),
}


@dataclass
class PairCountTable:
    """Pair counts by intensity class; expected values or observed tallies."""

    n_mu_mu: float = 0.0
    n_o_mu: float = 0.0
    n_mu_o: float = 0.0
    n_o_o: float = 0.0
    n_nu_nu_prime: float = 0.0
    n_nu_nu_dprime: float = 0.0
    n_o_nu: float = 0.0
    n_nu_o: float = 0.0
    n_2nu_2nu: float = 0.0
    n_o_2nu: float = 0.0
    n_2nu_o: float = 0.0
    m_z: float = 0.0
    m_x: float = 0.0
    n_tot: float = 0.0
    mode: str = "analytic-expected"

    def counts(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in COUNT_KEYS}

    def as_dict(self) -> dict:
        return asdict(self)

    def scaled(self, factor: float) -> "PairCountTable":
        data = {k: v * factor for k, v in self.counts().items()}
        return PairCountTable(**data, n_tot=self.n_tot * factor, mode=self.mode)

    def integerized(self) -> "PairCountTable":
        data = {k: float(round(v)) for k, v in self.counts().items()}
        return PairCountTable(**data, n_tot=float(round(self.n_tot)), mode=self.mode)


def class_pair_sum(weights: np.ndarray, cls_a: str, cls_b: str) -> float:
    """Sum of w[aj, bj] * w[ak, bk] over ordered choices in the two classes."""
    total = 0.0
    for aj, ak in CLASS_MEMBERS[cls_a]:
        for bj, bk in CLASS_MEMBERS[cls_b]:
            total += weights[aj, bj] * weights[ak, bk]
    return total


def x_basis_integrals(click_model, theta: float = 0.0, e_hom: float | None = None):
    """Phase averages entering the X-basis counts for the (nu, nu) round.

    Returns ``(mean[(qL+qR)^2], error integrand mean)``. Without
    misalignment (``e_hom is None``) the error term is ``2 mean[qL qR]``.
    """
    def total_sq(delta):
        ql, qr = click_model.clicks(NU, NU, delta)
        return (ql + qr) ** 2

    n_int = click_model.phase_average(total_sq)
    if e_hom is None:
        def err(delta):
            ql, qr = click_model.clicks(NU, NU, delta)
            return 2.0 * ql * qr
    else:
        def err(delta):
            ql, qr = click_model.clicks(NU, NU, delta)
            ql2, qr2 = click_model.clicks(NU, NU, delta + theta)
            return (1.0 - e_hom) * (ql * qr2 + qr * ql2) + e_hom * (ql * ql2 + qr * qr2)
    m_int = click_model.phase_average(err)
    return n_int, m_int


def misalignment_phase(scenario, q: float) -> float:
    mis = scenario.misalignment
    t_mean = mean_pairing_interval(q, scenario.strategy.l, mis.clock_f)
    return t_mean * (2.0 * math.pi * mis.delta_f + mis.omega_fiber)


def analytic_pair_counts(scenario, click_model) -> PairCountTable:
    """Expected pair counts for ``scenario.N`` rounds."""
    q = click_model.q
    if q <= 0.0:
        return PairCountTable(mode="analytic-expected")
    l = scenario.strategy.l
    n_tot = scenario.N * analytic_pairing_efficiency(q, l)
    scale = n_tot / q**2

    pa, pb, qt, ps = click_model.prob_a, click_model.prob_b, click_model.q_table, click_model.save_table
    w = pa[:, None] * pb[None, :] * qt * ps

    table = {key: scale * class_pair_sum(w, *classes) for key, classes in PLAIN_CLASSES.items()}
    table["n_nu_nu_prime"] = scale * 2.0 * w[NU, NU] * w[O, O]
    table["n_nu_nu_dprime"] = scale * 2.0 * w[NU, O] * w[O, NU]
    table["m_z"] = 2.0 * scale * pa[MU] * pb[MU] * pa[O] * pb[O] * qt[MU, MU] * qt[O, O]

    slice_factor = 2.0 / scenario.M
    x_weight = scale * slice_factor * pa[NU] ** 2 * pb[NU] ** 2 * ps[NU, NU] ** 2
    if scenario.misalignment.enabled:
        theta = misalignment_phase(scenario, q)
        n_int, m_int = x_basis_integrals(click_model, theta, scenario.misalignment.e_hom)
    else:
        n_int, m_int = x_basis_integrals(click_model)
    table["n_2nu_2nu"] = x_weight * n_int
    table["m_x"] = x_weight * m_int
    return PairCountTable(**table, n_tot=n_tot, mode="analytic-expected")
