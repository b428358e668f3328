"""Decoy-state bounds on single-photon pairs and their phase error rate.

Counts are carried as reals throughout. Clamping (non-negative yield,
error rate at most 1/2) is applied to the final bounds only, so every
intermediate linear combination is reported exactly as combined.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .config import ConfigError
from .pairing import CLASS_MEMBERS, CLASSES, MU, NU, O, PairCountTable, save_probability_table


def poisson_weight(s: int, tau: float) -> float:
    """Probability of ``s`` photons in a coherent pulse of mean ``tau``."""
    if s < 0:
        raise ValueError("photon number must be non-negative")
    if tau == 0.0:
        return 1.0 if s == 0 else 0.0
    return math.exp(-tau + s * math.log(tau) - math.lgamma(s + 1))


# --------------------------------------------------------------------------
# pair-choice probabilities


@dataclass(frozen=True)
class PairChoiceProbs:
    """Normalised probability that a kept pair falls in each intensity class."""

    by_class: dict
    nu_nu_prime: float
    nu_nu_dprime: float
    p_s: float

    def __getitem__(self, key: tuple[str, str]) -> float:
        return self.by_class[key]

    def total(self) -> float:
        return float(sum(self.by_class.values()))


def pair_choice_probs(scenario) -> PairChoiceProbs:
    pa = np.array(scenario.alice.probs)
    pb = np.array(scenario.bob.probs)
    w = pa[:, None] * pb[None, :] * save_probability_table(scenario.strategy)

    raw = {}
    for ca in CLASSES:
        for cb in CLASSES:
            total = 0.0
            for aj, ak in CLASS_MEMBERS[ca]:
                for bj, bk in CLASS_MEMBERS[cb]:
                    total += w[aj, bj] * w[ak, bk]
            raw[(ca, cb)] = total
    p_s = sum(raw.values())
    by_class = {k: v / p_s for k, v in raw.items()}
    prime = 2.0 * w[NU, NU] * w[O, O] / p_s
    dprime = 2.0 * w[NU, O] * w[O, NU] / p_s
    return PairChoiceProbs(by_class=by_class, nu_nu_prime=prime, nu_nu_dprime=dprime, p_s=p_s)


# --------------------------------------------------------------------------
# Chernoff bounds

CHERNOFF_MAX_ITER = 200


class ChernoffError(RuntimeError):
    pass


def _lower_shape(x: float) -> float:
    """x - (1+x) ln(1+x), accurate for small x."""
    if x < 0.05:
        # -sum_{k>=2} (-1)^k x^k / (k (k-1))
        total, term = 0.0, 1.0
        for k in range(2, 40):
            term = x**k / (k * (k - 1))
            total += term if k % 2 else -term
            if term < 1e-18 * abs(total):
                break
        return total
    return x - (1.0 + x) * math.log1p(x)


def _upper_shape(x: float) -> float:
    """-x - (1-x) ln(1-x), accurate for small x."""
    if x < 0.05:
        total = 0.0
        for k in range(2, 40):
            term = x**k / (k * (k - 1))
            total -= term
            if term < 1e-18 * abs(total):
                break
        return total
    return -x - (1.0 - x) * math.log1p(-x)


def chernoff_lower_residual(n: float, chi: float, eps: float) -> float:
    return n / (1.0 + chi) * _lower_shape(chi) - math.log(eps)


def chernoff_upper_residual(n: float, chi: float, eps: float) -> float:
    return n / (1.0 - chi) * _upper_shape(chi) - math.log(eps)


def _bisect(func, lo: float, hi: float) -> float:
    """Root of a function decreasing from positive at ``lo`` to negative at ``hi``."""
    for _ in range(CHERNOFF_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        if func(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    raise ChernoffError(f"bisection did not converge on [{lo}, {hi}]")


@dataclass(frozen=True)
class ChernoffResult:
    n: float
    eps_L: float
    eps_U: float
    chi_L: float
    chi_U: float
    lower: float
    upper: float


def chernoff_bounds(n: float, eps_L: float, eps_U: float | None = None,
                    zero_upper: float | None = None) -> ChernoffResult:
    """Bounds on the expectation of a count from one observation ``n``.

    For ``n == 0`` the lower bound is 0 and the upper bound falls back to
    ``zero_upper`` (default ``-ln eps_U``, the expectation at which seeing
    nothing has probability ``eps_U``).
    """
    if eps_U is None:
        eps_U = eps_L
    for name, e in (("eps_L", eps_L), ("eps_U", eps_U)):
        if not 0.0 < e < 1.0:
            raise ValueError(f"{name} must lie in (0, 1), got {e}")
    if n < 0:
        raise ValueError(f"observed count must be non-negative, got {n}")
    if n == 0:
        upper = -math.log(eps_U) if zero_upper is None else zero_upper
        return ChernoffResult(0.0, eps_L, eps_U, math.inf, 1.0, 0.0, upper)

    f_low = lambda chi: chernoff_lower_residual(n, chi, eps_L)  # noqa: E731
    hi = 1.0
    while f_low(hi) > 0.0 and hi < 1e300:
        hi *= 2.0
    # for n << ln(1/eps) the root lies beyond float range: the lower bound is 0
    chi_l = _bisect(f_low, 0.0, hi) if f_low(hi) <= 0.0 else math.inf

    f_up = lambda chi: chernoff_upper_residual(n, chi, eps_U)  # noqa: E731
    chi_u = _bisect(f_up, 0.0, 1.0)
    if 1.0 - chi_u > 1e-9:
        upper = n / (1.0 - chi_u)
    else:
        # chi_U is too close to 1 to divide by; solve for the bound y = n / (1 - chi) itself
        g = lambda y: (y - n) - n * math.log(y / n) + math.log(eps_U)  # noqa: E731
        upper = _bisect(lambda y: -g(y), n, n - math.log(eps_U) + 1.0)
        chi_u = 1.0 - n / upper
    return ChernoffResult(n, eps_L, eps_U, chi_l, chi_u, n / (1.0 + chi_l), upper)


# --------------------------------------------------------------------------
# estimators


@dataclass
class DecoyBounds:
    n_mu: float
    n_nu: float
    m_2nu: float
    alpha_11: float
    s_a: int
    s_b: int
    n11_z_lower: float
    n11_2nu_lower: float
    m11_2nu_upper: float
    e11_x_upper: float
    feasible: bool
    finite: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def photon_split(nu_a: float, mu_a: float, nu_b: float, mu_b: float) -> tuple[int, int]:
    """Photon numbers (s_a, s_b) used as the reference terms in the bound."""
    return (1, 2) if nu_a * mu_b <= nu_b * mu_a else (2, 1)


def _need(p: float, name: str) -> float:
    if p <= 0.0:
        raise ConfigError(f"pair class {name}", "has zero selection probability; the estimator needs it")
    return p


def _combine(counts: dict, probs: PairChoiceProbs, scenario):
    """Shared tail of the asymptotic and finite estimators.

    ``counts`` holds the (possibly Chernoff-shifted) linear-combination
    inputs keyed like the asymptotic terms.
    """
    a, b = scenario.alice, scenario.bob
    pw = poisson_weight
    p = probs.by_class
    p_mumu = _need(p[("mu", "mu")], "[mu,mu]")
    p_omu = _need(p[("o", "mu")], "[o,mu]")
    p_muo = _need(p[("mu", "o")], "[mu,o]")
    p_oo = _need(p[("o", "o")], "[o,o]")
    p_onu = _need(p[("o", "nu")], "[o,nu]")
    p_nuo = _need(p[("nu", "o")], "[nu,o]")
    p_prime = _need(probs.nu_nu_prime, "[nu,nu]'")
    p_dprime = _need(probs.nu_nu_dprime, "[nu,nu]''")
    p_o2nu = _need(p[("o", "2nu")], "[o,2nu]")
    p_2nuo = _need(p[("2nu", "o")], "[2nu,o]")
    # the X-basis pairs survive phase-slice sifting with probability 2/M
    p_2nu2nu = _need(p[("2nu", "2nu")], "[2nu,2nu]") * 2.0 / scenario.M

    p0mu_a, p0mu_b = pw(0, a.mu), pw(0, b.mu)
    p0nu_a, p0nu_b = pw(0, a.nu), pw(0, b.nu)
    p02nu_a, p02nu_b = pw(0, 2 * a.nu), pw(0, 2 * b.nu)

    n_mu = (counts["mu_mu"] / (p0mu_a * p0mu_b * p_mumu)
            - counts["o_mu"] / (p0mu_b * p_omu)
            - counts["mu_o"] / (p0mu_a * p_muo)
            + counts["o_o_mu"] / p_oo)
    if "nu_nu_combined" in counts:
        first = counts["nu_nu_combined"] / (2.0 * p0nu_a * p0nu_b * p_dprime)
    else:
        first = (counts["nu_nu_prime"] / (2.0 * p0nu_a * p0nu_b * p_prime)
                 + counts["nu_nu_dprime"] / (2.0 * p0nu_a * p0nu_b * p_dprime))
    n_nu = (first
            - counts["o_nu"] / (p0nu_b * p_onu)
            - counts["nu_o"] / (p0nu_a * p_nuo)
            + counts["o_o_nu"] / p_oo)
    m_2nu = (counts["m_x"] / (p02nu_a * p02nu_b * p_2nu2nu)
             - counts["o_2nu"] / (2.0 * p02nu_b * p_o2nu)
             - counts["2nu_o"] / (2.0 * p02nu_a * p_2nuo)
             + counts["o_o_m"] / (2.0 * p_oo))

    s_a, s_b = photon_split(a.nu, a.mu, b.nu, b.mu)
    alpha = (1.0 / p_mumu) * (
        pw(1, a.nu) * pw(1, b.nu) / (pw(s_a, a.nu) * pw(s_b, b.nu) * pw(1, a.mu) * pw(1, b.mu))
        - 1.0 / (pw(s_a, a.mu) * pw(s_b, b.mu)))
    n11 = (1.0 / alpha) * (p0nu_a * p0nu_b / (pw(s_a, a.nu) * pw(s_b, b.nu)) * n_nu
                           - p0mu_a * p0mu_b / (pw(s_a, a.mu) * pw(s_b, b.mu)) * n_mu)

    m11_upper = p02nu_a * p02nu_b * p_2nu2nu * m_2nu
    n11_2nu = (pw(1, 2 * a.nu) * pw(1, 2 * b.nu) * p_2nu2nu
               / (pw(1, a.mu) * pw(1, b.mu) * p_mumu)) * n11

    feasible = n11_2nu > 0.0
    if feasible:
        e11 = min(max(m11_upper / n11_2nu, 0.0), 0.5)
    else:
        e11 = 0.5
    return DecoyBounds(
        n_mu=n_mu, n_nu=n_nu, m_2nu=m_2nu, alpha_11=alpha, s_a=s_a, s_b=s_b,
        n11_z_lower=max(n11, 0.0), n11_2nu_lower=n11_2nu, m11_2nu_upper=m11_upper,
        e11_x_upper=e11, feasible=bool(feasible),
    )


def estimate_asymptotic(table: PairCountTable, probs: PairChoiceProbs, scenario) -> DecoyBounds:
    counts = {
        "mu_mu": table.n_mu_mu, "o_mu": table.n_o_mu, "mu_o": table.n_mu_o,
        "o_o_mu": table.n_o_o, "o_o_nu": table.n_o_o, "o_o_m": table.n_o_o,
        "nu_nu_prime": table.n_nu_nu_prime, "nu_nu_dprime": table.n_nu_nu_dprime,
        "o_nu": table.n_o_nu, "nu_o": table.n_nu_o,
        "m_x": table.m_x, "o_2nu": table.n_o_2nu, "2nu_o": table.n_2nu_o,
    }
    return _combine(counts, probs, scenario)


def estimate_finite(table: PairCountTable, probs: PairChoiceProbs, scenario,
                    eps_pe: float | None = None) -> DecoyBounds:
    """Finite-size bounds with Chernoff-shifted expectation values.

    The subtracted m_2nu input is clamped at zero: a combination of counts
    cannot be negative.
    """
    eps = scenario.eps.eps_pe if eps_pe is None else eps_pe

    def lo(n):
        return chernoff_bounds(n, eps, eps).lower

    def up(n):
        return chernoff_bounds(n, eps, eps).upper

    p_save = 1.0 if scenario.strategy.kind == "original" else scenario.strategy.p_save
    counts = {
        "mu_mu": up(table.n_mu_mu), "o_mu": lo(table.n_o_mu), "mu_o": lo(table.n_mu_o),
        "o_o_mu": lo(table.n_o_o),
        "nu_nu_combined": p_save * lo(table.n_nu_nu_prime) + lo(table.n_nu_nu_dprime),
        "o_nu": up(table.n_o_nu), "nu_o": up(table.n_nu_o), "o_o_nu": lo(table.n_o_o),
        "m_x": table.m_x, "o_2nu": lo(table.n_o_2nu), "2nu_o": lo(table.n_2nu_o),
        "o_o_m": up(table.n_o_o),
    }
    bounds = _combine(counts, probs, scenario)
    if bounds.m_2nu < 0.0:
        bounds.m_2nu = 0.0
        bounds.m11_2nu_upper = 0.0
        if bounds.feasible:
            bounds.e11_x_upper = 0.0
    bounds.finite = True
    return bounds
