"""Event-level Monte Carlo of the full round -> pair -> table pipeline.

Every chunk of rounds draws from its own PCG64 substream, obtained by
jumping the seeded generator ``chunk_index`` times, so a run is fully
determined by ``(scenario, seed, rounds, chunk_size)``. Only the open
pairing front is carried between chunks; memory does not grow with the
number of rounds.

Click outcomes are sampled from the exact per-phase probabilities, not
from the phase-averaged table, so agreement with the analytic counts also
checks the phase averaging.

The tagged variant samples photon numbers first and resolves detection
photon by photon, which exposes the true single-photon pair count.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .channel import build_click_model, click_probs
from .pairing import MU, NU, O, PairCountTable, pair_positions

DEFAULT_CHUNK = 1 << 18
PHOTON_CUTOFF = 24

# class id of a party's (first, second) choices within a pair
_CLS = np.array([
    # second:  o   nu  mu
    [0, 1, 2],   # first o   -> o, nu, mu
    [1, 3, 5],   # first nu  -> nu, 2nu, mu+nu
    [2, 5, 4],   # first mu  -> mu, mu+nu, 2mu
])
C_O, C_NU, C_MU, C_2NU = 0, 1, 2, 3


@dataclass
class MonteCarloRun:
    seed: int
    rounds: int
    table: PairCountTable
    kept_rounds: int
    gap_sum: float
    gap_sq_sum: float
    true_n11_z: int | None = None
    extras: dict = field(default_factory=dict)

    @property
    def pairs(self) -> int:
        return int(self.table.n_tot)

    @property
    def mean_gap_rounds(self) -> float:
        return self.gap_sum / self.pairs if self.pairs else math.nan

    @property
    def mean_gap_stderr(self) -> float:
        n = self.pairs
        if n < 2:
            return math.nan
        var = (self.gap_sq_sum - self.gap_sum**2 / n) / (n - 1)
        return math.sqrt(max(var, 0.0) / n)

    def t_mean(self, clock_f: float) -> float:
        return self.mean_gap_rounds / clock_f


def chunk_generator(seed: int, chunk_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed).jumped(chunk_index))


def _choose(rng: np.random.Generator, probs, n: int) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(n), side="right").astype(np.int8)


@lru_cache(maxsize=None)
def beam_splitter_table(cutoff: int = PHOTON_CUTOFF) -> np.ndarray:
    """P[m_a, m_b, k]: probability that k of m_a + m_b photons leave the left port.

    Photon-number states entering a balanced beam splitter; the amplitudes
    are summed with exact integers before squaring.
    """
    table = np.zeros((cutoff + 1, cutoff + 1, 2 * cutoff + 1))
    for ma in range(cutoff + 1):
        for mb in range(cutoff + 1):
            n = ma + mb
            norm = math.factorial(ma) * math.factorial(mb) * 2**n
            for k in range(n + 1):
                amp = 0
                for i in range(max(0, k - mb), min(ma, k) + 1):
                    j = k - i
                    amp += math.comb(ma, i) * math.comb(mb, j) * (-1) ** (mb - j)
                table[ma, mb, k] = amp * amp * math.factorial(k) * math.factorial(n - k) / norm
    return table


def _sample_coherent(rng, scenario, n):
    """One chunk of rounds with coherent-state click sampling."""
    a, b = scenario.alice, scenario.bob
    ia = _choose(rng, a.probs, n)
    ib = _choose(rng, b.probs, n)
    theta_a = 2.0 * np.pi * rng.random(n)
    theta_b = 2.0 * np.pi * rng.random(n)
    u = rng.random(n)
    coins = rng.random(n)
    tau_a = np.array(a.intensities)[ia]
    tau_b = np.array(b.intensities)[ib]
    ql, qr = click_probs(tau_a, tau_b, theta_a - theta_b, scenario.link, scenario.detector)
    effective = u < ql + qr
    left = u < ql
    return dict(ia=ia, ib=ib, theta_a=theta_a, theta_b=theta_b, left=left), effective, coins


def _sample_tagged(rng, scenario, n):
    """One chunk of rounds with photon-number-resolved click sampling."""
    a, b, det, link = scenario.alice, scenario.bob, scenario.detector, scenario.link
    ia = _choose(rng, a.probs, n)
    ib = _choose(rng, b.probs, n)
    theta_a = 2.0 * np.pi * rng.random(n)
    theta_b = 2.0 * np.pi * rng.random(n)
    coins = rng.random(n)
    na = rng.poisson(np.array(a.intensities)[ia])
    nb = rng.poisson(np.array(b.intensities)[ib])
    if max(na.max(initial=0), nb.max(initial=0)) > PHOTON_CUTOFF:
        raise OverflowError("photon number beyond the beam-splitter table cutoff")
    ma = rng.binomial(na, link.eta_a)
    mb = rng.binomial(nb, link.eta_b)

    bs = beam_splitter_table()
    k_left = np.zeros(n, dtype=np.int64)
    u = rng.random(n)
    total = ma + mb
    lit = np.flatnonzero(total > 0)
    if lit.size:
        key = ma[lit] * (PHOTON_CUTOFF + 1) + mb[lit]
        for code in np.unique(key):
            sel = lit[key == code]
            pa, pb = divmod(int(code), PHOTON_CUTOFF + 1)
            cdf = np.cumsum(bs[pa, pb, : pa + pb + 1])
            cdf[-1] = 1.0
            k_left[sel] = np.searchsorted(cdf, u[sel], side="right")
    k_right = total - k_left
    no_left = (1.0 - det.pd0) * (1.0 - det.eta_d0) ** k_left
    no_right = (1.0 - det.pd1) * (1.0 - det.eta_d1) ** k_right
    click_l = rng.random(n) >= no_left
    click_r = rng.random(n) >= no_right
    effective = click_l ^ click_r

    # photon counting forgets the interference phase; redraw it from its
    # posterior given the outcome so X-basis statistics stay exact
    eff = np.flatnonzero(effective)
    delta = _posterior_phase(rng, scenario, np.array(a.intensities)[ia[eff]],
                             np.array(b.intensities)[ib[eff]], click_l[eff])
    theta_a[eff] = np.mod(theta_b[eff] + delta, 2.0 * np.pi)
    fields_ = dict(ia=ia, ib=ib, theta_a=theta_a, theta_b=theta_b, left=click_l, na=na, nb=nb)
    return fields_, effective, coins


def _posterior_phase(rng, scenario, tau_a, tau_b, left):
    """Rejection-sample delta with density proportional to qL(delta) or qR(delta)."""
    link, det = scenario.link, scenario.detector
    xa, xb = link.eta_a * tau_a, link.eta_b * tau_b
    peak = (np.sqrt(xa) + np.sqrt(xb)) ** 2
    bound = np.where(left,
                     (1.0 - (1.0 - det.pd0) * np.exp(-0.5 * det.eta_d0 * peak)) * (1.0 - det.pd1),
                     (1.0 - (1.0 - det.pd1) * np.exp(-0.5 * det.eta_d1 * peak)) * (1.0 - det.pd0))
    out = np.empty(tau_a.size)
    todo = np.arange(tau_a.size)
    while todo.size:
        prop = 2.0 * np.pi * rng.random(todo.size)
        ql, qr = click_probs(tau_a[todo], tau_b[todo], prop, link, det)
        dens = np.where(left[todo], ql, qr)
        ok = rng.random(todo.size) * bound[todo] <= dens
        out[todo[ok]] = prop[ok]
        todo = todo[~ok]
    return out


def _kept_mask(scenario, ia, ib, effective, coins):
    if scenario.strategy.kind == "original":
        return effective
    nu_a, nu_b = ia == NU, ib == NU
    label0 = ~nu_a & ~nu_b
    label2 = (nu_a & (ib == MU)) | (nu_b & (ia == MU))
    label13 = ~label0 & ~label2
    return effective & (label0 | (label13 & (coins < scenario.strategy.p_save)))


class _Tally:
    def __init__(self, M: int, tagged: bool):
        self.counts = {k: 0 for k in PairCountTable().counts()}
        self.pairs = 0
        self.gap_sum = 0.0
        self.gap_sq_sum = 0.0
        self.half_window = math.pi / M
        self.tagged = tagged
        self.true_n11 = 0

    def add(self, data, fi, ri):
        if fi.size == 0:
            return
        aj, ak = data["ia"][fi], data["ia"][ri]
        bj, bk = data["ib"][fi], data["ib"][ri]
        ca = _CLS[aj, ak]
        cb = _CLS[bj, bk]
        c = self.counts

        def tally(key, mask):
            c[key] += int(np.count_nonzero(mask))

        z = (ca == C_MU) & (cb == C_MU)
        tally("n_mu_mu", z)
        tally("n_o_mu", (ca == C_O) & (cb == C_MU))
        tally("n_mu_o", (ca == C_MU) & (cb == C_O))
        tally("n_o_o", (ca == C_O) & (cb == C_O))
        nunu = (ca == C_NU) & (cb == C_NU)
        same_vac_round = (aj == O) == (bj == O)
        tally("n_nu_nu_prime", nunu & same_vac_round)
        tally("n_nu_nu_dprime", nunu & ~same_vac_round)
        tally("n_o_nu", (ca == C_O) & (cb == C_NU))
        tally("n_nu_o", (ca == C_NU) & (cb == C_O))
        tally("n_o_2nu", (ca == C_O) & (cb == C_2NU))
        tally("n_2nu_o", (ca == C_2NU) & (cb == C_O))
        # Z key bits: Alice's bit from her first round, Bob's from his second
        tally("m_z", z & ((aj == MU) != (bk == MU)))

        x = (ca == C_2NU) & (cb == C_2NU)
        if np.any(x):
            xf, xr = fi[x], ri[x]
            delta_a = data["theta_a"][xf] - data["theta_a"][xr]
            delta_b = data["theta_b"][xf] - data["theta_b"][xr]
            d = np.mod(delta_a - delta_b, 2.0 * np.pi)
            near_zero = np.minimum(d, 2.0 * np.pi - d) < self.half_window
            near_pi = np.abs(d - np.pi) < self.half_window
            same = data["left"][xf] == data["left"][xr]
            tally("n_2nu_2nu", near_zero | near_pi)
            tally("m_x", (near_zero & ~same) | (near_pi & same))

        if self.tagged:
            ones_a = data["na"][fi] + data["na"][ri] == 1
            ones_b = data["nb"][fi] + data["nb"][ri] == 1
            self.true_n11 += int(np.count_nonzero(z & ones_a & ones_b))

        gaps = (data["pos"][ri] - data["pos"][fi]).astype(float)
        self.pairs += fi.size
        self.gap_sum += float(gaps.sum())
        self.gap_sq_sum += float(np.dot(gaps, gaps))


def run_monte_carlo(scenario, seed: int, rounds: int, *, chunk_size: int = DEFAULT_CHUNK,
                    tagged: bool = False, check_rate: bool = True) -> MonteCarloRun:
    """Simulate ``rounds`` rounds and tally the observed pair table."""
    rounds = int(rounds)
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if scenario.misalignment.enabled:
        raise ValueError("the Monte Carlo does not model misalignment; disable it for MC runs")
    if check_rate:
        expected = rounds * build_click_model(scenario).q
        if expected < 10:
            raise ValueError(
                f"expected number of kept effective rounds is {expected:.3g} (< 10); "
                "increase rounds or shorten the link for meaningful statistics")

    sampler = _sample_tagged if tagged else _sample_coherent
    tally = _Tally(scenario.M, tagged)
    l = scenario.strategy.l
    carry = None
    kept_total = 0
    n_chunks = -(-rounds // chunk_size)
    for c in range(n_chunks):
        start = c * chunk_size
        n = min(chunk_size, rounds - start)
        rng = chunk_generator(seed, c)
        data, effective, coins = sampler(rng, scenario, n)
        kept = np.flatnonzero(_kept_mask(scenario, data["ia"], data["ib"], effective, coins))
        kept_total += kept.size
        data = {k: v[kept] for k, v in data.items()}
        data["pos"] = kept.astype(np.int64) + start
        if carry is not None:
            data = {k: np.concatenate([carry[k], v]) for k, v in data.items()}
        fi, ri, open_idx = pair_positions(data["pos"].tolist(), l)
        tally.add(data, fi, ri)
        carry = None if open_idx < 0 else {k: v[open_idx:open_idx + 1] for k, v in data.items()}

    table = PairCountTable(**{k: float(v) for k, v in tally.counts.items()},
                           n_tot=float(tally.pairs), mode="mc-observed")
    return MonteCarloRun(seed=seed, rounds=rounds, table=table, kept_rounds=kept_total,
                         gap_sum=tally.gap_sum, gap_sq_sum=tally.gap_sq_sum,
                         true_n11_z=tally.true_n11 if tagged else None)


def ideal_single_photon_phase_error(M: int) -> float:
    """Single-photon phase error rate on a lossless, dark-count-free channel.

    With one photon from each party spread over the two rounds, the
    detectors disagree (zero window) with probability (1 - cos d)/2 at phase
    mismatch d. Averaging over a window of half-width pi/M gives the value
    below; the pi window is symmetric.
    """
    x = math.pi / M
    return 0.5 * (1.0 - math.sin(x) / x)


def _single_photon_outputs(scenario):
    """Output amplitudes of the four input modes (Aj, Ak, Bj, Bk).

    Columns: detected Lj, Rj, Lk, Rk, then detector-loss and channel-loss
    modes. The round-k phase factors are applied by the caller.
    """
    link, det = scenario.link, scenario.detector
    ta, tb = math.sqrt(link.eta_a), math.sqrt(link.eta_b)
    la, lb = math.sqrt(1.0 - link.eta_a), math.sqrt(1.0 - link.eta_b)
    gl, gr = math.sqrt(det.eta_d0), math.sqrt(det.eta_d1)
    hl, hr = math.sqrt(1.0 - det.eta_d0), math.sqrt(1.0 - det.eta_d1)
    s = 1.0 / math.sqrt(2.0)
    u = np.zeros((4, 12))
    for rnd in (0, 1):
        for party, (t, loss, sign) in enumerate(((ta, la, 1.0), (tb, lb, -1.0))):
            row = 2 * party + rnd
            left, right = s * t, sign * s * t
            u[row, 2 * rnd] = gl * left
            u[row, 2 * rnd + 1] = gr * right
            u[row, 4 + 2 * rnd] = hl * left
            u[row, 4 + 2 * rnd + 1] = hr * right
            u[row, 8 + row] = loss
    return u


def single_photon_phase_error(scenario, n_points: int = 256) -> float:
    """Exact X-basis error rate of pairs carrying one photon per party.

    Each party's photon is split evenly over the two rounds with relative
    phase phi_A or phi_B; sifting keeps |phi_A - phi_B| within pi/M of 0 or
    pi. Two-photon output statistics follow from the bosonic amplitudes,
    then threshold detectors with dark counts decide the click pattern.
    """
    pd = (scenario.detector.pd0, scenario.detector.pd1)
    u = _single_photon_outputs(scenario)
    half = math.pi / scenario.M
    # midpoint rule over each window
    offsets = (np.arange(n_points) + 0.5) / n_points * 2.0 * half - half
    n_out = u.shape[1]
    i1, i2 = np.triu_indices(n_out)
    occupancy = np.zeros((i1.size, 4))
    for col in range(4):
        occupancy[:, col] = (i1 == col).astype(float) + (i2 == col)
    # click probability of each detector given its photon number
    click = np.where(occupancy > 0, 1.0, np.array([pd[0], pd[1], pd[0], pd[1]]))
    lj, rj, lk, rk = click.T
    only = lambda a, b: a * (1.0 - b)
    same = only(lj, rj) * only(lk, rk) + only(rj, lj) * only(rk, lk)
    diff = only(lj, rj) * only(rk, lk) + only(rj, lj) * only(lk, rk)

    good = bad = 0.0
    for centre in (0.0, math.pi):
        for d in centre + offsets:
            ua = (u[0] + np.exp(1j * d) * u[1]) / math.sqrt(2.0)
            ub = (u[2] + u[3]) / math.sqrt(2.0)
            amp = ua[i1] * ub[i2] + ua[i2] * ub[i1]
            prob = np.where(i1 == i2, 0.5, 1.0) * np.abs(amp) ** 2
            p_same, p_diff = float(prob @ same), float(prob @ diff)
            if centre == 0.0:
                good, bad = good + p_same, bad + p_diff
            else:
                good, bad = good + p_diff, bad + p_same
    return bad / (good + bad)


@dataclass
class ComparisonRow:
    name: str
    expected: float
    observed: float
    sigma: float

    @property
    def z(self) -> float:
        return (self.observed - self.expected) / self.sigma if self.sigma > 0 else math.nan


def compare_with_analytic(run: MonteCarloRun, scenario) -> list[ComparisonRow]:
    """Observed counts against expectations for ``run.rounds`` rounds.

    Counts use Poisson errors. The pairing efficiency r uses the binomial
    error of the pair count; the mean pairing gap uses its sample standard
    error.
    """
    from .pairing import analytic_pair_counts, mean_pairing_interval

    scen = dataclasses.replace(scenario, N=float(run.rounds))
    click_model = build_click_model(scen)
    expected = analytic_pair_counts(scen, click_model)
    rows = [ComparisonRow(k, v, getattr(run.table, k), math.sqrt(v))
            for k, v in expected.counts().items() if v > 0.0]
    r_exp = expected.n_tot / run.rounds
    rows.append(ComparisonRow("r", r_exp, run.pairs / run.rounds,
                              math.sqrt(r_exp * (1.0 - r_exp) / run.rounds)))
    gap = mean_pairing_interval(click_model.q, scen.strategy.l, 1.0)
    rows.append(ComparisonRow("T_mean_rounds", gap, run.mean_gap_rounds, run.mean_gap_stderr))
    return rows
