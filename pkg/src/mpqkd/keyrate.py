"""Secret key rate from decoy bounds and pair counts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import SecurityEpsilons
from .decoy import DecoyBounds
from .pairing import PairCountTable


def binary_entropy(x):
    """H2(x) in bits, with H2(0) = H2(1) = 0."""
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)) or np.any(np.isnan(arr)):
        raise ValueError(f"binary entropy is defined on [0, 1], got {x}")
    inner = (arr > 0.0) & (arr < 1.0)
    safe = np.where(inner, arr, 0.5)
    h = -safe * np.log2(safe) - (1.0 - safe) * np.log2(1.0 - safe)
    out = np.where(inner, h, 0.0)
    return float(out) if out.ndim == 0 else out


def error_correction_leakage(n_mumu: float, m_mumu: float, f: float) -> float:
    if n_mumu <= 0.0:
        if m_mumu > 0.0:
            raise ValueError("Z-basis errors without Z-basis pairs")
        return 0.0
    if m_mumu > n_mumu:
        raise ValueError(f"more Z-basis errors ({m_mumu}) than pairs ({n_mumu})")
    return n_mumu * f * binary_entropy(m_mumu / n_mumu)


def plob_bound(eta: float) -> float:
    """Repeaterless capacity -log2(1 - eta), bits per pulse."""
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"transmittance must lie in [0, 1), got {eta}")
    return -math.log1p(-eta) / math.log(2.0)


@dataclass
class KeyRateResult:
    R: float
    E_z: float
    lambda_EC: float
    n11_z_lower: float
    e11_x_upper: float
    feasible: bool
    mode: str
    breakdown: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def _finish(yield_term: float, leak: float, overheads: dict, bounds: DecoyBounds, E_z: float,
            N: float, mode: str) -> KeyRateResult:
    raw = yield_term - leak - sum(overheads.values())
    breakdown = {"privacy_yield": yield_term, "lambda_EC": leak, **overheads, "total_bits": raw}
    feasible = bool(bounds.feasible and raw > 0.0)
    R = raw / N if feasible else 0.0
    return KeyRateResult(R=R, E_z=E_z, lambda_EC=leak, n11_z_lower=bounds.n11_z_lower,
                         e11_x_upper=bounds.e11_x_upper, feasible=feasible, mode=mode,
                         breakdown=breakdown)


def _z_terms(table: PairCountTable, f: float) -> tuple[float, float]:
    E_z = table.m_z / table.n_mu_mu if table.n_mu_mu > 0 else 0.0
    return min(E_z, 0.5), error_correction_leakage(table.n_mu_mu, table.m_z, f)


def finite_key_rate(bounds: DecoyBounds, table: PairCountTable, eps: SecurityEpsilons,
                    N: float, f: float) -> KeyRateResult:
    E_z, leak = _z_terms(table, f)
    yield_term = bounds.n11_z_lower * (1.0 - binary_entropy(bounds.e11_x_upper))
    overheads = {
        "correctness": math.log2(2.0 / eps.eps_cor),
        "smoothing": 2.0 * math.log2(2.0 / (eps.eps_prime * eps.eps_hat)),
        "privacy_amplification": 2.0 * math.log2(1.0 / (2.0 * eps.eps_PA)),
    }
    return _finish(yield_term, leak, overheads, bounds, E_z, N, "finite")


def asymptotic_key_rate(bounds: DecoyBounds, table: PairCountTable, N: float, f: float) -> KeyRateResult:
    E_z, leak = _z_terms(table, f)
    yield_term = bounds.n11_z_lower * (1.0 - binary_entropy(bounds.e11_x_upper))
    return _finish(yield_term, leak, {}, bounds, E_z, N, "asymptotic")
