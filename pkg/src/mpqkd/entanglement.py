"""Executable checks of the entanglement-scheme algebra.

Conventions. A two-mode ``s``-photon vector is stored by its amplitudes
over ``r`` (photons in the first mode, ``s - r`` in the second). Dense
two-mode arrays have shape ``(cutoff + 1, cutoff + 1)`` indexed
``[n1, n2]``. Composite states are ordered ancilla (x) mode 1 (x) mode 2.
The two-round ancilla space of one party is 3 (x) 3 with basis ``|xy>``,
flattened as ``3 * x + y``; the single-photon ancilla subspace is spanned by
``|01>`` and ``|10>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_CUTOFF = 8


@dataclass(frozen=True)
class FockVector:
    """Two-mode vector with a fixed total photon number ``s``."""

    s: int
    amplitudes: np.ndarray  # indexed by r = photons in mode 1

    def dense(self, cutoff: int | None = None) -> np.ndarray:
        cutoff = self.s if cutoff is None else cutoff
        if cutoff < self.s:
            raise ValueError(f"cutoff {cutoff} below photon number {self.s}")
        out = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
        for r, amp in enumerate(self.amplitudes):
            out[r, self.s - r] = amp
        return out

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def _check_s(s: int) -> None:
    if not 0 <= s <= MAX_CUTOFF:
        raise ValueError(f"photon number must lie in [0, {MAX_CUTOFF}], got {s}")


def omega_state(s: int, delta: float) -> FockVector:
    """2^(-s/2) sum_r sqrt(C(s, r)) e^{i r delta} |r>|s - r>."""
    _check_s(s)
    r = np.arange(s + 1)
    binom = np.array([math.comb(s, k) for k in r], dtype=float)
    amps = np.sqrt(binom / 2.0**s) * np.exp(1j * r * delta)
    return FockVector(s, amps)


def phi_state(s: int, delta: float) -> np.ndarray:
    """(|01>|0,s> + e^{i delta}|10>|s,0>)/sqrt(2), shape (2, s+1, s+1).

    Ancilla index 0 is ``|01>`` and index 1 is ``|10>``.
    """
    _check_s(s)
    out = np.zeros((2, s + 1, s + 1), dtype=complex)
    out[0, 0, s] = 1.0 / math.sqrt(2.0)
    out[1, s, 0] = np.exp(1j * delta) / math.sqrt(2.0)
    return out


def decomposition_deviation(delta: float) -> float:
    """Max deviation of phi_{1,delta} from its omega-state decomposition.

    The first omega factor plays the ancilla: its one-photon basis states
    ``|0,1>`` and ``|1,0>`` are identified with ``|01>`` and ``|10>``.
    """
    def as_ancilla(vec: FockVector) -> np.ndarray:
        d = vec.dense(1)
        return np.array([d[0, 1], d[1, 0]])

    rhs = (np.einsum("a,mn->amn", as_ancilla(omega_state(1, 0.0)), omega_state(1, delta).dense(1))
           + np.einsum("a,mn->amn", as_ancilla(omega_state(1, math.pi)),
                       omega_state(1, delta + math.pi).dense(1))) / math.sqrt(2.0)
    return float(np.max(np.abs(phi_state(1, delta) - rhs)))


def omega_overlap_deviation(s: int, delta: float, delta2: float) -> float:
    """|<w_{s,d}|w_{s,d'}> - cos^s((d - d')/2) e^{i s (d' - d)/2}|."""
    got = np.vdot(omega_state(s, delta).amplitudes, omega_state(s, delta2).amplitudes)
    want = math.cos((delta - delta2) / 2.0) ** s * np.exp(0.5j * s * (delta2 - delta))
    return float(abs(got - want))


# --------------------------------------------------------------------------
# measurement operators


def _ket(x: int, y: int) -> np.ndarray:
    v = np.zeros(9)
    v[3 * x + y] = 1.0
    return v


def _proj(*pairs) -> np.ndarray:
    return sum(np.outer(_ket(*p), _ket(*p)) for p in pairs)


def mode_pairing_operators() -> list[np.ndarray]:
    """Label measurement on the joint ancilla of one round (Alice (x) Bob)."""
    low = np.diag([1.0, 1.0, 0.0])
    return [
        np.kron(low, low),
        _proj((2, 0), (0, 2)),
        _proj((2, 1), (1, 2)),
        _proj((2, 2)),
    ]


def basis_sifting_operators() -> list[np.ndarray]:
    """Basis measurement on one party's two-round ancilla.

    The last operator is the complement of the three primed projectors.
    """
    m0 = _proj((0, 0))
    m1 = _proj((0, 1), (1, 0))
    m2 = _proj((2, 2))
    return [m0, m1, m2, np.eye(9) - m0 - m1 - m2]


OPERATOR_SETS = {
    "mode_pairing_M": mode_pairing_operators,
    "basis_sifting_Mprime": basis_sifting_operators,
}


def verify_povm_completeness(name: str) -> float:
    ops = OPERATOR_SETS[name]()
    total = sum(m.conj().T @ m for m in ops)
    return float(np.max(np.abs(total - np.eye(total.shape[0]))))


def orthogonality_deviation(name: str) -> float:
    ops = OPERATOR_SETS[name]()
    worst = 0.0
    for i, a in enumerate(ops):
        for j, b in enumerate(ops):
            if i != j:
                worst = max(worst, float(np.max(np.abs(a @ b))))
    return worst


def min_eigenvalue(name: str) -> float:
    return min(float(np.min(np.linalg.eigvalsh(m))) for m in OPERATOR_SETS[name]())


# --------------------------------------------------------------------------
# phase gate


def phase_gate(delta: float) -> np.ndarray:
    """U_delta = |01><01| + e^{i delta}|10><10| on the two-round ancilla."""
    return (np.outer(_ket(0, 1), _ket(0, 1))
            + np.exp(1j * delta) * np.outer(_ket(1, 0), _ket(1, 0)))


def _embed_ancilla(state: np.ndarray) -> np.ndarray:
    """Lift a (2, ...) single-photon ancilla state into the 9-dim ancilla."""
    out = np.zeros((9,) + state.shape[1:], dtype=complex)
    out[3 * 0 + 1] = state[0]
    out[3 * 1 + 0] = state[1]
    return out


def verify_phase_gate(delta: float, delta_state: float = 0.3) -> float:
    """Largest deviation among the phase-gate identities at ``delta``.

    Checks U^dag U = P, U_delta U_-delta = P (P projects onto span{|01>, |10>})
    and U_delta phi_{1,d} = phi_{1,d+delta} acting on the ancilla.
    """
    u = phase_gate(delta)
    proj = _proj((0, 1), (1, 0))
    dev = float(np.max(np.abs(u.conj().T @ u - proj)))
    dev = max(dev, float(np.max(np.abs(u @ phase_gate(-delta) - proj))))
    before = _embed_ancilla(phi_state(1, delta_state))
    after = np.einsum("ab,bmn->amn", u, before)
    want = _embed_ancilla(phi_state(1, delta_state + delta))
    return max(dev, float(np.max(np.abs(after - want))))


def run_all(seed: int = 0, n_random: int = 100) -> dict[str, float]:
    """Every check with its max deviation; used by the ``verify`` command."""
    rng = np.random.default_rng(seed)
    deltas = rng.uniform(0.0, 2.0 * np.pi, n_random)
    results = {
        "povm_completeness[mode_pairing_M]": verify_povm_completeness("mode_pairing_M"),
        "povm_completeness[basis_sifting_Mprime]": verify_povm_completeness("basis_sifting_Mprime"),
        "orthogonality[mode_pairing_M]": orthogonality_deviation("mode_pairing_M"),
        "orthogonality[basis_sifting_Mprime]": orthogonality_deviation("basis_sifting_Mprime"),
        "psd[mode_pairing_M]": max(0.0, -min_eigenvalue("mode_pairing_M")),
        "psd[basis_sifting_Mprime]": max(0.0, -min_eigenvalue("basis_sifting_Mprime")),
        "single_photon_decomposition": max(decomposition_deviation(d) for d in deltas),
        "phase_gate": max(verify_phase_gate(d) for d in np.concatenate([[0.0, np.pi], deltas])),
        "omega_norm": max(abs(omega_state(s, d).norm() - 1.0) for s in range(MAX_CUTOFF + 1)
                          for d in deltas[:10]),
        "phi_norm": max(abs(float(np.linalg.norm(phi_state(s, d))) - 1.0)
                        for s in range(MAX_CUTOFF + 1) for d in deltas[:10]),
        "omega_overlap": max(omega_overlap_deviation(s, d, d2) for s in range(6)
                             for d, d2 in zip(deltas[:20], deltas[20:40])),
    }
    return results
