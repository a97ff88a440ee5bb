"""Exact Fock-space evaluation of static multi-photon scattering.

Works in a finite orthonormal mode dictionary: each mode is a (channel,
label) pair, occupation vectors are sparse maps, and smeared creation
operators act with exact bosonic ladder factors sqrt(n+1).  This module never
touches permanents or the sampled-kernel pipeline, so it provides an
independent ground truth for interference amplitudes and core tensors.

Amplitudes are reported against unit-normalized occupation states, so squared
amplitudes of a normalized vector sum to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from ._numerics import trapz_weights
from .config import DEFAULT_CAPS, DEFAULT_TOLERANCES, Caps, Tolerances
from .errors import CapExceededError, ConfigError
from .tensor_alg import CoreTensor, RaggedPulseMatrix

__all__ = [
    "ModeSymbol",
    "FockVector",
    "vacuum",
    "apply_creation_combo",
    "apply_creation_polynomial",
    "example1",
    "example2",
    "example2_closed_form",
    "example3",
    "example3_closed_form",
    "oracle_core_tensor",
    "photon_numbers",
    "one_particle_rdm",
]

Mode = Tuple[int, int]                     # (channel, dictionary label)
Occupation = Tuple[Tuple[Mode, int], ...]  # sorted, zero counts dropped


@dataclass(frozen=True)
class ModeSymbol:
    """A (channel, label) reference into an orthonormal pulse dictionary."""

    channel: int
    label: int


def _canonical(items: Iterable[Tuple[Mode, int]]) -> Occupation:
    return tuple(sorted((mode, cnt) for mode, cnt in items if cnt))


@dataclass
class FockVector:
    """Sparse occupation-to-amplitude map."""

    amplitudes: Dict[Occupation, complex] = field(default_factory=dict)

    def copy(self) -> "FockVector":
        return FockVector(dict(self.amplitudes))

    def add(self, occ: Occupation, amp: complex) -> None:
        new = self.amplitudes.get(occ, 0.0) + amp
        if new == 0.0:
            self.amplitudes.pop(occ, None)
        else:
            self.amplitudes[occ] = new

    def scaled(self, factor: complex) -> "FockVector":
        return FockVector({occ: amp * factor for occ, amp in self.amplitudes.items()})

    def __iadd__(self, other: "FockVector") -> "FockVector":
        for occ, amp in other.amplitudes.items():
            self.add(occ, amp)
        return self

    def inner(self, other: "FockVector") -> complex:
        if len(other.amplitudes) < len(self.amplitudes):
            return np.conj(other.inner(self))
        return complex(sum(np.conj(amp) * other.amplitudes.get(occ, 0.0)
                           for occ, amp in self.amplitudes.items()))

    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def amplitude(self, occ_items: Iterable[Tuple[Mode, int]]) -> complex:
        return complex(self.amplitudes.get(_canonical(occ_items), 0.0))

    def total_photons(self) -> int:
        return max((sum(c for _, c in occ) for occ in self.amplitudes), default=0)

    def to_json(self) -> list:
        out = []
        for occ in sorted(self.amplitudes):
            amp = self.amplitudes[occ]
            out.append({
                "modes": [[mode[0], mode[1], cnt] for mode, cnt in occ],
                "re": amp.real,
                "im": amp.imag,
            })
        return out


def vacuum() -> FockVector:
    return FockVector({(): 1.0 + 0.0j})


def apply_creation_combo(combo: Dict[Mode, complex], state: FockVector,
                         caps: Caps = DEFAULT_CAPS) -> FockVector:
    """Apply sum_s combo[s] b*_s with exact sqrt(n+1) ladder factors."""
    out = FockVector()
    for occ, amp in state.amplitudes.items():
        occ_dict = dict(occ)
        if sum(occ_dict.values()) + 1 > caps.fock_total:
            raise CapExceededError(
                f"total photon number would exceed cap {caps.fock_total}")
        for mode, coeff in combo.items():
            if coeff == 0.0:
                continue
            n = occ_dict.get(mode, 0)
            new = dict(occ_dict)
            new[mode] = n + 1
            out.add(_canonical(new.items()), amp * coeff * math.sqrt(n + 1))
    return out


def _annihilate(state: FockVector, mode: Mode) -> FockVector:
    out = FockVector()
    for occ, amp in state.amplitudes.items():
        occ_dict = dict(occ)
        n = occ_dict.get(mode, 0)
        if n == 0:
            continue
        occ_dict[mode] = n - 1
        out.add(_canonical(occ_dict.items()), amp * math.sqrt(n))
    return out


def apply_creation_polynomial(factors: Sequence[Tuple[Sequence[complex], int]],
                              start: FockVector,
                              caps: Caps = DEFAULT_CAPS) -> FockVector:
    """Apply a product of channel-combined creation operators.

    Each factor is (channel coefficient vector, dictionary label): the
    operator sum_i c_i b*_(i, label).
    """
    state = start
    for coeffs, label in factors:
        combo = {(i, label): complex(c) for i, c in enumerate(coeffs)}
        state = apply_creation_combo(combo, state, caps)
    return state


def photon_numbers(state: FockVector, m: int) -> np.ndarray:
    """Expected photon number per channel."""
    out = np.zeros(m)
    for occ, amp in state.amplitudes.items():
        p = abs(amp) ** 2
        for (ch, _), cnt in occ:
            out[ch] += p * cnt
    return out


def one_particle_rdm(state: FockVector, modes: Sequence[Mode]) -> np.ndarray:
    """Matrix of <b*_s b_s'> expectations over the given mode list."""
    lowered = [_annihilate(state, mode) for mode in modes]
    k = len(modes)
    out = np.empty((k, k), dtype=complex)
    for a in range(k):
        for b in range(k):
            out[a, b] = lowered[a].inner(lowered[b])
    return out


# ---------------------------------------------------------------------------
# worked interference configurations


def _beamsplitter_eta(eta: float) -> np.ndarray:
    r = math.sqrt(eta)
    t = math.sqrt(1.0 - eta)
    return np.array([[r, t], [-t, r]])


def example1(eta_bs: float, pulse_config: str = "identical",
             caps: Caps = DEFAULT_CAPS) -> FockVector:
    """Two photons per channel through a two-port splitter.

    ``pulse_config`` selects the pulse family: "identical" (all four pulses
    equal, one dictionary mode) or "orthogonal" (two orthonormal modes shared
    by the channels).
    """
    if not 0.0 < eta_bs < 1.0:
        raise ConfigError("eta: transmissivity must lie in (0, 1)")
    s = _beamsplitter_eta(eta_bs)
    if pulse_config == "identical":
        labels = {(0, 0): 0, (0, 1): 0, (1, 0): 0, (1, 1): 0}
        norm = 2.0 * 2.0  # two indistinguishable photons per channel
    elif pulse_config == "orthogonal":
        labels = {(0, 0): 0, (0, 1): 1, (1, 0): 0, (1, 1): 1}
        norm = 1.0
    else:
        raise ConfigError(f"pulse_config: unknown value {pulse_config!r}")
    factors = [(s[:, j], labels[(j, k)]) for j in range(2) for k in range(2)]
    state = apply_creation_polynomial(factors, vacuum(), caps)
    return state.scaled(1.0 / math.sqrt(norm))


def example2(reflectivity: float, ell: int, caps: Caps = DEFAULT_CAPS) -> complex:
    """Amplitude for one photon against an ell-photon packet to exit (ell, 1).

    Evaluated by full ladder expansion and checked against the closed form
    sqrt(R^(ell-1)) (R - ell(1-R)) before returning.
    """
    if not 0.0 < reflectivity < 1.0:
        raise ConfigError("R: reflectivity must lie in (0, 1)")
    if ell < 1 or ell > 10:
        raise ConfigError("ell: photon count must lie in 1..10")
    r = reflectivity
    s = np.array([[math.sqrt(1 - r), math.sqrt(r)],
                  [math.sqrt(r), -math.sqrt(1 - r)]])
    factors = [(s[:, 0], 0)] + [(s[:, 1], 0)] * ell
    state = apply_creation_polynomial(factors, vacuum(), caps)
    state = state.scaled(1.0 / math.sqrt(math.factorial(ell)))
    amp = state.amplitude([((0, 0), ell), ((1, 0), 1)])
    closed = example2_closed_form(r, ell)
    if abs(amp - closed) > 1e-12 * max(1.0, abs(closed)):
        raise RuntimeError(
            f"oracle expansion disagrees with closed form: {amp} vs {closed}")
    return amp


def example2_closed_form(reflectivity: float, ell: int) -> float:
    r = reflectivity
    return math.sqrt(r ** (ell - 1)) * (r - ell * (1.0 - r))


def example3_closed_form(reflectivity: float, transmissivity: float, ell: int,
                         alpha: complex, n: int) -> complex:
    r, t = reflectivity, transmissivity
    total = 0.0
    for j in range(min(ell, n) + 1):
        total += (math.comb(n, n - j) * math.comb(ell, j) * (-1.0) ** j
                  * t ** (n + ell - 2 * j) * r ** (2 * j))
    return (np.exp(-abs(alpha) ** 2 / 2.0) * alpha ** n
            / math.sqrt(math.factorial(n)) * total)


def example3(reflectivity: float, transmissivity: float, ell: int,
             alpha: complex, n_max: int,
             caps: Caps = DEFAULT_CAPS) -> List[complex]:
    """Conditioned coefficients of photon catalysis with a coherent input.

    The first channel carries ell photons, the second a coherent state of
    amplitude alpha truncated at n_max; conditioning the first output on ell
    photons leaves the listed coefficients on the second channel.  The ladder
    expansion is checked against the closed-form sum before returning.
    """
    r, t = reflectivity, transmissivity
    if abs(r * r + t * t - 1.0) > 1e-12:
        raise ConfigError("R, T: need R^2 + T^2 = 1")
    tail = math.exp(-abs(alpha) ** 2) * sum(
        abs(alpha) ** (2 * n) / math.factorial(n)
        for n in range(n_max + 1, n_max + 60))
    if tail > 1e-12:
        raise ConfigError(
            f"n_max: coherent truncation tail {tail:.3e} exceeds 1e-12")
    s = np.array([[t, -r], [r, t]])
    prefactor = np.exp(-abs(alpha) ** 2 / 2.0)
    coeffs: List[complex] = []
    for n in range(n_max + 1):
        factors = [(s[:, 0], 0)] * ell + [(s[:, 1], 0)] * n
        state = apply_creation_polynomial(factors, vacuum(), caps)
        weight = (prefactor * alpha ** n / math.sqrt(math.factorial(n))
                  / math.sqrt(math.factorial(ell) * math.factorial(n)))
        amp = weight * state.amplitude([((0, 0), ell), ((1, 0), n)])
        closed = example3_closed_form(r, t, ell, alpha, n)
        if abs(amp - closed) > 1e-12 * max(1.0, abs(closed)):
            raise RuntimeError(
                f"oracle expansion disagrees with closed form at n={n}: {amp} vs {closed}")
        coeffs.append(complex(amp))
    return coeffs


# ---------------------------------------------------------------------------
# core tensors by ladder combinatorics


def oracle_core_tensor(pulses: RaggedPulseMatrix, dictionary: RaggedPulseMatrix,
                       tol: Tolerances = DEFAULT_TOLERANCES,
                       caps: Caps = DEFAULT_CAPS) -> CoreTensor:
    """Core tensor via explicit vacuum expectations of operator strings.

    ``dictionary`` provides per-channel orthonormal mode functions; each pulse
    must be expressible in its channel's dictionary.  Entry (j, i, k) is the
    overlap of the two (ell_j - 1)-photon states obtained by dropping pulse i
    or pulse k, computed purely with ladder algebra.
    """
    if pulses.grid != dictionary.grid:
        raise ConfigError("dictionary must share the pulse grid")
    dt = pulses.grid.dt
    w = trapz_weights(pulses.grid.n_points, dt)
    slices = []
    for j in range(pulses.m):
        basis = dictionary.slabs[j]
        gram = np.einsum("an,n,bn->ab", basis.conj(), w, basis)
        if gram.size and np.abs(gram - np.eye(len(basis))).max() > 1e-10:
            raise ConfigError(f"dictionary channel {j}: modes are not orthonormal")
        slab = pulses.slabs[j]
        ell = pulses.ells[j]
        coeffs = np.einsum("dn,n,kn->kd", basis.conj(), w, slab)
        resid = slab - coeffs @ basis
        scale = max(1.0, float(np.abs(slab).max()) if slab.size else 1.0)
        if resid.size and np.abs(resid).max() > tol.expand * scale:
            raise ConfigError(
                f"channel {j}: pulses are not expressible in the dictionary")
        if ell == 0:
            slices.append(np.zeros((0, 0), dtype=complex))
            continue
        states = []
        for drop in range(ell):
            state = vacuum()
            for beta in range(ell):
                if beta == drop:
                    continue
                combo = {(j, d): coeffs[beta, d] for d in range(len(basis))}
                state = apply_creation_combo(combo, state, caps)
            states.append(state)
        sl = np.empty((ell, ell), dtype=complex)
        for i in range(ell):
            for k in range(ell):
                sl[i, k] = states[i].inner(states[k])
        slices.append(sl)
    return CoreTensor(m=pulses.m, ells=pulses.ells, slices=slices)
