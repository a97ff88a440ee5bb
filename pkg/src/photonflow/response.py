"""Steady-state output quantities of driven quantum linear systems.

Covers covariance and spectral transfer, output intensities, and the output
states for the four cases (factorizable or correlated input, passive or
active system).  Output photon content is a pulse-tensor pair (eta-, eta+)
obtained by the block-wise mode-1 kernel product; for correlated inputs
through active systems the output is a map from creation/annihilation sign
patterns to wavepacket tensors.

Gaussian parts are carried as sampled output spectral densities (or the tag
"vacuum" for passive systems); nothing beyond the spectral density is ever
reconstructed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._numerics import conv_matmul, trapz_weights
from .config import DEFAULT_CAPS, DEFAULT_TOLERANCES, Caps, Tolerances
from .errors import CapExceededError, ConfigError
from .lin_sys import (
    ImpulseResponse,
    MatrixKernel,
    StateSpace,
    TimeGrid,
    _ss_passive,
    frequency_response,
    impulse_response,
    is_stable,
    suggest_grid,
)
from .photon_states import (
    CovarianceFunction,
    FactorizableState,
    StationaryKernel,
    UnfactorizableState,
    photon_rank_pairs,
    wavepacket_norm,
)
from .tensor_alg import (
    CoreTensor,
    PulseTensor3,
    RaggedPulseMatrix,
    WavepacketTensor,
    circledast_equal_times,
    lift,
    mode1_product,
    multimode_convolution_mixed,
    permanent,
)

__all__ = [
    "SpectralDensity",
    "PhotonGaussianState",
    "SignedWavepacket",
    "GeneralPhotonGaussianState",
    "vacuum_spectral_input",
    "default_frequency_grid",
    "spectral_transfer",
    "output_covariance",
    "output_intensity",
    "output_state_factorizable",
    "output_state_passive_unfactorizable",
    "output_state_active_unfactorizable",
    "pattern_sign",
    "project_onto_fock",
    "fock_amplitude_table",
]


# ---------------------------------------------------------------------------
# Gaussian parts


@dataclass(frozen=True)
class SpectralDensity:
    """Sampled spectral density matrix over a frequency grid."""

    omegas: np.ndarray
    values: np.ndarray       # (Nw, 2m, 2m)


GaussianPart = Union[str, SpectralDensity]


def vacuum_spectral_input(m: int, omegas: Sequence[float]) -> np.ndarray:
    out = np.zeros((len(omegas), 2 * m, 2 * m), dtype=complex)
    out[:, :m, :m] = np.eye(m)
    return out


def default_frequency_grid(ss: StateSpace, n_points: int = 512) -> np.ndarray:
    scale = 1.0
    if ss.n:
        scale = max(scale, float(np.abs(np.linalg.eigvals(ss.A)).max()))
    w = 20.0 * scale
    return np.linspace(-w, w, n_points)


def spectral_transfer(ss: StateSpace, omegas: Sequence[float],
                      r_in: np.ndarray) -> np.ndarray:
    """Pointwise congruence of a spectral density by the transfer function."""
    if not is_stable(ss):
        raise ValueError("spectral_transfer requires a stable system")
    omegas = np.asarray(omegas, dtype=float)
    r_in = np.asarray(r_in, dtype=complex)
    if r_in.shape != (len(omegas), 2 * ss.m, 2 * ss.m):
        raise ValueError("spectral density shape does not match the frequency grid")
    xi = frequency_response(ss, omegas)
    return np.einsum("nab,nbc,ndc->nad", xi, r_in, xi.conj())


# ---------------------------------------------------------------------------
# output photon records


@dataclass(frozen=True)
class PhotonGaussianState:
    """Output of a factorizable drive: pulse tensors over a Gaussian field."""

    eta_minus: PulseTensor3
    eta_plus: PulseTensor3
    norms: Tuple[float, ...]
    core: CoreTensor
    gaussian_part: GaussianPart
    recomputed_norms: Optional[Tuple[float, ...]] = None

    @property
    def m(self) -> int:
        return self.eta_minus.m

    @property
    def ells(self) -> tuple:
        return self.eta_minus.ells

    @property
    def is_vacuum_gaussian(self) -> bool:
        return isinstance(self.gaussian_part, str) and self.gaussian_part == "vacuum"


@dataclass(frozen=True)
class SignedWavepacket:
    sign: int
    tensor: WavepacketTensor


@dataclass(frozen=True)
class GeneralPhotonGaussianState:
    """Active-case output: per channel, sign pattern -> wavepacket tensor."""

    channels: List[Dict[Tuple[int, ...], SignedWavepacket]]
    norms: Tuple[float, ...]
    gaussian_part: GaussianPart

    @property
    def m(self) -> int:
        return len(self.channels)


def pattern_sign(pattern: Sequence[int]) -> int:
    """Sign carried by a creation/annihilation pattern: -1 per lowering slot."""
    return -1 if sum(1 for f in pattern if f == -1) % 2 else 1


# ---------------------------------------------------------------------------
# shared plumbing


def _require_stable(ss: StateSpace, tol: Tolerances) -> None:
    if not is_stable(ss, tol):
        raise ValueError("operation requires an asymptotically stable system")


def _default_ir(ss: StateSpace, dt: float, tol: Tolerances) -> ImpulseResponse:
    if ss.n == 0:
        return impulse_response(ss, TimeGrid(0.0, dt, 2), tol)
    return impulse_response(ss, suggest_grid(ss, dt=dt), tol)


def _eta_pair(ss: StateSpace, state: FactorizableState,
              ir: Optional[ImpulseResponse], tol: Tolerances):
    if ir is None:
        ir = _default_ir(ss, state.grid.dt, tol)
    return mode1_product((lift(state.pulses), None), ir), ir


def _gaussian_part(ss: StateSpace, omegas: Optional[np.ndarray],
                   tol: Tolerances) -> GaussianPart:
    if _ss_passive(ss, tol):
        return "vacuum"
    if omegas is None:
        omegas = default_frequency_grid(ss)
    rout = spectral_transfer(ss, omegas, vacuum_spectral_input(ss.m, omegas))
    return SpectralDensity(omegas=np.asarray(omegas, float), values=rout)


# ---------------------------------------------------------------------------
# covariance and intensity


def _vacuum_stationary(ir: ImpulseResponse) -> StationaryKernel:
    """Stationary vacuum block of the output covariance for active systems.

    V(u) = integral K(u+s) P K(s)^dag ds + K(u) P D^dag + D P K(-u)^dag with
    P = diag(I_m, 0); the delta-squared part reproduces the vacuum delta and
    is handled by the caller.
    """
    m = ir.m
    two_m = 2 * m
    p = np.zeros((two_m, two_m), dtype=complex)
    p[:m, :m] = np.eye(m)
    k = ir.smooth_full()                      # (N, 2m, 2m) on [0, T]
    n = len(k)
    dt = ir.grid.dt
    d = ir.delta_part
    z = (p @ k.conj().transpose(0, 2, 1))[::-1]    # P K(-v)^dag on [-T, 0]
    vals = conv_matmul(k, z, dt)                   # lag grid [-T, T]
    cross_causal = k @ (p @ d.conj().T)
    cross_causal[0] *= 0.5
    cross_causal[-1] *= 0.5
    vals[n - 1:] += cross_causal
    cross_anti = (d @ p @ k.conj().transpose(0, 2, 1))[::-1]
    cross_anti[0] *= 0.5
    cross_anti[-1] *= 0.5
    vals[:n] += cross_anti
    return StationaryKernel(lag_t0=-ir.grid.t_max, dt=dt, values=vals)


def output_covariance(ss: StateSpace, state: FactorizableState,
                      ir: Optional[ImpulseResponse] = None,
                      tol: Tolerances = DEFAULT_TOLERANCES) -> CovarianceFunction:
    """Steady-state output covariance for a factorizable drive.

    The vacuum term contributes the delta coefficient (and, for active
    systems, a stationary lag kernel); the photon part is assembled from the
    output pulse tensors as a low-rank pair list.
    """
    _require_stable(ss, tol)
    (em, ep), ir = _eta_pair(ss, state, ir, tol)
    m = ss.m
    pvac = np.zeros((2 * m, 2 * m), dtype=complex)
    pvac[:m, :m] = np.eye(m)
    delta = ir.delta_part @ pvac @ ir.delta_part.conj().T
    stationary = None if _ss_passive(ss, tol) else _vacuum_stationary(ir)
    pairs = photon_rank_pairs(em, ep, state.core, state.norms)
    return CovarianceFunction(m=m, delta_coeff=delta, pairs=pairs,
                              grid_left=em.grid, grid_right=em.grid,
                              stationary=stationary)


def output_intensity(ss: StateSpace, state: FactorizableState,
                     ir: Optional[ImpulseResponse] = None,
                     tol: Tolerances = DEFAULT_TOLERANCES):
    """Per-channel steady-state output count rate.

    Returns (times, values) with values of shape (m, N).  Assembled directly
    from the defining three terms, independently of the covariance pair list.
    """
    _require_stable(ss, tol)
    (em, ep), ir = _eta_pair(ss, state, ir, tol)
    n_out = em.grid.n_points
    vals = np.zeros((ss.m, n_out), dtype=complex)
    # amplifier floor: integral of gplus^# gplus^T, constant in time
    if not ir.is_static and np.abs(ir.smooth_plus).max() > 0.0:
        w = trapz_weights(ir.grid.n_points, ir.grid.dt)
        floor = np.einsum("nil,n,nkl->ik", ir.smooth_plus.conj(), w, ir.smooth_plus)
        vals += np.diag(floor)[:, None]
    term_plus = circledast_equal_times(ep, ep.conj(), state.core, state.norms)
    term_minus = circledast_equal_times(em.conj(), em, state.core, state.norms)
    idx = np.arange(ss.m)
    vals += term_plus[idx, idx, :] + term_minus[idx, idx, :]
    return em.grid.times, vals.real


# ---------------------------------------------------------------------------
# output states


def output_state_factorizable(ss: StateSpace, state: FactorizableState,
                              ir: Optional[ImpulseResponse] = None,
                              omegas: Optional[np.ndarray] = None,
                              tol: Tolerances = DEFAULT_TOLERANCES,
                              input_gaussian: str = "vacuum") -> PhotonGaussianState:
    """Output photon-Gaussian record for a factorizable drive.

    The pulse tensors are the mode-1 kernel product of the lifted input; the
    input normalization constants and core tensor are carried over unchanged.
    Recomputed output norms (vector Gram permanents) are attached as a
    diagnostic.  Only vacuum Gaussian input parts are supported.
    """
    if input_gaussian != "vacuum":
        raise NotImplementedError(
            "non-vacuum Gaussian input parts are not supported")
    _require_stable(ss, tol)
    (em, ep), ir = _eta_pair(ss, state, ir, tol)
    from .tensor_alg import vector_gram_matrix

    recomputed = []
    for j in range(state.m):
        if state.ells[j] == 0:
            recomputed.append(1.0)
            continue
        g = vector_gram_matrix(em.slabs[j], em.grid.dt)
        recomputed.append(float(permanent(g).real))
    return PhotonGaussianState(
        eta_minus=em, eta_plus=ep, norms=state.norms, core=state.core,
        gaussian_part=_gaussian_part(ss, omegas, tol),
        recomputed_norms=tuple(recomputed),
    )


def output_state_passive_unfactorizable(ss: StateSpace, state: UnfactorizableState,
                                        ir: Optional[ImpulseResponse] = None,
                                        tol: Tolerances = DEFAULT_TOLERANCES,
                                        caps: Caps = DEFAULT_CAPS) -> UnfactorizableState:
    """Wave packet transfer through a passive system, channel by channel."""
    _require_stable(ss, tol)
    if not _ss_passive(ss, tol):
        raise ValueError("system is active; use the active output path")
    if ir is None:
        ir = _default_ir(ss, state.channels[0].grid.dt, tol)
    kern = ir.minus_kernel()
    outs = [multimode_convolution_mixed(ch, [kern] * ch.ell, caps)
            for ch in state.channels]
    recomputed = tuple(wavepacket_norm(ch) for ch in outs)
    return UnfactorizableState(channels=outs, norms=state.norms,
                               recomputed_norms=recomputed)


def output_state_active_unfactorizable(ss: StateSpace, state: UnfactorizableState,
                                       ir: Optional[ImpulseResponse] = None,
                                       omegas: Optional[np.ndarray] = None,
                                       tol: Tolerances = DEFAULT_TOLERANCES,
                                       caps: Caps = DEFAULT_CAPS,
                                       input_gaussian: str = "vacuum") -> GeneralPhotonGaussianState:
    """Sign-pattern resolved output for a correlated drive of any system.

    For an input that populates only the all-creation pattern, the pattern-f
    output tensor convolves mode i with the minus kernel when f_i = +1 and
    with the conjugated plus kernel when f_i = -1; each pattern carries the
    sign (-1)^(number of lowering slots).  Only vacuum Gaussian input parts
    are supported.
    """
    if input_gaussian != "vacuum":
        raise NotImplementedError(
            "non-vacuum Gaussian input parts are not supported")
    _require_stable(ss, tol)
    if ir is None:
        ir = _default_ir(ss, state.channels[0].grid.dt, tol)
    minus = ir.minus_kernel()
    plus_conj = ir.plus_kernel_conj()
    force_dynamic = not ir.is_static
    channels: List[Dict[Tuple[int, ...], SignedWavepacket]] = []
    for ch in state.channels:
        if 2 ** ch.ell > 2 ** caps.wavepacket_order:
            raise CapExceededError(
                f"{2 ** ch.ell} sign patterns exceed the configured cap")
        patterns: Dict[Tuple[int, ...], SignedWavepacket] = {}
        for f in itertools.product((1, -1), repeat=ch.ell):
            kerns = [minus if fi == 1 else plus_conj for fi in f]
            tensor = multimode_convolution_mixed(ch, kerns, caps,
                                                 force_dynamic=force_dynamic)
            patterns[f] = SignedWavepacket(sign=pattern_sign(f), tensor=tensor)
        channels.append(patterns)
    return GeneralPhotonGaussianState(channels=channels, norms=state.norms,
                                      gaussian_part=_gaussian_part(ss, omegas, tol))


# ---------------------------------------------------------------------------
# number-state projections


def _basis_slots(mode_basis: RaggedPulseMatrix) -> List[Tuple[int, int]]:
    return [(ch, d) for ch in range(mode_basis.m) for d in range(mode_basis.ells[ch])]


def _expansion_matrix(state: PhotonGaussianState, mode_basis: RaggedPulseMatrix,
                      tol: Tolerances) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """Coefficients of every output factor in the orthonormal mode basis."""
    em = state.eta_minus
    if mode_basis.grid.n_points != em.grid.n_points or \
            abs(mode_basis.grid.t_min - em.grid.t_min) > 1e-12 or \
            abs(mode_basis.grid.t_max - em.grid.t_max) > 1e-12:
        raise ValueError("mode basis must be sampled on the output grid")
    dt = em.grid.dt
    w = trapz_weights(em.grid.n_points, dt)
    for ch in range(mode_basis.m):
        basis = mode_basis.slabs[ch]
        if basis.shape[0] == 0:
            continue
        gram = np.einsum("an,n,bn->ab", basis.conj(), w, basis)
        if np.abs(gram - np.eye(len(basis))).max() > tol.basis_gram:
            raise ValueError(f"mode basis channel {ch} is not orthonormal")
    slots = _basis_slots(mode_basis)
    cols = [(j, k) for j in range(em.m) for k in range(em.ells[j])]
    mat = np.zeros((len(slots), len(cols)), dtype=complex)
    for c, (j, k) in enumerate(cols):
        for s, (ch, d) in enumerate(slots):
            mat[s, c] = np.einsum("n,n,n->", mode_basis.slabs[ch][d].conj(), w,
                                  em.slabs[j][ch, k])
        # the factor must be fully captured by the basis
        recon = np.zeros((em.m, em.grid.n_points), dtype=complex)
        for s, (ch, d) in enumerate(slots):
            recon[ch] += mat[s, c] * mode_basis.slabs[ch][d]
        resid = em.slabs[j][:, k] - recon
        scale = max(np.abs(em.slabs[j][:, k]).max(), 1e-300)
        if np.abs(resid).max() > tol.expand * max(1.0, scale):
            raise ValueError(
                f"output pulse ({j}, {k}) is not expressible in the mode basis")
    return mat, slots


def project_onto_fock(state: PhotonGaussianState, occupation: Sequence[int],
                      mode_basis: RaggedPulseMatrix,
                      tol: Tolerances = DEFAULT_TOLERANCES,
                      caps: Caps = DEFAULT_CAPS) -> complex:
    """Amplitude of a number-state pattern of a passive output state.

    ``occupation`` lists photon counts per basis slot (channel-major order
    over the mode basis).  The amplitude is a permanent of basis-expansion
    coefficients with the factorial and state normalizations applied.
    """
    if not state.is_vacuum_gaussian:
        raise ValueError("number-state projection needs a passive (vacuum Gaussian) output")
    occupation = [int(x) for x in occupation]
    if any(x < 0 for x in occupation):
        raise ValueError("occupation numbers must be non-negative")
    slots = _basis_slots(mode_basis)
    if len(occupation) != len(slots):
        raise ValueError(f"occupation needs one entry per basis slot ({len(slots)})")
    total = sum(state.ells)
    if sum(occupation) != total:
        raise ValueError(
            f"occupation sums to {sum(occupation)}, state carries {total} photons")
    mat, slots = _expansion_matrix(state, mode_basis, tol)
    rows = [s for s, cnt in enumerate(occupation) for _ in range(cnt)]
    perm = permanent(mat[rows, :], caps)
    denom = math.sqrt(float(np.prod([math.factorial(x) for x in occupation])))
    for n in state.norms:
        denom *= math.sqrt(n)
    return complex(perm / denom)


def _compositions(total: int, slots: int):
    if slots == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, slots - 1):
            yield (head,) + rest


def fock_amplitude_table(state: PhotonGaussianState, mode_basis: RaggedPulseMatrix,
                         tol: Tolerances = DEFAULT_TOLERANCES,
                         caps: Caps = DEFAULT_CAPS) -> Dict[Tuple[int, ...], complex]:
    """All number-state amplitudes of a passive output in the given basis."""
    slots = _basis_slots(mode_basis)
    total = sum(state.ells)
    table = {}
    for occ in _compositions(total, len(slots)):
        table[occ] = project_onto_fock(state, occ, mode_basis, tol, caps)
    return table
