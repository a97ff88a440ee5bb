"""Multi-photon input states and their second-order statistics.

Factorizable states are products of smeared creation operators, one pulse per
photon; their normalization is the permanent of the per-channel Gram matrix
and the core tensor holds the reduced permanents.  Unfactorizable states carry
a dense channel wave function per channel; their normalization is the explicit
permutation sum (at most ell! terms, with the second factor conjugated so the
constant is the squared norm of the symmetrized wave function).

Covariance functions are stored structurally: a delta coefficient, a list of
rank-one (left, right) vector-function pairs for the photon part, and an
optional stationary lag kernel used by active-system outputs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ._numerics import trapz_weights
from .config import DEFAULT_CAPS, DEFAULT_TOLERANCES, Caps, Tolerances
from .errors import CapExceededError, ConfigError
from .lin_sys import TimeGrid
from .tensor_alg import (
    CoreTensor,
    PulseTensor3,
    RaggedPulseMatrix,
    WavepacketTensor,
    check_wavepacket_size,
    core_from_gram,
    gram_matrix,
    lift,
    permanent,
    pulse_matrix_from_csv,
    zeros_like_lift,
)

__all__ = [
    "FactorizableState",
    "UnfactorizableState",
    "CovarianceFunction",
    "StationaryKernel",
    "make_factorizable",
    "lemma_nl_check",
    "input_covariance",
    "input_intensity",
    "make_unfactorizable",
    "wavepacket_norm",
    "photon_rank_pairs",
    "gaussian_pulse",
    "exp_decay_pulse",
    "correlated_gaussian_2d",
    "state_from_json",
]


# ---------------------------------------------------------------------------
# analytic pulse presets


def gaussian_pulse(center: float, width: float):
    """Unit-norm Gaussian pulse."""
    def f(t: np.ndarray) -> np.ndarray:
        return (np.pi * width**2) ** (-0.25) * np.exp(-((t - center) ** 2) / (2 * width**2))
    return f


def exp_decay_pulse(rate: float, start: float = 0.0):
    """Unit-norm one-sided exponential, sqrt(rate) e^{-rate (t-start)/2}."""
    def f(t: np.ndarray) -> np.ndarray:
        out = np.sqrt(rate) * np.exp(-rate * (t - start) / 2.0)
        return np.where(t >= start, out, 0.0).astype(complex)
    return f


def correlated_gaussian_2d(centers: Sequence[float], sigmas: Sequence[float],
                           rho: float):
    """Bivariate Gaussian density used as a two-photon wave function."""
    t1c, t2c = centers
    s1, s2 = sigmas
    if not -1.0 < rho < 1.0:
        raise ConfigError("rho: correlation must lie in (-1, 1)")
    cov = np.array([[s1 * s1, rho * s1 * s2], [rho * s1 * s2, s2 * s2]])
    cov_inv = np.linalg.inv(cov)
    det = np.linalg.det(cov)

    def f(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
        x1 = t1[:, None] - t1c
        x2 = t2[None, :] - t2c
        quad = (cov_inv[0, 0] * x1**2 + 2 * cov_inv[0, 1] * x1 * x2
                + cov_inv[1, 1] * x2**2)
        return np.exp(-0.5 * quad) / (2 * np.pi * np.sqrt(det)) + 0.0j
    return f


# ---------------------------------------------------------------------------
# factorizable states


@dataclass(frozen=True)
class FactorizableState:
    """Product multi-photon state: pulses, Gram matrices, norms, core tensor."""

    pulses: RaggedPulseMatrix
    norms: Tuple[float, ...]
    core: CoreTensor
    grams: List[np.ndarray] = field(repr=False, default=None)

    @property
    def m(self) -> int:
        return self.pulses.m

    @property
    def ells(self) -> tuple:
        return self.pulses.ells

    @property
    def grid(self) -> TimeGrid:
        return self.pulses.grid


def make_factorizable(pulses: RaggedPulseMatrix,
                      tol: Tolerances = DEFAULT_TOLERANCES,
                      caps: Caps = DEFAULT_CAPS) -> FactorizableState:
    """Normalize a pulse family into a state record.

    The per-channel normalization is the permanent of the Gram matrix; the
    core slices are its reduced permanents.  Channels whose permanent falls
    below ``tol.norm`` are rejected as degenerate.
    """
    dt = pulses.grid.dt
    grams = []
    norms = []
    slices = []
    for j in range(pulses.m):
        g = gram_matrix(pulses.slabs[j], dt)
        grams.append(g)
        if pulses.ells[j] == 0:
            norms.append(1.0)
            slices.append(np.zeros((0, 0), dtype=complex))
            continue
        n = permanent(g, caps)
        if abs(n.imag) > 1e-10 * max(1.0, abs(n.real)):
            raise ValueError(f"channel {j}: normalization permanent is not real ({n})")
        if n.real <= tol.norm:
            raise ValueError(f"channel {j}: degenerate pulse set (N = {n.real:.3e})")
        norms.append(float(n.real))
        slices.append(core_from_gram(g, caps))
    core = CoreTensor(m=pulses.m, ells=pulses.ells, slices=slices)
    return FactorizableState(pulses=pulses, norms=tuple(norms), core=core, grams=grams)


def lemma_nl_check(state: FactorizableState, j: int) -> float:
    """Max row residual of the permanent expansion identity for channel j."""
    g = state.grams[j]
    c = state.core.slices[j]
    if g.shape[0] == 0:
        return 0.0
    rows = np.einsum("ik,ik->i", c, g)
    return float(np.abs(rows - state.norms[j]).max())


def input_intensity(state: FactorizableState) -> np.ndarray:
    """Per-channel count rate on the pulse grid, shape (m, N)."""
    out = np.zeros((state.m, state.grid.n_points))
    for j in range(state.m):
        if state.ells[j] == 0:
            continue
        w = state.core.slices[j] / state.norms[j]
        val = np.einsum("ik,in,kn->n", w, state.pulses.slabs[j].conj(),
                        state.pulses.slabs[j])
        out[j] = val.real
    return out


# ---------------------------------------------------------------------------
# covariance functions


@dataclass(frozen=True)
class StationaryKernel:
    """Sampled stationary 2m-by-2m kernel of the lag t - r."""

    lag_t0: float
    dt: float
    values: np.ndarray       # (Nlag, 2m, 2m)

    def at_lag(self, lag: float) -> np.ndarray:
        idx = int(round((lag - self.lag_t0) / self.dt))
        if idx < 0 or idx >= len(self.values):
            return np.zeros_like(self.values[0])
        return self.values[idx]


@dataclass(frozen=True)
class CovarianceFunction:
    """Structured kernel R(t, r): delta coefficient plus low-rank smooth part.

    The smooth part is sum_p outer(left_p(t), right_p(r)); the optional
    stationary block (active-system vacuum contribution) adds V(t - r).
    """

    m: int
    delta_coeff: np.ndarray                 # (2m, 2m)
    pairs: List[Tuple[np.ndarray, np.ndarray]]
    grid_left: TimeGrid
    grid_right: TimeGrid
    stationary: Optional[StationaryKernel] = None

    @property
    def rank(self) -> int:
        return len(self.pairs)

    def smooth_at(self, it: int, ir: int) -> np.ndarray:
        """Smooth kernel value at grid indices (it, ir), delta part excluded."""
        two_m = 2 * self.m
        out = np.zeros((two_m, two_m), dtype=complex)
        for left, right in self.pairs:
            out += np.outer(left[:, it], right[:, ir])
        if self.stationary is not None:
            lag = self.grid_left.times[it] - self.grid_right.times[ir]
            out += self.stationary.at_lag(lag)
        return out

    def lower_block_diag_equal_times(self) -> np.ndarray:
        """Diagonal of the (2,2) m-by-m block along t = r, shape (m, N)."""
        n = self.grid_left.n_points
        out = np.zeros((self.m, n), dtype=complex)
        for left, right in self.pairs:
            out += left[self.m:, :] * right[self.m:, :]
        if self.stationary is not None:
            v0 = self.stationary.at_lag(0.0)
            out += np.diag(v0)[self.m:, None]
        return out


def photon_rank_pairs(eta_minus: PulseTensor3, eta_plus: PulseTensor3,
                      core: CoreTensor, norms: Sequence[float]):
    """Rank-one factor pairs of the photon part of a covariance kernel.

    Implements the two core-weighted pairing terms of the output covariance
    (which reduce to the input form when the plus tensor vanishes).  Each pair
    (L, R) contributes outer(L(t), R(r)); zero factors are dropped.
    """
    m = eta_minus.m
    n = eta_minus.grid.n_points
    pairs = []

    def emit(top_l, bot_l, top_r, bot_r):
        left = np.zeros((2 * m, n), dtype=complex)
        right = np.zeros((2 * m, n), dtype=complex)
        if top_l is not None:
            left[:m] = top_l
        if bot_l is not None:
            left[m:] = bot_l
        if top_r is not None:
            right[:m] = top_r
        if bot_r is not None:
            right[m:] = bot_r
        if np.abs(left).max() > 0.0 and np.abs(right).max() > 0.0:
            pairs.append((left, right))

    for j in range(eta_minus.m):
        ell = eta_minus.ells[j]
        if ell == 0:
            continue
        w = core.slices[j] / norms[j]
        em = eta_minus.slabs[j]                     # (m, ell, N)
        ep = eta_plus.slabs[j]
        u = np.einsum("ab,ibn->ian", w, em)
        has_plus = np.abs(ep).max() > 0.0
        rho = np.einsum("ab,ibn->ian", w, ep.conj()) if has_plus else None
        for a in range(ell):
            emit(u[:, a], None, em[:, a].conj(), None)
            emit(None, u[:, a].conj(), None, em[:, a])
            if has_plus:
                emit(u[:, a].conj(), None, None, ep[:, a].conj())
                emit(None, u[:, a], ep[:, a], None)
                emit(ep[:, a], None, rho[:, a], u[:, a])
                emit(None, ep[:, a].conj(), u[:, a].conj(), rho[:, a].conj())
    return pairs


def input_covariance(state: FactorizableState) -> CovarianceFunction:
    """Input covariance: vacuum delta plus the low-rank photon kernel."""
    m = state.m
    delta = np.zeros((2 * m, 2 * m), dtype=complex)
    delta[:m, :m] = np.eye(m)
    up = lift(state.pulses)
    pairs = photon_rank_pairs(up, zeros_like_lift(up), state.core, state.norms)
    return CovarianceFunction(m=m, delta_coeff=delta, pairs=pairs,
                              grid_left=state.grid, grid_right=state.grid)


# ---------------------------------------------------------------------------
# unfactorizable states


@dataclass(frozen=True)
class UnfactorizableState:
    """Per-channel dense wave functions with their normalization constants.

    ``recomputed_norms`` is populated on outputs as a diagnostic (the
    permutation-sum norm of the transformed tensors).
    """

    channels: List[WavepacketTensor]
    norms: Tuple[float, ...]
    recomputed_norms: Optional[Tuple[float, ...]] = None

    @property
    def m(self) -> int:
        return len(self.channels)

    @property
    def ells(self) -> tuple:
        return tuple(c.ell for c in self.channels)


def _channel_norm(array: np.ndarray, dt: float) -> Tuple[float, float]:
    """Permutation-sum normalization of one channel wave function."""
    ell = array.ndim
    w1 = trapz_weights(array.shape[0], dt)
    weighted = array.copy()
    for ax in range(ell):
        shape = [1] * ell
        shape[ax] = -1
        weighted = weighted * w1.reshape(shape)
    total = 0.0 + 0.0j
    for perm in itertools.permutations(range(ell)):
        total += np.sum(weighted * np.conj(np.transpose(array, perm)))
    return float(total.real), float(abs(total.imag))


def wavepacket_norm(psi: WavepacketTensor) -> float:
    """Permutation-sum norm of a wavepacket with channel indices.

    Channel labels and time arguments are permuted together, matching the
    pairing of smeared creation operators against their adjoints.
    """
    ell = psi.ell
    w1 = trapz_weights(psi.grid.n_points, psi.grid.dt)
    weighted = psi.values.copy()
    for ax in range(ell, 2 * ell):
        shape = [1] * (2 * ell)
        shape[ax] = -1
        weighted = weighted * w1.reshape(shape)
    total = 0.0 + 0.0j
    for perm in itertools.permutations(range(ell)):
        axes = list(perm) + [ell + p for p in perm]
        total += np.sum(weighted * np.conj(np.transpose(psi.values, axes)))
    return float(total.real)


def make_unfactorizable(channel_arrays: Sequence[np.ndarray], grid: TimeGrid,
                        m: Optional[int] = None,
                        tol: Tolerances = DEFAULT_TOLERANCES,
                        caps: Caps = DEFAULT_CAPS) -> UnfactorizableState:
    """Build a correlated multi-photon state from channel wave functions.

    ``channel_arrays[j]`` is the ell_j-dimensional sampled wave function of
    channel j.  Normalization uses the explicit permutation sum; a state whose
    symmetrization vanishes (e.g. an antisymmetric wave function) is rejected.
    """
    if m is None:
        m = len(channel_arrays)
    if m != len(channel_arrays):
        raise ConfigError("state: one channel wave function per channel required")
    channels = []
    norms = []
    for j, arr in enumerate(channel_arrays):
        arr = np.asarray(arr, dtype=complex)
        ell = arr.ndim
        if ell > caps.wavepacket_order:
            raise CapExceededError(
                f"channel {j}: photon count {ell} exceeds cap {caps.wavepacket_order}")
        check_wavepacket_size(m, ell, grid.n_points, caps)
        n, imag = _channel_norm(arr, grid.dt)
        if imag > 1e-9 * max(1.0, abs(n)):
            raise ValueError(f"channel {j}: normalization is not real")
        if n <= tol.norm:
            raise ValueError(
                f"channel {j}: zero-norm wave function (symmetrization vanishes, N = {n:.3e})")
        channels.append(WavepacketTensor.from_channel_function(j, m, grid, arr, caps))
        norms.append(n)
    return UnfactorizableState(channels=channels, norms=tuple(norms))


# ---------------------------------------------------------------------------
# state JSON specifications


def _pulse_from_spec(spec: dict, grid: TimeGrid, where: str):
    kind = spec.get("kind")
    if kind == "gaussian":
        try:
            return gaussian_pulse(float(spec["center"]), float(spec["width"]))(grid.times)
        except KeyError as exc:
            raise ConfigError(f"{where}: gaussian pulse needs 'center' and 'width'") from exc
    if kind == "exp_decay":
        try:
            return exp_decay_pulse(float(spec["rate"]), float(spec.get("start", 0.0)))(grid.times)
        except KeyError as exc:
            raise ConfigError(f"{where}: exp_decay pulse needs 'rate'") from exc
    if kind == "csv":
        path = spec.get("path")
        if not path:
            raise ConfigError(f"{where}: csv pulse needs 'path'")
        loaded = pulse_matrix_from_csv(path, [1])
        if loaded.grid.n_points != grid.n_points or abs(loaded.grid.t_min - grid.t_min) > 1e-12:
            raise ConfigError(f"{where}: csv grid does not match the run grid")
        return loaded.slabs[0][0]
    raise ConfigError(f"{where}: unknown pulse kind {kind!r}")


def state_from_json(doc: dict, grid: TimeGrid,
                    tol: Tolerances = DEFAULT_TOLERANCES,
                    caps: Caps = DEFAULT_CAPS):
    """Build a state from its JSON specification on the given grid."""
    kind = doc.get("type")
    channels = doc.get("channels")
    if not isinstance(channels, list) or not channels:
        raise ConfigError("state.channels: non-empty list required")
    if kind == "factorizable":
        slabs = []
        for j, chan in enumerate(channels):
            if not isinstance(chan, list):
                raise ConfigError(f"state.channels[{j}]: list of pulse specs required")
            rows = [_pulse_from_spec(p, grid, f"state.channels[{j}][{k}]")
                    for k, p in enumerate(chan)]
            slabs.append(np.stack(rows) if rows else np.zeros((0, grid.n_points), complex))
        pulses = RaggedPulseMatrix(m=len(channels), ells=tuple(s.shape[0] for s in slabs),
                                   slabs=slabs, grid=grid)
        return make_factorizable(pulses, tol, caps)
    if kind == "unfactorizable":
        arrays = []
        for j, chan in enumerate(channels):
            where = f"state.channels[{j}]"
            ckind = chan.get("kind") if isinstance(chan, dict) else None
            if ckind == "gaussian_correlated":
                f = correlated_gaussian_2d(chan["centers"], chan["sigmas"], float(chan["rho"]))
                arrays.append(f(grid.times, grid.times))
            elif ckind == "product":
                pulses = [_pulse_from_spec(p, grid, where) for p in chan["pulses"]]
                arr = pulses[0]
                for p in pulses[1:]:
                    arr = np.multiply.outer(arr, p)
                arrays.append(arr)
            elif ckind == "file":
                from .tensor_alg import wavepacket_from_file
                wpt = wavepacket_from_file(chan["path"], caps)
                arrays.append(wpt.diagonal_block())
            else:
                raise ConfigError(f"{where}: unknown wave function kind {ckind!r}")
        return make_unfactorizable(arrays, grid, m=len(channels), tol=tol, caps=caps)
    raise ConfigError(f"state.type: expected 'factorizable' or 'unfactorizable', got {kind!r}")
