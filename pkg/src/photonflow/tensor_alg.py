"""Ragged pulse tensors and their algebra.

A multi-photon drive on m channels with photon counts (l_1, ..., l_m) is
encoded by a ragged matrix of pulse functions xi[j][k] (channel j, photon k).
Three-way liftings of such matrices, a core-tensor weighted pairing, the
block-wise mode-1 kernel product, and the per-mode multimode convolution of
dense wavepacket tensors are implemented here, together with the permanent
evaluations that normalize everything.

Storage is ragged: per-channel slabs, never padded rectangles.
"""

from __future__ import annotations

import itertools
import json
import struct
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ._numerics import conv_kernel_batch, trapz_weights
from .config import DEFAULT_CAPS, DEFAULT_TOLERANCES, Caps, Tolerances
from .errors import CapExceededError, ConfigError
from .lin_sys import ImpulseResponse, MatrixKernel, TimeGrid

__all__ = [
    "RaggedPulseMatrix",
    "PulseTensor3",
    "CoreTensor",
    "WavepacketTensor",
    "lift",
    "zeros_like_lift",
    "circledast",
    "circledast_equal_times",
    "mode1_product",
    "multimode_convolution",
    "multimode_convolution_mixed",
    "multimode_convolution_direct",
    "permanent",
    "permanent_naive",
    "gram_matrix",
    "vector_gram_matrix",
    "core_from_gram",
    "pulse_matrix_to_csv",
    "pulse_matrix_from_csv",
    "wavepacket_to_file",
    "wavepacket_from_file",
]


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class RaggedPulseMatrix:
    """Pulse functions xi[j][k] sampled on a shared grid.

    ``slabs[j]`` has shape (ells[j], n_points); all entries must have finite
    discrete L2 norm.
    """

    m: int
    ells: tuple
    slabs: List[np.ndarray]
    grid: TimeGrid

    def __post_init__(self) -> None:
        if self.m != len(self.slabs) or self.m != len(self.ells):
            raise ConfigError("pulse matrix: channel count mismatch")
        n = self.grid.n_points
        for j, slab in enumerate(self.slabs):
            if slab.shape != (self.ells[j], n):
                raise ConfigError(
                    f"pulse matrix: channel {j} slab shape {slab.shape} != {(self.ells[j], n)}"
                )
            if not np.isfinite(slab).all():
                raise ConfigError(f"pulse matrix: channel {j} has non-finite samples")

    @classmethod
    def from_functions(cls, funcs: Sequence[Sequence], grid: TimeGrid) -> "RaggedPulseMatrix":
        """Sample callables (or take arrays verbatim) per channel."""
        t = grid.times
        slabs = []
        for chan in funcs:
            rows = [np.asarray(f(t) if callable(f) else f, dtype=complex) for f in chan]
            slabs.append(np.stack(rows) if rows else np.zeros((0, grid.n_points), complex))
        ells = tuple(s.shape[0] for s in slabs)
        return cls(m=len(slabs), ells=ells, slabs=slabs, grid=grid)

    @property
    def total_photons(self) -> int:
        return int(sum(self.ells))


@dataclass(frozen=True)
class PulseTensor3:
    """Three-way pulse tensor with entries indexed (i, j, k) at each time.

    ``slabs[j]`` has shape (m, ells[j], n_points): for fixed j the mode-3
    fiber length is the photon count of channel j.
    """

    m: int
    ells: tuple
    slabs: List[np.ndarray]
    grid: TimeGrid

    def conj(self) -> "PulseTensor3":
        return PulseTensor3(self.m, self.ells, [s.conj() for s in self.slabs], self.grid)

    def __add__(self, other: "PulseTensor3") -> "PulseTensor3":
        if self.ells != other.ells or self.grid != other.grid:
            raise ValueError("tensor shapes or grids differ")
        return PulseTensor3(self.m, self.ells,
                            [a + b for a, b in zip(self.slabs, other.slabs)], self.grid)

    def max_abs(self) -> float:
        return max((float(np.abs(s).max()) if s.size else 0.0) for s in self.slabs)


@dataclass(frozen=True)
class CoreTensor:
    """Partially Hermitian weights for the circledast pairing.

    ``slices[j]`` is the (ells[j], ells[j]) Hermitian matrix of reduced
    vacuum expectations for channel j.
    """

    m: int
    ells: tuple
    slices: List[np.ndarray]

    def __post_init__(self) -> None:
        tol = DEFAULT_TOLERANCES.herm
        for j, sl in enumerate(self.slices):
            if sl.shape != (self.ells[j], self.ells[j]):
                raise ConfigError(f"core tensor: slice {j} has shape {sl.shape}")
            if sl.size and np.abs(sl - sl.conj().T).max() > tol * max(1.0, np.abs(sl).max()):
                raise ConfigError(f"core tensor: slice {j} is not Hermitian")


def _wavepacket_entries(m: int, ell: int, n_points: int) -> int:
    return (m ** ell) * (n_points ** ell)


def check_wavepacket_size(m: int, ell: int, n_points: int, caps: Caps = DEFAULT_CAPS) -> None:
    if ell > caps.wavepacket_order:
        raise CapExceededError(
            f"wavepacket order {ell} exceeds cap {caps.wavepacket_order}"
        )
    entries = _wavepacket_entries(m, ell, n_points)
    if entries > caps.wavepacket_entries:
        raise CapExceededError(
            f"wavepacket needs {entries} entries, cap is {caps.wavepacket_entries}"
        )


@dataclass(frozen=True)
class WavepacketTensor:
    """Dense ell-way wavepacket with per-mode channel indices.

    ``values`` has shape (m,)*ell + (n_points,)*ell: channel indices first,
    then one time axis per photon slot, all on the same grid.
    """

    channel: int
    ell: int
    m: int
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        expected = (self.m,) * self.ell + (self.grid.n_points,) * self.ell
        if self.values.shape != expected:
            raise ConfigError(
                f"wavepacket: values shape {self.values.shape} != {expected}"
            )

    @classmethod
    def from_channel_function(cls, channel: int, m: int, grid: TimeGrid,
                              array: np.ndarray, caps: Caps = DEFAULT_CAPS) -> "WavepacketTensor":
        """Embed a channel wave function diagonally in the channel indices."""
        array = np.asarray(array, dtype=complex)
        ell = array.ndim
        if array.shape != (grid.n_points,) * ell:
            raise ConfigError("wavepacket: array axes must match the grid length")
        check_wavepacket_size(m, ell, grid.n_points, caps)
        values = np.zeros((m,) * ell + array.shape, dtype=complex)
        values[(channel,) * ell] = array
        return cls(channel=channel, ell=ell, m=m, grid=grid, values=values)

    def diagonal_block(self) -> np.ndarray:
        """The (channel, ..., channel) time array."""
        return self.values[(self.channel,) * self.ell]


# ---------------------------------------------------------------------------
# permanents


def permanent(g: np.ndarray, caps: Caps = DEFAULT_CAPS) -> complex:
    """Permanent by Ryser's formula with Gray-code subset updates."""
    g = np.asarray(g, dtype=complex)
    k = g.shape[0]
    if g.shape != (k, k):
        raise ValueError("permanent needs a square matrix")
    if k == 0:
        return 1.0 + 0.0j
    if k > caps.permanent_order:
        raise CapExceededError(f"permanent order {k} exceeds cap {caps.permanent_order}")
    row_sums = np.zeros(k, dtype=complex)
    total = 0.0 + 0.0j
    prev = 0
    for idx in range(1, 1 << k):
        gray = idx ^ (idx >> 1)
        diff = gray ^ prev
        j = diff.bit_length() - 1
        if gray & diff:
            row_sums += g[:, j]
        else:
            row_sums -= g[:, j]
        total += (-1.0) ** gray.bit_count() * np.prod(row_sums)
        prev = gray
    return complex((-1.0) ** k * total)


def permanent_naive(g: np.ndarray) -> complex:
    """Permanent by the defining permutation sum (oracle route)."""
    g = np.asarray(g, dtype=complex)
    k = g.shape[0]
    if k == 0:
        return 1.0 + 0.0j
    total = 0.0 + 0.0j
    rows = range(k)
    for perm in itertools.permutations(range(k)):
        prod = 1.0 + 0.0j
        for i in rows:
            prod *= g[i, perm[i]]
        total += prod
    return complex(total)


def gram_matrix(slab: np.ndarray, dt: float) -> np.ndarray:
    """Pairwise overlaps G[a, b] = integral conj(xi_a) xi_b dt."""
    w = trapz_weights(slab.shape[-1], dt)
    return np.einsum("an,n,bn->ab", slab.conj(), w, slab)


def vector_gram_matrix(slab: np.ndarray, dt: float) -> np.ndarray:
    """Gram of vector-valued pulses: slab has shape (m, ell, N)."""
    w = trapz_weights(slab.shape[-1], dt)
    return np.einsum("ian,n,ibn->ab", slab.conj(), w, slab)


def core_from_gram(g: np.ndarray, caps: Caps = DEFAULT_CAPS) -> np.ndarray:
    """Core slice of reduced permanents: entry (i, k) drops row i, column k."""
    ell = g.shape[0]
    if ell == 1:
        return np.ones((1, 1), dtype=complex)
    out = np.empty((ell, ell), dtype=complex)
    for i in range(ell):
        gi = np.delete(g, i, axis=0)
        for k in range(ell):
            out[i, k] = permanent(np.delete(gi, k, axis=1), caps)
    return out


# ---------------------------------------------------------------------------
# tensor operations


def lift(xi: RaggedPulseMatrix) -> PulseTensor3:
    """Embed a ragged pulse matrix as the diagonal horizontal slices."""
    slabs = []
    for j in range(xi.m):
        slab = np.zeros((xi.m, xi.ells[j], xi.grid.n_points), dtype=complex)
        slab[j] = xi.slabs[j]
        slabs.append(slab)
    return PulseTensor3(m=xi.m, ells=xi.ells, slabs=slabs, grid=xi.grid)


def zeros_like_lift(xi: PulseTensor3) -> PulseTensor3:
    return PulseTensor3(xi.m, xi.ells,
                        [np.zeros_like(s) for s in xi.slabs], xi.grid)


def circledast(s: PulseTensor3, t: PulseTensor3, core: CoreTensor,
               norms: Sequence[float]) -> np.ndarray:
    """Core-weighted pairing of two pulse tensors.

    Entry (i, k, a, b) is
    ``sum_j (1/N_j) sum_{alpha, beta} core[j][alpha, beta]
    s[i, j, alpha](t_a) t[k, j, beta](r_b)``
    i.e. the first factor is sampled on its own grid (index a), the second on
    its own grid (index b).
    """
    if s.ells != t.ells:
        raise ValueError("pulse tensors have different photon structures")
    for n in norms:
        if not n > 0:
            raise ValueError("normalization constants must be positive")
    ns, nt = s.grid.n_points, t.grid.n_points
    out = np.zeros((s.m, s.m, ns, nt), dtype=complex)
    for j in range(s.m):
        if s.ells[j] == 0:
            continue
        out += np.einsum("ab,ian,kbr->iknr", core.slices[j] / norms[j],
                         s.slabs[j], t.slabs[j])
    return out


def circledast_equal_times(s: PulseTensor3, t: PulseTensor3, core: CoreTensor,
                           norms: Sequence[float]) -> np.ndarray:
    """The pairing restricted to equal sample times; shape (m, m, N)."""
    if s.grid != t.grid:
        raise ValueError("equal-time pairing needs a shared grid")
    out = np.zeros((s.m, s.m, s.grid.n_points), dtype=complex)
    for j in range(s.m):
        if s.ells[j] == 0:
            continue
        out += np.einsum("ab,ian,kbn->ikn", core.slices[j] / norms[j],
                         s.slabs[j], t.slabs[j])
    return out


def _apply_matrix_kernel(tensor: PulseTensor3, kern: MatrixKernel,
                         force_dynamic: bool = False) -> PulseTensor3:
    """Mode-1 product of a 3-way tensor with a delta-plus-smooth kernel."""
    if kern.is_static and not force_dynamic:
        slabs = [np.einsum("pr,rkn->pkn", kern.delta_part, s) for s in tensor.slabs]
        return PulseTensor3(tensor.m, tensor.ells, slabs, tensor.grid)
    if not tensor.grid.compatible_dt(kern.grid):
        raise ValueError("kernel and tensor grids have different spacing")
    dt = tensor.grid.dt
    n_sig = tensor.grid.n_points
    n_k = kern.grid.n_points
    out_grid = TimeGrid(tensor.grid.t_min + kern.grid.t_min,
                        tensor.grid.t_max + kern.grid.t_max, n_sig + n_k - 1)
    idx0 = int(round((tensor.grid.t_min - out_grid.t_min) / dt))
    kern_t = kern.smooth.transpose(1, 2, 0)           # (p, r, Nk)
    slabs = []
    for slab in tensor.slabs:
        if slab.shape[1] == 0:
            slabs.append(np.zeros((tensor.m, 0, out_grid.n_points), dtype=complex))
            continue
        smooth = conv_kernel_batch(kern_t, slab, dt)
        smooth[:, :, idx0: idx0 + n_sig] += np.einsum("pr,rkn->pkn", kern.delta_part, slab)
        slabs.append(smooth)
    return PulseTensor3(tensor.m, tensor.ells, slabs, out_grid)


def mode1_product(pair, kernel: ImpulseResponse):
    """Block-wise mode-1 product of a doubled-up tensor pair with a kernel.

    ``pair`` is (S, T) representing Delta(S, T); the result is
    (S x1 E + conj(T) x1 F, T x1 E + conj(S) x1 F) with E, F the minus and
    plus kernel blocks.
    """
    s, t = pair
    if t is None:
        t = zeros_like_lift(s)
    dynamic = not kernel.is_static
    e = kernel.minus_kernel()
    f = MatrixKernel(np.zeros((kernel.m, kernel.m), dtype=complex),
                     kernel.smooth_plus, kernel.grid)
    s_out = _apply_matrix_kernel(s, e, force_dynamic=dynamic)
    t_out = _apply_matrix_kernel(t, e, force_dynamic=dynamic)
    has_plus = kernel.smooth_plus.size and np.abs(kernel.smooth_plus).max() > 0.0
    if has_plus:
        s_out = s_out + _apply_matrix_kernel(t.conj(), f, force_dynamic=dynamic)
        t_out = t_out + _apply_matrix_kernel(s.conj(), f, force_dynamic=dynamic)
    return s_out, t_out


def _apply_mode(values: np.ndarray, mode: int, ell: int, kern: MatrixKernel,
                dt: float, idx0: int, dynamic: bool) -> np.ndarray:
    """Contract one channel index and convolve the matching time axis."""
    m = kern.m
    ch_ax, t_ax = mode, ell + mode
    v = np.moveaxis(values, (ch_ax, t_ax), (0, values.ndim - 1))
    lead = v.shape[1:-1]
    n_in = v.shape[-1]
    flat = v.reshape(m, -1, n_in)
    if not dynamic:
        out = np.einsum("pr,rbn->pbn", kern.delta_part, flat)
        n_out = n_in
    else:
        n_out = n_in + kern.grid.n_points - 1
        if not np.abs(flat).max() > 0.0:
            out = np.zeros((m, flat.shape[1], n_out), dtype=complex)
        elif kern.is_static:
            out = np.zeros((m, flat.shape[1], n_out), dtype=complex)
            out[:, :, idx0: idx0 + n_in] += np.einsum("pr,rbn->pbn", kern.delta_part, flat)
        else:
            out = conv_kernel_batch(kern.smooth.transpose(1, 2, 0), flat, dt)
            out[:, :, idx0: idx0 + n_in] += np.einsum("pr,rbn->pbn", kern.delta_part, flat)
    out = out.reshape((m,) + lead + (n_out,))
    return np.moveaxis(out, (0, out.ndim - 1), (ch_ax, t_ax))


def multimode_convolution_mixed(psi: WavepacketTensor, kernels: Sequence[MatrixKernel],
                                caps: Caps = DEFAULT_CAPS,
                                force_dynamic: bool = False) -> WavepacketTensor:
    """Apply one kernel per photon slot of a wavepacket tensor.

    All kernels must share channel count (and, when any is dynamic, the same
    sampling grid, so every time axis extends identically).
    """
    if len(kernels) != psi.ell:
        raise ValueError("need one kernel per photon slot")
    for kern in kernels:
        if kern.m != psi.m:
            raise ValueError("kernel channel count differs from wavepacket")
    dynamic = force_dynamic or any(not k.is_static for k in kernels)
    if dynamic:
        kgrid = kernels[0].grid
        for kern in kernels[1:]:
            if kern.grid != kgrid:
                raise ValueError("per-mode kernels must share one grid")
        if not psi.grid.compatible_dt(kgrid):
            raise ValueError("kernel and wavepacket grids have different spacing")
        n_out = psi.grid.n_points + kgrid.n_points - 1
        out_grid = TimeGrid(psi.grid.t_min + kgrid.t_min,
                            psi.grid.t_max + kgrid.t_max, n_out)
    else:
        out_grid = psi.grid
        n_out = psi.grid.n_points
    check_wavepacket_size(psi.m, psi.ell, n_out, caps)
    dt = psi.grid.dt
    idx0 = 0 if not dynamic else int(round((psi.grid.t_min - out_grid.t_min) / dt))
    values = psi.values
    for mode, kern in enumerate(kernels):
        values = _apply_mode(values, mode, psi.ell, kern, dt, idx0, dynamic)
    return WavepacketTensor(channel=psi.channel, ell=psi.ell, m=psi.m,
                            grid=out_grid, values=values)


def multimode_convolution(psi: WavepacketTensor, kern: MatrixKernel,
                          caps: Caps = DEFAULT_CAPS) -> WavepacketTensor:
    """Apply one m-by-m kernel to every photon slot of a wavepacket tensor.

    Each mode application contracts one channel index against the kernel and
    convolves the matching time axis; the delta part of the kernel acts as a
    plain matrix.
    """
    return multimode_convolution_mixed(psi, [kern] * psi.ell, caps)


def multimode_convolution_direct(psi: WavepacketTensor, kern: MatrixKernel,
                                 caps: Caps = DEFAULT_CAPS) -> WavepacketTensor:
    """Direct-quadrature oracle for :func:`multimode_convolution`.

    Builds the dense per-axis quadrature operator and contracts it mode by
    mode; no FFTs are involved.
    """
    from ._numerics import quadrature_conv_matrix

    if kern.is_static:
        return multimode_convolution(psi, kern, caps)
    if not psi.grid.compatible_dt(kern.grid):
        raise ValueError("kernel and wavepacket grids have different spacing")
    dt = psi.grid.dt
    n_in = psi.grid.n_points
    n_out = n_in + kern.grid.n_points - 1
    out_grid = TimeGrid(psi.grid.t_min + kern.grid.t_min,
                        psi.grid.t_max + kern.grid.t_max, n_out)
    check_wavepacket_size(psi.m, psi.ell, n_out, caps)
    idx0 = int(round((psi.grid.t_min - out_grid.t_min) / dt))
    m = psi.m
    # per channel pair (p, r): dense (n_out, n_in) quadrature operator
    q = np.zeros((m, m, n_out, n_in), dtype=complex)
    for p in range(m):
        for r in range(m):
            q[p, r] = quadrature_conv_matrix(kern.smooth[:, p, r], n_in, dt)
            for col in range(n_in):
                q[p, r, idx0 + col, col] += kern.delta_part[p, r]
    values = psi.values
    ell = psi.ell
    for mode in range(ell):
        ch_ax, t_ax = mode, ell + mode
        v = np.moveaxis(values, (ch_ax, t_ax), (0, values.ndim - 1))
        lead = v.shape[1:-1]
        flat = v.reshape(m, -1, v.shape[-1])
        out = np.tensordot(q, flat, axes=([1, 3], [0, 2]))   # (p, t, b)
        out = out.transpose(0, 2, 1).reshape((m,) + lead + (n_out,))
        values = np.moveaxis(out, (0, out.ndim - 1), (ch_ax, t_ax))
    return WavepacketTensor(channel=psi.channel, ell=ell, m=m, grid=out_grid, values=values)


# ---------------------------------------------------------------------------
# serialization


def pulse_matrix_to_csv(xi: RaggedPulseMatrix, path: str) -> None:
    header = ["t"]
    for j in range(xi.m):
        for k in range(xi.ells[j]):
            header += [f"re_{j + 1}_{k + 1}", f"im_{j + 1}_{k + 1}"]
    times = xi.grid.times
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for idx, t in enumerate(times):
            row = [f"{t:.16e}"]
            for j in range(xi.m):
                for k in range(xi.ells[j]):
                    z = xi.slabs[j][k, idx]
                    row += [f"{z.real:.16e}", f"{z.imag:.16e}"]
            fh.write(",".join(row) + "\n")


def pulse_matrix_from_csv(path: str, ells: Sequence[int]) -> RaggedPulseMatrix:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=float)
    data = np.atleast_2d(data)
    t = data[:, 0]
    if len(t) < 2:
        raise ConfigError(f"{path}: need at least two samples")
    grid = TimeGrid(float(t[0]), float(t[-1]), len(t))
    expected = 1 + 2 * sum(ells)
    if data.shape[1] != expected:
        raise ConfigError(f"{path}: expected {expected} columns, found {data.shape[1]}")
    slabs = []
    col = 1
    for ell in ells:
        rows = []
        for _ in range(ell):
            rows.append(data[:, col] + 1j * data[:, col + 1])
            col += 2
        slabs.append(np.stack(rows) if rows else np.zeros((0, len(t)), complex))
    return RaggedPulseMatrix(m=len(ells), ells=tuple(ells), slabs=slabs, grid=grid)


_WPT_MAGIC = b"PHFWPT1\n"


def wavepacket_to_file(psi: WavepacketTensor, path: str) -> None:
    """Single-file layout: magic, header length, JSON header, raw samples."""
    header = {
        "channel": psi.channel,
        "ell": psi.ell,
        "m": psi.m,
        "grid": {"t_min": psi.grid.t_min, "t_max": psi.grid.t_max,
                 "n_points": psi.grid.n_points},
        "shape": list(psi.values.shape),
        "dtype": "complex128",
        "order": "C",
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_WPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(psi.values, dtype=np.complex128).tobytes())


def wavepacket_from_file(path: str, caps: Caps = DEFAULT_CAPS) -> WavepacketTensor:
    with open(path, "rb") as fh:
        if fh.read(len(_WPT_MAGIC)) != _WPT_MAGIC:
            raise ConfigError(f"{path}: not a wavepacket tensor file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        raw = fh.read()
    grid = TimeGrid(**header["grid"])
    check_wavepacket_size(header["m"], header["ell"], grid.n_points, caps)
    values = np.frombuffer(raw, dtype=np.complex128).reshape(header["shape"]).copy()
    return WavepacketTensor(channel=header["channel"], ell=header["ell"],
                            m=header["m"], grid=grid, values=values)
