"""Doubled-up state-space models of quantum linear systems.

A device is specified by physical parameters (S, C-, C+, Omega-, Omega+): a
unitary scattering matrix, the coupling of the m field channels to the n
internal oscillator modes (annihilation and creation parts), and the quadratic
Hamiltonian blocks.  Stacking each vector of mode operators with its entrywise
conjugate gives the doubled-up picture in which every system matrix has the
block form ``Delta(U, V) = [[U, V], [V*, U*]]``.

The impulse response splits into a delta part and a smooth part,

    g(t) = delta(t) * Delta(S, 0) + C exp(A t) B        (t >= 0),

and is stored that way: delta coefficients are never sampled.  The smooth
m-by-m blocks (the annihilation->annihilation and annihilation->creation
kernels) are sampled on a uniform grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from ._numerics import conv_matmul
from .config import DEFAULT_TOLERANCES, DEFAULT_GRID_POINTS, HORIZON_FACTOR, Tolerances
from .errors import ConfigError

__all__ = [
    "TimeGrid",
    "PhysicalParams",
    "StateSpace",
    "ImpulseResponse",
    "MatrixKernel",
    "doubled_up",
    "flat_adjoint",
    "build_state_space",
    "is_stable",
    "is_passive",
    "impulse_response",
    "stable_inverse",
    "frequency_response",
    "suggest_grid",
    "convolve_kernels",
    "cavity_params",
    "beamsplitter_params",
    "amplifier_params",
    "params_from_json",
    "params_to_json",
    "impulse_response_to_csv",
]


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid with at least two points."""

    t_min: float
    t_max: float
    n_points: int

    def __post_init__(self) -> None:
        if self.n_points < 2:
            raise ConfigError("grid.n_points: need at least 2 points")
        if not self.t_max > self.t_min:
            raise ConfigError("grid: t_max must exceed t_min")

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / (self.n_points - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.n_points)

    def compatible_dt(self, other: "TimeGrid", rtol: float = 1e-9) -> bool:
        return abs(self.dt - other.dt) <= rtol * max(self.dt, other.dt)


# ---------------------------------------------------------------------------
# doubled-up block algebra


def doubled_up(upper_left: np.ndarray, upper_right: np.ndarray) -> np.ndarray:
    """Assemble Delta(U, V) = [[U, V], [V*, U*]]."""
    u = np.asarray(upper_left, dtype=complex)
    v = np.asarray(upper_right, dtype=complex)
    return np.block([[u, v], [v.conj(), u.conj()]])


def flat_adjoint(x: np.ndarray) -> np.ndarray:
    """The flat involution J_k X^dag J_j for X of shape (2j, 2k)."""
    x = np.asarray(x, dtype=complex)
    jj, kk = x.shape
    if jj % 2 or kk % 2:
        raise ValueError("flat involution needs even dimensions")
    jmat = np.diag(np.concatenate([np.ones(kk // 2), -np.ones(kk // 2)]))
    jmat2 = np.diag(np.concatenate([np.ones(jj // 2), -np.ones(jj // 2)]))
    return jmat @ x.conj().T @ jmat2


def is_doubled_up(x: np.ndarray, tol: float = 1e-10) -> bool:
    """Check the Delta block symmetry of a 2p-by-2q matrix."""
    p, q = x.shape[0] // 2, x.shape[1] // 2
    ok1 = np.allclose(x[p:, q:], x[:p, :q].conj(), atol=tol, rtol=0.0)
    ok2 = np.allclose(x[p:, :q], x[:p, q:].conj(), atol=tol, rtol=0.0)
    return bool(ok1 and ok2)


# ---------------------------------------------------------------------------
# parameter records


def _as_complex(a, shape, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=complex)
    if arr.shape != shape:
        raise ConfigError(f"{name}: expected shape {shape}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class PhysicalParams:
    """Physical parameterization of an m-channel, n-oscillator device.

    The scattering matrix must be unitary; the Hamiltonian blocks satisfy
    OmegaMinus = OmegaMinus^dag and OmegaPlus = OmegaPlus^T.  A static device
    (n = 0) carries empty coupling and Hamiltonian blocks.
    """

    m: int
    n: int
    S: np.ndarray
    Cminus: np.ndarray
    Cplus: np.ndarray
    OmegaMinus: np.ndarray
    OmegaPlus: np.ndarray

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ConfigError("m: channel count must be positive")
        if self.n < 0:
            raise ConfigError("n: oscillator count must be non-negative")
        object.__setattr__(self, "S", _as_complex(self.S, (self.m, self.m), "S"))
        object.__setattr__(self, "Cminus", _as_complex(self.Cminus, (self.m, self.n), "Cminus"))
        object.__setattr__(self, "Cplus", _as_complex(self.Cplus, (self.m, self.n), "Cplus"))
        object.__setattr__(self, "OmegaMinus", _as_complex(self.OmegaMinus, (self.n, self.n), "OmegaMinus"))
        object.__setattr__(self, "OmegaPlus", _as_complex(self.OmegaPlus, (self.n, self.n), "OmegaPlus"))
        self.validate()

    def validate(self, tol: Tolerances = DEFAULT_TOLERANCES) -> None:
        gap = np.abs(self.S @ self.S.conj().T - np.eye(self.m)).max()
        if gap > tol.unitary:
            raise ConfigError(f"S: not unitary (||S S^dag - I|| = {gap:.3e})")
        if self.n:
            if np.abs(self.OmegaMinus - self.OmegaMinus.conj().T).max() > tol.unitary:
                raise ConfigError("OmegaMinus: not Hermitian")
            if np.abs(self.OmegaPlus - self.OmegaPlus.T).max() > tol.unitary:
                raise ConfigError("OmegaPlus: not symmetric")


def cavity_params(kappa: float) -> PhysicalParams:
    """Single-mode cavity with decay rate kappa (passive)."""
    return PhysicalParams(
        m=1, n=1, S=np.eye(1), Cminus=[[np.sqrt(kappa)]], Cplus=np.zeros((1, 1)),
        OmegaMinus=np.zeros((1, 1)), OmegaPlus=np.zeros((1, 1)),
    )


def beamsplitter_params(s: Sequence[Sequence[complex]]) -> PhysicalParams:
    """Static device with scattering matrix ``s`` and no internal modes."""
    s = np.asarray(s, dtype=complex)
    m = s.shape[0]
    z = np.zeros((m, 0))
    return PhysicalParams(m=m, n=0, S=s, Cminus=z, Cplus=z,
                          OmegaMinus=np.zeros((0, 0)), OmegaPlus=np.zeros((0, 0)))


def amplifier_params(kappa: float, epsilon: complex) -> PhysicalParams:
    """Degenerate parametric amplifier: cavity with pump strength epsilon."""
    return PhysicalParams(
        m=1, n=1, S=np.eye(1), Cminus=[[np.sqrt(kappa)]], Cplus=np.zeros((1, 1)),
        OmegaMinus=np.zeros((1, 1)), OmegaPlus=[[epsilon]],
    )


# ---------------------------------------------------------------------------
# state space


@dataclass(frozen=True)
class StateSpace:
    """Doubled-up (A, B, C, D) realization; all four carry Delta symmetry."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    m: int
    n: int
    params: Optional[PhysicalParams] = field(default=None, repr=False)


def build_state_space(p: PhysicalParams, tol: Tolerances = DEFAULT_TOLERANCES) -> StateSpace:
    """Assemble the doubled-up system matrices from physical parameters.

    D = Delta(S, 0), C = Delta(C-, C+), B = -C^flat D and
    A = -C^flat C / 2 - i J Delta(Omega-, Omega+).
    """
    p.validate(tol)
    m, n = p.m, p.n
    d = doubled_up(p.S, np.zeros((m, m)))
    if n == 0:
        empty = np.zeros((0, 0), dtype=complex)
        return StateSpace(A=empty, B=np.zeros((0, 2 * m), dtype=complex),
                          C=np.zeros((2 * m, 0), dtype=complex), D=d, m=m, n=0, params=p)
    c = doubled_up(p.Cminus, p.Cplus)
    cflat = flat_adjoint(c)
    b = -cflat @ d
    jn = np.diag(np.concatenate([np.ones(n), -np.ones(n)]))
    a = -0.5 * cflat @ c - 1j * jn @ doubled_up(p.OmegaMinus, p.OmegaPlus)
    return StateSpace(A=a, B=b, C=c, D=d, m=m, n=n, params=p)


def is_stable(ss: StateSpace, tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    """True when A is Hurwitz; static devices are stable by convention."""
    if ss.n == 0:
        return True
    lam = np.linalg.eigvals(ss.A)
    return bool(lam.real.max() < -tol.hurwitz)


def is_passive(p: PhysicalParams, tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    """True when both the creation coupling and pump blocks vanish."""
    if p.n == 0:
        return True
    return bool(np.abs(p.Cplus).max() <= tol.zero and np.abs(p.OmegaPlus).max() <= tol.zero)


def _ss_passive(ss: StateSpace, tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    if ss.params is not None:
        return is_passive(ss.params, tol)
    if ss.n == 0:
        return True
    cplus = ss.C[: ss.m, ss.n :]
    jn = np.diag(np.concatenate([np.ones(ss.n), -np.ones(ss.n)]))
    omega = 1j * jn @ (ss.A + 0.5 * flat_adjoint(ss.C) @ ss.C)
    return bool(np.abs(cplus).max() <= tol.zero and np.abs(omega[: ss.n, ss.n :]).max() <= tol.zero)


def decay_rate(ss: StateSpace) -> float:
    """Slowest decay rate |Re lambda_max(A)|; inf for static devices."""
    if ss.n == 0:
        return np.inf
    return float(-np.linalg.eigvals(ss.A).real.max())


def suggest_grid(ss: StateSpace, n_points: int = DEFAULT_GRID_POINTS,
                 horizon_factor: float = HORIZON_FACTOR, dt: Optional[float] = None) -> TimeGrid:
    """Causal grid [0, horizon_factor / |Re lambda_max|] for the kernel tail.

    When ``dt`` is given the point count adapts to keep that spacing (rounded
    to cover at least the horizon).
    """
    rate = decay_rate(ss)
    if not np.isfinite(rate) or rate <= 0:
        return TimeGrid(0.0, 1.0, 2)
    horizon = horizon_factor / rate
    if dt is not None:
        n_points = max(2, int(np.ceil(horizon / dt)) + 1)
        horizon = (n_points - 1) * dt
    return TimeGrid(0.0, horizon, n_points)


# ---------------------------------------------------------------------------
# impulse responses


@dataclass(frozen=True)
class MatrixKernel:
    """An m-by-m matrix kernel delta(t) * delta_part + smooth(t) samples."""

    delta_part: np.ndarray           # (m, m)
    smooth: np.ndarray               # (N, m, m)
    grid: TimeGrid

    @property
    def m(self) -> int:
        return self.delta_part.shape[0]

    @property
    def is_static(self) -> bool:
        return self.smooth.size == 0 or not np.abs(self.smooth).max() > 0.0


@dataclass(frozen=True)
class ImpulseResponse:
    """Sampled impulse response split as delta part plus smooth blocks.

    ``smooth_minus`` and ``smooth_plus`` hold the upper m-by-m blocks of the
    smooth kernel; the full doubled-up kernel is Delta of the two.  For causal
    responses the grid starts at 0; the stable inverse lives on the reflected
    grid and is flagged anti-causal.
    """

    delta_part: np.ndarray           # (2m, 2m)
    smooth_minus: np.ndarray         # (N, m, m)
    smooth_plus: np.ndarray          # (N, m, m)
    grid: TimeGrid
    causal: bool = True
    tail_mass: float = 0.0

    @property
    def m(self) -> int:
        return self.delta_part.shape[0] // 2

    @property
    def is_static(self) -> bool:
        if self.smooth_minus.size == 0:
            return True
        return not (np.abs(self.smooth_minus).max() > 0.0 or np.abs(self.smooth_plus).max() > 0.0)

    @property
    def scattering(self) -> np.ndarray:
        return self.delta_part[: self.m, : self.m]

    def smooth_full(self) -> np.ndarray:
        """Full (N, 2m, 2m) doubled-up smooth kernel."""
        top = np.concatenate([self.smooth_minus, self.smooth_plus], axis=2)
        bot = np.concatenate([self.smooth_plus.conj(), self.smooth_minus.conj()], axis=2)
        return np.concatenate([top, bot], axis=1)

    def minus_kernel(self) -> MatrixKernel:
        """The annihilation->annihilation block as a standalone kernel."""
        return MatrixKernel(self.scattering, self.smooth_minus, self.grid)

    def plus_kernel_conj(self) -> MatrixKernel:
        """Entrywise conjugate of the creation block (no delta part)."""
        return MatrixKernel(np.zeros((self.m, self.m), dtype=complex),
                            self.smooth_plus.conj(), self.grid)


def impulse_response(ss: StateSpace, grid: TimeGrid,
                     tol: Tolerances = DEFAULT_TOLERANCES) -> ImpulseResponse:
    """Sample the smooth kernel blocks of a stable system on a causal grid.

    Uses one Pade matrix exponential for exp(A dt) and repeated multiplication
    across the uniform grid.  Raises when the system is unstable or when the
    kernel tail mass ||C exp(A t_max)|| still exceeds ``tol.decay``.
    """
    if not is_stable(ss, tol):
        raise ValueError("impulse_response requires an asymptotically stable system")
    if abs(grid.t_min) > 1e-15:
        raise ConfigError("impulse response grids must start at t = 0")
    m = ss.m
    delta = ss.D.copy()
    npts = grid.n_points
    if ss.n == 0:
        zero = np.zeros((npts, m, m), dtype=complex)
        return ImpulseResponse(delta, zero, zero.copy(), grid, causal=True, tail_mass=0.0)

    e1 = sla.expm(ss.A * grid.dt)
    ctop = ss.C[:m, :]
    samples = np.empty((npts, m, 2 * m), dtype=complex)
    x = ctop.copy()
    for k in range(npts):
        samples[k] = x @ ss.B
        x = x @ e1
    tail = float(np.linalg.norm(x, ord="fro"))
    if tail > tol.decay:
        raise ValueError(
            f"grid too short: kernel tail mass {tail:.3e} exceeds {tol.decay:.1e}"
        )
    return ImpulseResponse(delta, samples[:, :, :m], samples[:, :, m:], grid,
                           causal=True, tail_mass=tail)


def stable_inverse(ir: ImpulseResponse) -> ImpulseResponse:
    """Anti-causal convolution inverse of a stable causal kernel.

    The smooth blocks are the time-reversed adjoint of the forward kernel:
    Delta(g-(-t)^dag, -g+(-t)^T) on the reflected grid, with delta part
    Delta(S^dag, 0).
    """
    if not ir.causal:
        raise ValueError("stable_inverse expects a causal impulse response")
    m = ir.m
    s = ir.scattering
    delta = doubled_up(s.conj().T, np.zeros((m, m)))
    minus = ir.smooth_minus[::-1].conj().transpose(0, 2, 1).copy()
    plus = -ir.smooth_plus[::-1].transpose(0, 2, 1).copy()
    grid = TimeGrid(-ir.grid.t_max, -ir.grid.t_min, ir.grid.n_points)
    return ImpulseResponse(delta, minus, plus, grid, causal=False, tail_mass=ir.tail_mass)


def frequency_response(ss: StateSpace, omegas: Sequence[float]) -> np.ndarray:
    """Transfer function on the imaginary axis, D + C (iw I - A)^-1 B.

    Returns an array of shape (len(omegas), 2m, 2m).  For a Hurwitz A the
    resolvent is regular at every real frequency.
    """
    omegas = np.asarray(omegas, dtype=float)
    out = np.empty((len(omegas), 2 * ss.m, 2 * ss.m), dtype=complex)
    if ss.n == 0:
        out[:] = ss.D
        return out
    eye = np.eye(2 * ss.n)
    for k, w in enumerate(omegas):
        try:
            out[k] = ss.D + ss.C @ np.linalg.solve(1j * w * eye - ss.A, ss.B)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"resolvent singular at omega = {w!r}") from exc
    return out


# ---------------------------------------------------------------------------
# kernel convolution diagnostic


@dataclass(frozen=True)
class SampledMatrixFunction:
    """A sampled (N, p, q) matrix function with uniform spacing from t0."""

    t0: float
    dt: float
    values: np.ndarray


def _embed_jump(acc: np.ndarray, piece: np.ndarray, idx0: int) -> None:
    """Add a compact piece, halving its support-edge samples (mean of limits)."""
    halved = piece.copy()
    halved[0] *= 0.5
    halved[-1] *= 0.5
    acc[idx0: idx0 + len(piece)] += halved


def convolve_kernels(a: ImpulseResponse, b: ImpulseResponse):
    """Convolve two delta-plus-smooth kernels; deltas treated analytically.

    Returns (delta_coeff, SampledMatrixFunction) for the smooth part on the
    summed support.  Interior jump points of the assembled smooth part are
    represented by their mean of one-sided limits.
    """
    if not a.grid.compatible_dt(b.grid):
        raise ValueError("kernel grids have different spacing")
    dt = a.grid.dt
    asm_a = a.smooth_full()
    asm_b = b.smooth_full()
    na, nb = len(asm_a), len(asm_b)
    t0 = a.grid.t_min + b.grid.t_min
    smooth = conv_matmul(asm_a, asm_b, dt)
    # delta(a) * smooth(b): lives on b's support shifted by a's delta at 0
    idx_b = int(round((b.grid.t_min - t0) / dt))
    _embed_jump(smooth, np.einsum("pq,nqs->nps", a.delta_part, asm_b), idx_b)
    idx_a = int(round((a.grid.t_min - t0) / dt))
    _embed_jump(smooth, np.einsum("nps,sq->npq", asm_a, b.delta_part), idx_a)
    delta = a.delta_part @ b.delta_part
    return delta, SampledMatrixFunction(t0=t0, dt=dt, values=smooth)


# ---------------------------------------------------------------------------
# serialization


def _complex_to_obj(z: complex) -> dict:
    return {"re": float(np.real(z)), "im": float(np.imag(z))}


def _matrix_to_obj(mat: np.ndarray) -> list:
    return [[_complex_to_obj(z) for z in row] for row in np.atleast_2d(mat)]


def _obj_to_matrix(obj, shape, name: str) -> np.ndarray:
    if shape[0] == 0 or shape[1] == 0:
        if obj not in (None, []):
            raise ConfigError(f"{name}: expected empty matrix for n = 0")
        return np.zeros(shape, dtype=complex)
    try:
        mat = np.array([[complex(c["re"], c["im"]) for c in row] for row in obj])
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"{name}: complex entries must be {{'re','im'}} objects") from exc
    if mat.shape != shape:
        raise ConfigError(f"{name}: expected shape {shape}, got {mat.shape}")
    return mat


def params_to_json(p: PhysicalParams) -> dict:
    return {
        "m": p.m,
        "n": p.n,
        "S": _matrix_to_obj(p.S),
        "Cminus": _matrix_to_obj(p.Cminus) if p.n else [],
        "Cplus": _matrix_to_obj(p.Cplus) if p.n else [],
        "OmegaMinus": _matrix_to_obj(p.OmegaMinus) if p.n else [],
        "OmegaPlus": _matrix_to_obj(p.OmegaPlus) if p.n else [],
    }


def params_from_json(doc: dict) -> PhysicalParams:
    try:
        m = int(doc["m"])
        n = int(doc["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("system: 'm' and 'n' must be integers") from exc
    return PhysicalParams(
        m=m, n=n,
        S=_obj_to_matrix(doc.get("S"), (m, m), "system.S"),
        Cminus=_obj_to_matrix(doc.get("Cminus"), (m, n), "system.Cminus"),
        Cplus=_obj_to_matrix(doc.get("Cplus"), (m, n), "system.Cplus"),
        OmegaMinus=_obj_to_matrix(doc.get("OmegaMinus"), (n, n), "system.OmegaMinus"),
        OmegaPlus=_obj_to_matrix(doc.get("OmegaPlus"), (n, n), "system.OmegaPlus"),
    )


def impulse_response_to_csv(ir: ImpulseResponse, path: str) -> None:
    """Write smooth samples as CSV (t plus Re/Im per entry); delta to a sidecar."""
    full = ir.smooth_full()
    two_m = full.shape[1]
    header = ["t"]
    for i in range(two_m):
        for j in range(two_m):
            header += [f"re_{i}{j}", f"im_{i}{j}"]
    times = ir.grid.times
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for k, t in enumerate(times):
            row = [f"{t:.16e}"]
            for i in range(two_m):
                for j in range(two_m):
                    row += [f"{full[k, i, j].real:.16e}", f"{full[k, i, j].imag:.16e}"]
            fh.write(",".join(row) + "\n")
    sidecar = {
        "delta_part": _matrix_to_obj(ir.delta_part),
        "grid": {"t_min": ir.grid.t_min, "t_max": ir.grid.t_max, "n_points": ir.grid.n_points},
        "causal": ir.causal,
        "tail_mass": ir.tail_mass,
    }
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
