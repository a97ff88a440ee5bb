"""Shared quadrature and convolution kernels.

All time integrals use the trapezoidal rule on uniform grids.  Linear
convolutions are evaluated by FFT and then corrected at the two edges of the
overlap interval of every output sample, so the result is the exact trapezoid
of the sampled integrand for each output point.  A direct (non-FFT) evaluation
with identical semantics is provided as the oracle route for dual-path tests.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft

__all__ = [
    "trapz_weights",
    "integrate",
    "conv1",
    "conv1_direct",
    "conv_kernel_batch",
    "conv_matmul",
    "quadrature_conv_matrix",
]


def trapz_weights(n: int, dt: float) -> np.ndarray:
    """Trapezoid weights for ``n`` uniform samples with spacing ``dt``."""
    if n < 2:
        raise ValueError("need at least two samples for trapezoid weights")
    w = np.full(n, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def integrate(values: np.ndarray, dt: float, axis: int = -1) -> np.ndarray:
    """Trapezoid integral along one axis of a sampled array."""
    return np.trapezoid(values, dx=dt, axis=axis)


def _edge_corrections(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Half-sample products at both overlap edges for every output lag.

    ``a`` has shape (..., Na) and ``b`` (..., Nb) with broadcastable leading
    dimensions; returns shape (..., Na+Nb-1).
    """
    na = a.shape[-1]
    nb = b.shape[-1]
    no = na + nb - 1
    lead = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    lo = np.zeros(lead + (no,), dtype=np.result_type(a, b))
    hi = np.zeros_like(lo)
    # lower overlap edge: index 0 of `a` while k < nb, then the tail of `a`
    lo[..., :nb] = a[..., :1] * b
    lo[..., nb:] = a[..., 1:] * b[..., -1:]
    # upper overlap edge: index 0 of `b` while k < na, then the tail of `b`
    hi[..., :na] = a * b[..., :1]
    hi[..., na:] = a[..., -1:] * b[..., 1:]
    return 0.5 * (lo + hi)


def conv1(a: np.ndarray, b: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoid-weighted linear convolution of two sampled functions.

    Supports stacked inputs: shapes (..., Na) and (..., Nb) broadcast over the
    leading dimensions.  Output sample k approximates
    ``integral a(tau) b(t_k - tau) dtau`` where ``t_k`` runs over the summed
    support of the two grids.
    """
    na = a.shape[-1]
    nb = b.shape[-1]
    n = sfft.next_fast_len(na + nb - 1)
    af = sfft.fft(a, n, axis=-1)
    bf = sfft.fft(b, n, axis=-1)
    full = sfft.ifft(af * bf, axis=-1)[..., : na + nb - 1]
    return dt * full - dt * _edge_corrections(a, b)


def conv1_direct(a: np.ndarray, b: np.ndarray, dt: float) -> np.ndarray:
    """Direct-sum evaluation of :func:`conv1` (oracle route, 1-D only)."""
    na, nb = len(a), len(b)
    no = na + nb - 1
    out = np.zeros(no, dtype=complex)
    for k in range(no):
        ilo = max(0, k - nb + 1)
        ihi = min(na - 1, k)
        acc = 0.0 + 0.0j
        for i in range(ilo, ihi + 1):
            w = 1.0
            if i == ilo:
                w -= 0.5
            if i == ihi:
                w -= 0.5
            acc += w * a[i] * b[k - i]
        out[k] = acc * dt
    return out


def conv_kernel_batch(kern: np.ndarray, sig: np.ndarray, dt: float) -> np.ndarray:
    """Convolve a matrix kernel with a batch of vector signals.

    kern has shape (p, r, Nk) and sig (r, B, Ns); the result (p, B, No) is
    ``out[p, b](t) = sum_r integral kern[p, r](t - tau) sig[r, b](tau) dtau``
    with No = Nk + Ns - 1.
    """
    p, r, nk = kern.shape
    r2, nb, ns = sig.shape
    if r2 != r:
        raise ValueError("kernel and signal channel counts differ")
    no = nk + ns - 1
    n = sfft.next_fast_len(no)
    kf = sfft.fft(kern, n, axis=-1)
    sf = sfft.fft(sig, n, axis=-1)
    out = sfft.ifft(np.einsum("prn,rbn->pbn", kf, sf), axis=-1)[..., :no] * dt
    # overlap-edge corrections, summed over the contracted channel index
    lo = np.zeros((p, nb, no), dtype=complex)
    hi = np.zeros((p, nb, no), dtype=complex)
    lo[..., :ns] = np.einsum("pr,rbk->pbk", kern[..., 0], sig)
    lo[..., ns:] = np.einsum("prk,rb->pbk", kern[..., 1:], sig[..., -1])
    hi[..., :nk] = np.einsum("prk,rb->pbk", kern, sig[..., 0])
    hi[..., nk:] = np.einsum("pr,rbk->pbk", kern[..., -1], sig[..., 1:])
    out -= 0.5 * dt * (lo + hi)
    return out


def conv_matmul(a: np.ndarray, b: np.ndarray, dt: float) -> np.ndarray:
    """Convolution of two sampled matrix kernels with matrix products.

    a has shape (Na, p, q), b (Nb, q, s); result (Na+Nb-1, p, s) approximates
    ``integral a(tau) @ b(t - tau) dtau``.
    """
    na = a.shape[0]
    nb = b.shape[0]
    no = na + nb - 1
    n = sfft.next_fast_len(no)
    af = sfft.fft(a, n, axis=0)
    bf = sfft.fft(b, n, axis=0)
    out = sfft.ifft(af @ bf, axis=0)[:no] * dt
    lo = np.zeros_like(out)
    hi = np.zeros_like(out)
    lo[:nb] = a[0] @ b
    lo[nb:] = a[1:] @ b[-1]
    hi[:na] = a @ b[0]
    hi[na:] = a[-1] @ b[1:]
    out -= 0.5 * dt * (lo + hi)
    return out


def quadrature_conv_matrix(kern: np.ndarray, ns: int, dt: float) -> np.ndarray:
    """Dense quadrature matrix Q with (Q @ sig) equal to conv1(kern, sig).

    Built by explicit banding rather than FFT; this is the slow oracle used to
    cross-check the FFT route.  Q has shape (Nk+Ns-1, Ns).
    """
    nk = len(kern)
    no = nk + ns - 1
    q = np.zeros((no, ns), dtype=complex)
    for k in range(no):
        jlo = max(0, k - nk + 1)
        jhi = min(ns - 1, k)
        for j in range(jlo, jhi + 1):
            w = 1.0
            if j == jlo:
                w -= 0.5
            if j == jhi:
                w -= 0.5
            q[k, j] = w * dt * kern[k - j]
    return q
