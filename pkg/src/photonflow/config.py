"""Numerical tolerances and size caps, overridable per call."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    """Default tolerances for validation and self-checks."""

    unitary: float = 1e-10      # ||S S^dag - I||
    zero: float = 1e-12         # passivity / zero-block tests
    hurwitz: float = 1e-10      # stability margin on Re(lambda)
    decay: float = 1e-8         # allowed kernel tail mass at the grid end
    conv: float = 1e-6          # dual-path convolution agreement (relative L2)
    herm: float = 1e-10         # partial Hermitianity of core tensors
    norm: float = 1e-12         # smallest acceptable state normalization
    basis_gram: float = 1e-8    # orthonormality of projection mode bases
    expand: float = 1e-8        # relative residual when expanding in a basis

    def with_overrides(self, **kwargs: float) -> "Tolerances":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class Caps:
    """Hard size limits for combinatorial and tensor workloads."""

    permanent_order: int = 12          # largest matrix fed to Ryser's formula
    wavepacket_order: int = 3          # largest photon count per channel tensor
    wavepacket_entries: int = 2**24    # largest dense wavepacket array
    fock_total: int = 24               # largest total photon number in the oracle

    def with_overrides(self, **kwargs: int) -> "Caps":
        return replace(self, **kwargs)


DEFAULT_TOLERANCES = Tolerances()
DEFAULT_CAPS = Caps()

# Default horizon used when building impulse-response grids: the kernel is
# sampled on [0, HORIZON_DECADES / |Re lambda_max(A)|].
HORIZON_FACTOR = 20.0
DEFAULT_GRID_POINTS = 1024
