"""Steady-state response of quantum linear systems to multi-photon fields."""

from .config import Caps, Tolerances, DEFAULT_CAPS, DEFAULT_TOLERANCES
from .errors import CapExceededError, ConfigError, PhotonflowError
from .lin_sys import (
    ImpulseResponse,
    MatrixKernel,
    PhysicalParams,
    StateSpace,
    TimeGrid,
    amplifier_params,
    beamsplitter_params,
    build_state_space,
    cavity_params,
    frequency_response,
    impulse_response,
    is_passive,
    is_stable,
    stable_inverse,
    suggest_grid,
)
from .tensor_alg import (
    CoreTensor,
    PulseTensor3,
    RaggedPulseMatrix,
    WavepacketTensor,
    circledast,
    lift,
    mode1_product,
    multimode_convolution,
    permanent,
    permanent_naive,
)
from .photon_states import (
    CovarianceFunction,
    FactorizableState,
    UnfactorizableState,
    gaussian_pulse,
    input_covariance,
    input_intensity,
    lemma_nl_check,
    make_factorizable,
    make_unfactorizable,
)
from .response import (
    GeneralPhotonGaussianState,
    PhotonGaussianState,
    output_covariance,
    output_intensity,
    output_state_active_unfactorizable,
    output_state_factorizable,
    output_state_passive_unfactorizable,
    project_onto_fock,
    spectral_transfer,
)
from . import fock_oracle

__version__ = "0.1.0"
