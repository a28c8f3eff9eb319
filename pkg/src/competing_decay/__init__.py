"""Driven atomic ensembles with competing collective and individual decay.

Permutation-invariant master-equation solver, full-space reference, mean-field
theory, linearized squeezing, quantum trajectories and a batch CLI.
"""

__version__ = "0.1.0"

from .params import MeanFieldParams, ModelParams
from .dicke import DickeLadder, collective_operator, degeneracy
from .pi_liouvillian import (
    BlockDensityMatrix,
    MetastablePair,
    SpectralResult,
    build_liouvillian_pi,
    evolve,
    metastable_decomposition,
    mixture_weights,
    spectral_gap,
    steady_state,
    switching_rates,
)
from .meanfield import (
    MeanFieldState,
    bistability_window,
    dicke_steady,
    estimate_pt_point,
    mf_integrate,
    mf_perturbative,
    mf_rhs,
    mf_stability,
    mf_steady_states,
)
from .observables import (
    ObservableSet,
    crss_state,
    fidelity,
    g2_zero,
    magnetization_distribution,
    mixed_state_reference,
    observable_set,
    spin_squeezing_numeric,
)
from .squeezing import xi2_analytic, xi2_large_gamma_limit

__all__ = [
    "BlockDensityMatrix",
    "DickeLadder",
    "MeanFieldParams",
    "MeanFieldState",
    "MetastablePair",
    "ModelParams",
    "ObservableSet",
    "SpectralResult",
    "bistability_window",
    "build_liouvillian_pi",
    "collective_operator",
    "crss_state",
    "degeneracy",
    "dicke_steady",
    "estimate_pt_point",
    "evolve",
    "fidelity",
    "g2_zero",
    "magnetization_distribution",
    "metastable_decomposition",
    "mf_integrate",
    "mf_perturbative",
    "mf_rhs",
    "mf_stability",
    "mf_steady_states",
    "mixed_state_reference",
    "mixture_weights",
    "observable_set",
    "spectral_gap",
    "spin_squeezing_numeric",
    "steady_state",
    "switching_rates",
    "xi2_analytic",
    "xi2_large_gamma_limit",
]
