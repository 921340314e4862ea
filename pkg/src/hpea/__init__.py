"""Simulator and analysis toolkit for Heisenberg-limited interferometric
phase estimation with triphoton probes.

Layers, bottom up:

* fock: sparse creation-operator polynomials, linear networks,
  post-selection and dual-rail qubit extraction;
* circuits: the probabilistic CNOT cascade generating the optimal
  three-photon probe, plus the target states;
* noise: mode mismatch, detector inefficiency and multi-pair emission;
* protocol: the adaptive measurement circuit with classical feedback;
* metrics: Holevo statistics, analytic bounds, estimator calibration and
  the fixed-angle shot-noise-limit search;
* statefile / cli / plots: persistence, command line and figure rendering.
"""

__version__ = "1.0.0"

from .circuits import (
    build_cn,
    build_ncn,
    generate_optimal_state,
    ghz_state,
    optimal_amplitudes,
    optimal_pair_coefficients,
    optimal_state_vector,
    prepare_input,
    qpea_state_vector,
)
from .fock import (
    FockPolynomial,
    LinearNetwork,
    ModeRegistry,
    SelectionPattern,
    apply_network,
    beamsplitter,
    bundle_number_expectation,
    extract_qubit_state,
    post_select,
    to_fock_amplitudes,
)
from .metrics import (
    HolevoStats,
    analytic_pdf,
    calibrate_estimator,
    fidelity,
    hl_bound,
    holevo_deviation_exact,
    holevo_from_runs,
    phase_dependent_deviation,
    purity,
    qpea_bound,
    snl_mu,
    snl_optimize,
    snl_variance,
)
from .noise import (
    NoiseConfig,
    SpdcSpec,
    epsilon_from_counts,
    hom_visibility,
    insert_loss,
    insert_mismatch,
    noisy_probe_state,
    schmidt_rotations,
    spdc_state,
)
from .protocol import (
    OutcomeDistribution,
    ProtocolConfig,
    ProtocolRun,
    bit_convention_check,
    outcome_distribution,
    phase_unitary,
    run_ensemble,
    run_protocol,
)
from .statefile import load_density_matrix, save_density_matrix
