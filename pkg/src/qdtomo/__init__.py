"""Detector tomography of phase-insensitive photon counters with coherent-state probes."""

from .fock import (
    CountTable,
    PhotonBasisCut,
    ProbeAmplitude,
    ProbeGrid,
    ProbeMatrix,
    QuadratureError,
    TruncationWarning,
    build_probe_matrix,
    mixed_probe_row,
    poisson_weights,
    predict_response,
)
from .models import (
    DiagonalPOVM,
    apd_povm,
    bin_probabilities,
    click_distribution,
    click_table,
    loss_matrix,
    tmd_povm,
)
from .reconstruct import (
    Certificate,
    ConditioningWarning,
    Objective,
    SolverReport,
    default_reg_weight,
    kkt_certificate,
    objective_value,
    project_simplex,
    regularizer_S,
    solve,
)
from .synth import (
    CalibrationInput,
    ExperimentConfig,
    alpha_from_power,
    default_apd_grid,
    default_tmd_grid,
    perturb_amplitudes,
    simulate_counts,
)
from .analysis import (
    WignerGrid,
    fidelity,
    outcome_fidelities,
    povm_distance,
    response_overlay,
    wigner_element,
)
from .kernels import BACKEND

__version__ = "0.1.0"
