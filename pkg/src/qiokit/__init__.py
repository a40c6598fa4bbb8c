"""Toolkit for continuously monitored quantum input-output systems.

Simulation of diffusive and counting measurement records, quantum
filtering and trajectory likelihoods, quantum/classical Fisher
information, likelihood- and statistic-based parameter estimation, linear
quantum systems with physical-realizability structure, and black-box
subspace identification.
"""

__version__ = "0.1.0"

from .exceptions import QiokitError, ValidationError
from .families import ParameterFamily
from .operators import (
    DensityOperator,
    QMarkovModel,
    SpectralInfo,
    Superoperator,
    lindblad_generator,
    pure_state_qfi,
    qcrb_trace_bound,
    qfi_matrix,
    sld,
    spectral_info,
    stationary_state,
    zero_mean_inverse,
)
from .trajectories import (
    CountingRecord,
    DiffusiveRecord,
    FilterTrajectory,
    MeasurementRecord,
    simulate_counting,
    simulate_counting_ensemble,
    simulate_homodyne,
    simulate_homodyne_ensemble,
    simulate_reference,
)
from .filtering import ZakaiTrajectory, log_likelihood, log_likelihood_many, run_filter, run_zakai
from .estimation import (
    abc_rejection,
    counting_fisher,
    counting_rate_and_variance,
    mc_classical_fisher,
    mle,
    posterior_grid,
    stat_total_counts,
    stat_two_time_corr,
)
from .markov_qfi import GaugeElement, conditional_qfi, gauge_transform, qfi_rate
from .linear import (
    GaussianInput,
    LinearQSystem,
    QuadraticSpec,
    SymplecticMatrix,
    build_linear_system,
    check_pr1,
    check_pr2,
    kalman_gain,
    minimality_check,
    power_spectrum,
    simulate_innovation_form,
    symplectic_transform,
    transfer_function,
)
from .sysid import (
    PipelineConfig,
    SysIdDataset,
    SysIdResult,
    fpe_order_select,
    pr_projection,
    prbs,
    recover_full_c,
    run_pipeline,
    subspace_id,
    validate_nmse,
)
