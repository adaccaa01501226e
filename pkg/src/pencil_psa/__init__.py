"""Matrix-pencil small-signal analysis of partitioned DAE integration schemes."""

from . import fixtures
from .deformation import (
    AccuracyResult,
    DeformationReport,
    MarginResult,
    ModePairing,
    damping_deformation,
    discrete_spectrum,
    match_modes,
    max_step_for_accuracy,
    reference_spectrum,
    relative_error,
    stability_margin,
    sweep,
)
from .errors import *  # noqa: F401,F403
from .model import (
    DaeModel,
    Equilibrium,
    SmallSignalModel,
    find_equilibrium,
    linearize,
    load_model,
    save_model,
    state_matrix,
)
from .pencils import (
    DelayPencil,
    Pencil,
    PcScheme,
    adams_companion,
    compute_cr,
    hm_step_map,
    pencil_dae,
    pencil_delay,
    pencil_pc_extrapolation,
    pencil_pc_perfect,
    reduce_to_standard,
    scheme_pencil,
)
from .simulator import (
    SimConfig,
    Trajectory,
    fitted_amplification,
    simulate,
    simulate_adams_pc,
    simulate_fem,
    simulate_psa_hm,
    simulate_simultaneous_tm,
    solve_algebraic,
)
from .spectra import (
    ModeSummary,
    Spectrum,
    damping_frequency,
    eig_dense,
    eig_generalized,
    map_z_to_s,
    pencil_spectrum,
    solve_delay_eigs,
    stiffness_ratio,
    to_s_plane,
)

__version__ = "0.1.0"
