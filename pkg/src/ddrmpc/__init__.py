"""Data-driven robust MPC synthesis toolkit.

Builds linear state-feedback controllers with guaranteed-cost, stability,
and constraint certificates directly from measured input/state trajectories
(no identified model), for exact data from linear, polytopic, and
sector-bounded Lur'e systems, and verifies every certificate independently
of the solver.
"""

__version__ = "0.1.0"

from .matcore import (
    BlockLayout,
    EigenReport,
    SymMatrix,
    assemble_blocks,
    is_psd,
    schur_complement,
    spectral_radius,
)
from .plants import (
    LtiPlant,
    LurePlant,
    Nonlinearity,
    PolytopicPlant,
    SectorReport,
    interpolate_vertices,
    load_plant,
    save_plant,
    sector_check,
    step_lti,
    step_lure,
)
from .datalab import (
    ConsistentSet,
    Dataset,
    ShiftedData,
    consistency_residual,
    consistent_set,
    load_dataset,
    regressor_rank,
    run_experiment,
    save_dataset,
    shift_split,
    uniform_inputs,
)
from .lmi import (
    ConstraintRows,
    DecisionPoint,
    FinslerPair,
    LmiProblem,
    Weights,
    build_lure,
    build_nominal,
    build_polytopic,
    ellipsoid_contained,
    finsler_check,
    input_box_rows,
    make_constraint_rows,
    psi,
    state_box_rows,
)
from .sdp import (
    ConicProgram,
    Solution,
    SolverSettings,
    check_solution,
    lower,
    solve,
    solve_lmi,
)
from .synthesis import (
    CertificateReport,
    Controller,
    InformativityNotEstablished,
    load_controller,
    recover_gain,
    save_controller,
    synthesize_lure,
    synthesize_nominal,
    synthesize_polytopic,
    verify_certificate,
)
from .simloop import (
    SimResult,
    accumulated_cost,
    check_against_bound,
    simulate,
)
