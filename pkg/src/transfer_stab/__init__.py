"""Data-based transfer stabilization of discrete-time linear systems.

Scarce target data and a source system (known, or described by abundant
noisy data) define two quadratic-matrix-inequality sets; a state-feedback
gain that stabilizes every system in their intersection is found from an
LMI solved by the bundled interior-point solver.
"""

from .data import (
    DisturbanceBound,
    LinearSystem,
    TrajectoryData,
    check_full_row_rank,
    discretize_zoh,
    energy_bound_from_amplitude,
    load_data,
    make_random_inputs,
    save_data,
    simulate,
)
from .sdp import LmiBlock, SdpProblem, SdpSolution, Status, residuals, solve
from .sets import (
    CenteredQmi,
    Qmi,
    contains,
    epsilon_ball,
    is_compact,
    lyapunov_qmi,
    outer_ball,
    qmi_from_data,
    recenter,
)
from .synthesis import (
    InconclusiveError,
    InfeasibleError,
    NumericalFailureError,
    RegularityReport,
    SynthesisOptions,
    SynthesisResult,
    build_lmi,
    check_regularity,
    synthesize,
)
from .verify import (
    SampleReport,
    SLemmaInstance,
    closed_loop_sweep,
    regularity_instance_gen,
    sample_intersection,
    slemma_check_I,
    slemma_check_III,
)

__version__ = "0.1.0"
