"""unileak: step-local synthesis of driving fields realizing register
unitaries on a multilevel system without leakage.

The package is organized as a small numpy library:

* :mod:`unileak.kernel` -- dense complex linear algebra and FFT primitives
* :mod:`unileak.model` -- level schemes, dipole couplings, config loading
* :mod:`unileak.dynamics` -- rotating-frame propagation and field replay
* :mod:`unileak.controller` -- the feedback law and closed-loop synthesis
* :mod:`unileak.analysis` -- metrics, targets, spectral diagnostics
* :mod:`unileak.cli` -- the ``unileak`` command-line tool
"""

from .analysis import (
    SpectrumReport,
    Trajectory,
    fidelity,
    fourier_target,
    log10_infidelity,
    objective,
    register_population,
    snapshot_export,
    spectrum_report,
)
from .controller import (
    ControlParams,
    ControllerQuantities,
    Envelope,
    constraint_coupling,
    controller_quantities,
    field_law,
    objective_coupling,
    seed_rotation,
    synthesize,
)
from .dynamics import (
    Propagator,
    coupled_gap_max,
    default_time_step,
    interaction_dipole,
    interaction_hamiltonian,
    replay,
    step,
)
from .errors import ConfigError, ContractError, NumericsError, StructureError, UnileakError
from .kernel import adjoint, expm_unitary, fft_amplitude, matmul, trace
from .model import (
    LadderSpec,
    SystemModel,
    build_ladder,
    default_config_path,
    load_model,
    load_model_file,
    register_projector,
    transition_table,
)

__version__ = "0.1.0"
