"""Vacuum-induced state mixing in hydrogen near structured electromagnetic environments.

The package builds the master-equation hierarchy for a hydrogen atom coupled
to a structured vacuum, from the Bloch-Redfield tensor down to the effective
non-Hermitian Hamiltonian of one Bohr level. An exact atom + damped-mode
model serves as the reference for validation.
"""

__version__ = "0.1.0"

from .atom import (  # noqa: E402
    Basis,
    DipoleTable,
    QuantumState,
    build_dipole_table,
    enumerate_basis,
    fine_structure_energy,
    parse_state_label,
    radial_integral,
)
from .bath import (  # noqa: E402
    FlatModel,
    LorentzianModel,
    SpectralModel,
    TabulatedModel,
    gamma,
    lambda_shift,
    read_spectral_file,
    spectral_density_from_green,
)
from .dynamics import (  # noqa: E402
    EffectiveGenerator,
    OracleMode,
    OracleModel,
    PropagationJob,
    build_oracle,
    compare_runs,
    propagate,
)
from .effective import (  # noqa: E402
    EffectiveBlock,
    block_decompose,
    dark_state_certificate,
    eigenanalyze,
    participation_ratio,
    project_effective,
    sweep_and_track,
)
from .master_eq import (  # noqa: E402
    BRTensor,
    GeneratorSet,
    SignConditionError,
    build_br_tensor,
    full_secularize,
    geometric_mean_lindblad,
    lindblad_rhs,
    partial_secularize,
)
