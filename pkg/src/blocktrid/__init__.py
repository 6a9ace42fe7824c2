"""Block-tridiagonal chains: transfer matrices, spectral duality and exponents."""

__version__ = "0.1.0"

from .chain import (
    BlockChain,
    BoundaryParameter,
    TransferMatrix,
    TwistedHamiltonian,
    assemble_hamiltonian,
    chain_from_dict,
    chain_to_dict,
    hamiltonian_matrix,
    load_chain,
    save_chain,
    symplectic_form,
    total_transfer,
    transfer_factors,
)
from .duality import (
    IdentityReport,
    check_complex_hopping_identity,
    check_det_constancy,
    check_duality,
    check_reciprocal_closure,
    check_reciprocity,
    check_symplectic,
    check_tridiagonal_reduction,
    check_unit_circle_gap,
    check_zero_set_duality,
    verify_chain,
)
from .exponents import (
    ExponentSpectrum,
    counting_direct,
    counting_function,
    exponents_direct,
    phase_average_logdet,
    sum_positive_phase_average,
    track_loops,
    winding_number,
)
from .bands import (
    ArcDiagnostics,
    BandStructure,
    arc_diagnostics,
    band_structure,
    critical_g,
    discriminants,
    level_velocity,
    pentadiagonal_demo,
)
from .ensembles import (
    EnsembleSpec,
    generate_chain,
    lyapunov_spectrum,
    souillard_check,
    thouless_check,
)
from .errors import *  # noqa: F401,F403
