"""Local-information time evolution (LITE) for one-dimensional quantum
lattice systems: parallel subsystem dynamics closed by projected recovery
maps, with constrained removal of large-scale quantum information."""

__version__ = "0.1.0"

from .config import RunConfig
from .hamiltonian import HamiltonianSpec, LindbladSpec, mixed_field_ising, xx_dephasing
from .lattice import (
    InfoLattice,
    LatticeLabel,
    LatticeState,
    info_lattice,
    local_information,
    mutual_information,
    reduce_level,
    total_information,
    von_neumann_information,
)
from .minimizer import minimize_site, minimize_window
from .observables import (
    TransportRecord,
    magnetization_bump_initial,
    powerlaw_exponent,
    thermal_bump_initial,
    transport_record,
)
from .recovery import recover_level, recover_to, sqrt_petz, twisted_petz
from .dynamics import (
    NegativityError,
    StepResult,
    StiffnessError,
    info_currents,
    maybe_escalate,
    manage_window,
    rk45_step,
    subsystem_derivative,
)
from .engine import compare_with_oracle, run

__all__ = [
    "HamiltonianSpec",
    "InfoLattice",
    "LatticeLabel",
    "LatticeState",
    "LindbladSpec",
    "NegativityError",
    "RunConfig",
    "StepResult",
    "StiffnessError",
    "TransportRecord",
    "compare_with_oracle",
    "info_currents",
    "info_lattice",
    "local_information",
    "magnetization_bump_initial",
    "manage_window",
    "maybe_escalate",
    "minimize_site",
    "minimize_window",
    "mixed_field_ising",
    "mutual_information",
    "powerlaw_exponent",
    "recover_level",
    "recover_to",
    "reduce_level",
    "rk45_step",
    "run",
    "sqrt_petz",
    "subsystem_derivative",
    "thermal_bump_initial",
    "total_information",
    "transport_record",
    "twisted_petz",
    "von_neumann_information",
    "xx_dephasing",
]
