"""Ground-truth Boltzmann statistics: enumeration, bucket elimination, parallel tempering."""

from .dp import BucketEliminator, WidthExceeded, dp_energy_function, exact_stats_dp
from .elimination import choose_order, induced_width, min_fill_order
from .enumeration import (
    EnumerationCapExceeded,
    all_states,
    boltzmann_table,
    density_of_states,
    exact_sample_enumeration,
    exact_stats_enumeration,
    state_energies,
)
from .pt import pt_stats, thermodynamic_log_z
from .stats import ReferenceStatistics, default_beta_grid, interpolate_reference

__all__ = [
    "BucketEliminator",
    "EnumerationCapExceeded",
    "ReferenceStatistics",
    "WidthExceeded",
    "all_states",
    "boltzmann_table",
    "choose_order",
    "default_beta_grid",
    "density_of_states",
    "dp_energy_function",
    "exact_sample_enumeration",
    "exact_stats_dp",
    "exact_stats_enumeration",
    "induced_width",
    "interpolate_reference",
    "min_fill_order",
    "pt_stats",
    "state_energies",
    "thermodynamic_log_z",
]
