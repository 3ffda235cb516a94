//! Discretisation and minimisation of the vector Ginzburg-Landau functionals
//! over pinned lattice fields on the tube-excised domain.

mod diag_scratch;
mod energy;
mod grid;
mod minimize;
mod potential;
pub(crate) mod recovery;
mod state;

pub use energy::{
    dual_energy_aligned, energy_density, energy_gradient, node_densities, total_energy,
    total_energy_sup, EnergyParams, DEFAULT_P_MAX,
};
pub use grid::{build_grid, GridSpec, NodeClass};
pub use minimize::{minimize, EpsTrace, MinimizeOptions, MinimizeTrace};
pub use potential::Potential;
pub use recovery::{random_init, recovery_init, star_network};
pub use state::FieldState;
