//! Generative model of voltage phasors: GF-AR(2) generator dynamics on the
//! Kron-reduced network, AR(2) load currents, and synthesis through the
//! inverse GSO. Also fits the model to data and builds benchmark grids.

mod dynamics;
mod fit;
mod grid;
mod scenario;
mod spectrum;

pub use dynamics::{
    ar2_is_stable, ar2_roots, excitation, generator_currents, generator_state, internal_voltages,
    simulate_generators, simulate_loads, synthesize_voltages, GeneratorDynamics, LoadDynamics, MagnitudeAr,
    PolyCoeffs,
};
pub use fit::{fit_ar2_loads, fit_gfar2, poly_fit, FitOptions};
pub use grid::{generate_synthetic_grid, SyntheticGrid, SyntheticGridConfig};
pub use scenario::{default_load_dynamics, simulate_scenario, Scenario, SimulationConfig};
pub use spectrum::joint_spectrum;
