use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid_model::{GridCase, PhasorSeries};
use crate::rng::{complex_normal, seeded};
use crate::spectral::{build_generator_gso, build_gso, GeneratorGso, SpectralOperator};

use super::dynamics::{
    internal_voltages, simulate_generators, simulate_loads, synthesize_voltages, GeneratorDynamics, LoadDynamics,
};

/// Knobs of a full generative-model run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub frames: usize,
    pub rate_hz: f64,
    pub chi: f64,
    /// Std of the per-frequency generator innovation.
    pub gen_noise: f64,
    /// Std of the random imaginary drive per reduced frequency.
    pub mech_input_scale: f64,
    pub load_b1: f64,
    pub load_b2: f64,
    /// Load innovation std relative to the mean current modulus.
    pub load_noise: f64,
    /// Std of the additive measurement noise on voltages.
    pub meas_noise: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            frames: 300,
            rate_hz: 30.0,
            chi: 0.1,
            gen_noise: 0.01,
            mech_input_scale: 0.0,
            load_b1: 1.5,
            load_b2: -0.6,
            load_noise: 0.01,
            meas_noise: 1e-4,
        }
    }
}

/// Every series and operator of one simulated run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub gso: SpectralOperator,
    pub generator: GeneratorGso,
    pub gen_dynamics: GeneratorDynamics,
    pub load_dynamics: LoadDynamics,
    pub x: PhasorSeries,
    pub e: PhasorSeries,
    pub loads: PhasorSeries,
    pub v: PhasorSeries,
}

/// Default load model: the quasi-static admittance drawing current at a
/// flat 1 p.u. profile, `mean = -y_l`.
pub fn default_load_dynamics(case: &GridCase, cfg: &SimulationConfig) -> LoadDynamics {
    let mean: Vec<c64> = case.load_admittance().iter().map(|y| -y).collect();
    let noise = mean.iter().map(|m| cfg.load_noise * m.norm()).collect();
    LoadDynamics::uniform(mean, c64::new(cfg.load_b1, 0.0), c64::new(cfg.load_b2, 0.0), noise)
}

/// Runs generator, load and voltage synthesis from their steady states.
/// The sub-streams use seeds derived from `seed`.
pub fn simulate_scenario(case: &GridCase, cfg: &SimulationConfig, seed: u64) -> Result<Scenario> {
    let gso = build_gso(case)?;
    let generator = build_generator_gso(case)?;
    let red = &generator.op;
    let mut rng = seeded(seed);
    let mech: Vec<c64> = (0..red.dim())
        .map(|_| c64::new(0.0, complex_normal(&mut rng, cfg.mech_input_scale * std::f64::consts::SQRT_2).re))
        .collect();
    let gen_dynamics = GeneratorDynamics::swing(red, cfg.chi, cfg.gen_noise, mech)?;
    let x_ss = red.inverse_gft(&gen_dynamics.steady_state())?;
    let gen_ids: Vec<u64> = case.generator_indices().iter().map(|&g| case.buses()[g].id).collect();
    let load_ids: Vec<u64> = case.load_indices().iter().map(|&l| case.buses()[l].id).collect();

    let x = simulate_generators(&gen_dynamics, red, &x_ss, &x_ss, cfg.frames, seed.wrapping_add(1))?
        .with_bus_ids(gen_ids)?
        .with_rate(cfg.rate_hz)?;
    let e = internal_voltages(&x, &case.gen_mass())?;
    let load_dynamics = default_load_dynamics(case, cfg);
    let mean = load_dynamics.mean_current.clone();
    let loads = simulate_loads(&load_dynamics, &mean, &mean, cfg.frames, seed.wrapping_add(2))?
        .with_bus_ids(load_ids)?
        .with_rate(cfg.rate_hz)?;
    let v = synthesize_voltages(&gso, case, &e, &loads, cfg.meas_noise, seed.wrapping_add(3))?;
    Ok(Scenario {
        gso,
        generator,
        gen_dynamics,
        load_dynamics,
        x,
        e,
        loads,
        v,
    })
}
