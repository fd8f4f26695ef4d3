use std::path::Path;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::grid_model::{GridCase, PhasorKind, PhasorSeries};
use crate::spectral::{build_generator_gso, build_gso, SpectralOperator};
use crate::synthesis::{fit_ar2_loads, fit_gfar2, generator_state, FitOptions, GeneratorDynamics, LoadDynamics, MagnitudeAr, PolyCoeffs};

/// Everything the encoder and decoder share besides the stream: the grid,
/// its GSO and reduced generator GSO, and the generator and load dynamics.
#[derive(Debug, Clone)]
pub struct CodecModel {
    pub(crate) case: GridCase,
    pub(crate) gso: SpectralOperator,
    pub(crate) red: SpectralOperator,
    pub(crate) masses: Vec<f64>,
    pub(crate) y_g: Vec<c64>,
    pub(crate) gens: Vec<usize>,
    pub(crate) loads: Vec<usize>,
    pub(crate) gen_dynamics: GeneratorDynamics,
    pub(crate) load_dynamics: LoadDynamics,
}

impl CodecModel {
    pub fn new(case: GridCase, gen_dynamics: GeneratorDynamics, load_dynamics: LoadDynamics) -> Result<Self> {
        let gso = build_gso(&case)?;
        let red = build_generator_gso(&case)?.op;
        let gens = case.generator_indices();
        let loads = case.load_indices();
        if gen_dynamics.dim() != gens.len() {
            return Err(GspError::Dimension {
                expected: gens.len(),
                got: gen_dynamics.dim(),
            });
        }
        if load_dynamics.dim() != loads.len() {
            return Err(GspError::Dimension {
                expected: loads.len(),
                got: load_dynamics.dim(),
            });
        }
        Ok(CodecModel {
            masses: case.gen_mass(),
            y_g: case.gen_admittance(),
            gens,
            loads,
            case,
            gso,
            red,
            gen_dynamics,
            load_dynamics,
        })
    }

    /// Fits both dynamics to a voltage series by inverting the synthesis
    /// relations frame by frame.
    pub fn fit(case: GridCase, v: &PhasorSeries, opts: &FitOptions) -> Result<Self> {
        let gso = build_gso(&case)?;
        let red = build_generator_gso(&case)?.op;
        let (x, loads) = derive_states(&case, &gso, v)?;
        let gen_dynamics = fit_gfar2(&x, &red, opts)?;
        let load_dynamics = fit_ar2_loads(&loads)?;
        CodecModel::new(case, gen_dynamics, load_dynamics)
    }

    pub fn case(&self) -> &GridCase {
        &self.case
    }

    pub fn gso(&self) -> &SpectralOperator {
        &self.gso
    }

    pub fn reduced(&self) -> &SpectralOperator {
        &self.red
    }

    pub fn gen_dynamics(&self) -> &GeneratorDynamics {
        &self.gen_dynamics
    }

    pub fn load_dynamics(&self) -> &LoadDynamics {
        &self.load_dynamics
    }

    pub fn dynamics_json(&self) -> String {
        let file = DynamicsFile::from_model(self);
        serde_json::to_string_pretty(&file).expect("dynamics serialize")
    }

    pub fn from_dynamics_json(case: GridCase, text: &str) -> Result<Self> {
        let file: DynamicsFile = serde_json::from_str(text).map_err(|e| GspError::Parse(format!("codec model: {e}")))?;
        let (g, l) = file.into_dynamics()?;
        CodecModel::new(case, g, l)
    }

    pub fn save_dynamics(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.dynamics_json()).map_err(|e| GspError::io(path, e))
    }

    pub fn load_dynamics_file(case: GridCase, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GspError::io(path, e))?;
        CodecModel::from_dynamics_json(case, &text)
    }
}

/// Generator states `x_t` and load currents `i_t` consistent with `v_t`:
/// `e = [S v]_G / y_g`, `x = diag(m)^{1/2} ln e`, `i = [S v]_L`.
pub fn derive_states(case: &GridCase, gso: &SpectralOperator, v: &PhasorSeries) -> Result<(PhasorSeries, PhasorSeries)> {
    if v.n_buses() != case.n_buses() {
        return Err(GspError::Dimension {
            expected: case.n_buses(),
            got: v.n_buses(),
        });
    }
    let gens = case.generator_indices();
    let loads = case.load_indices();
    let y_g = case.gen_admittance();
    let mut e = Vec::with_capacity(v.len() * gens.len());
    let mut il = Vec::with_capacity(v.len() * loads.len());
    for f in v.frames() {
        let s = gso.shift(f)?;
        e.extend(gens.iter().zip(&y_g).map(|(&g, y)| s[g] / y));
        il.extend(loads.iter().map(|&l| s[l]));
    }
    let ids = case.bus_ids();
    let gen_ids = gens.iter().map(|&g| ids[g]).collect();
    let load_ids = loads.iter().map(|&l| ids[l]).collect();
    let e = PhasorSeries::new(e, gen_ids, v.rate_hz(), PhasorKind::InternalVoltage)?;
    let x = generator_state(&e, &case.gen_mass())?;
    let il = PhasorSeries::new(il, load_ids, v.rate_hz(), PhasorKind::Current)?;
    Ok((x, il))
}

type Pair = [f64; 2];

fn pairs(v: &[c64]) -> Vec<Pair> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn complexes(v: &[Pair]) -> Vec<c64> {
    v.iter().map(|p| c64::new(p[0], p[1])).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorFile {
    a1: Vec<Pair>,
    a2: Vec<Pair>,
    chi: f64,
    #[serde(default)]
    poly: Option<PolyCoeffs>,
    noise_scale: Vec<f64>,
    mech_input: Vec<Pair>,
    #[serde(default)]
    magnitude: Option<MagnitudeAr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadFile {
    b1: Vec<Pair>,
    b2: Vec<Pair>,
    noise_scale: Vec<f64>,
    mean_current: Vec<Pair>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsFile {
    generators: GeneratorFile,
    loads: LoadFile,
}

impl DynamicsFile {
    fn from_model(m: &CodecModel) -> Self {
        let g = &m.gen_dynamics;
        let l = &m.load_dynamics;
        DynamicsFile {
            generators: GeneratorFile {
                a1: pairs(&g.a1),
                a2: pairs(&g.a2),
                chi: g.chi,
                poly: g.poly.clone(),
                noise_scale: g.noise_scale.clone(),
                mech_input: pairs(&g.mech_input),
                magnitude: g.magnitude.clone(),
            },
            loads: LoadFile {
                b1: pairs(&l.b1),
                b2: pairs(&l.b2),
                noise_scale: l.noise_scale.clone(),
                mean_current: pairs(&l.mean_current),
            },
        }
    }

    fn into_dynamics(self) -> Result<(GeneratorDynamics, LoadDynamics)> {
        let g = self.generators;
        let n = g.a1.len();
        if g.a2.len() != n || g.noise_scale.len() != n || g.mech_input.len() != n {
            return Err(GspError::invalid("codec model", "generator coefficient vectors differ in length"));
        }
        let l = self.loads;
        let nl = l.b1.len();
        if l.b2.len() != nl || l.noise_scale.len() != nl || l.mean_current.len() != nl {
            return Err(GspError::invalid("codec model", "load coefficient vectors differ in length"));
        }
        Ok((
            GeneratorDynamics {
                a1: complexes(&g.a1),
                a2: complexes(&g.a2),
                chi: g.chi,
                poly: g.poly,
                noise_scale: g.noise_scale,
                mech_input: complexes(&g.mech_input),
                magnitude: g.magnitude,
            },
            LoadDynamics {
                b1: complexes(&l.b1),
                b2: complexes(&l.b2),
                noise_scale: l.noise_scale,
                mean_current: complexes(&l.mean_current),
            },
        ))
    }
}
