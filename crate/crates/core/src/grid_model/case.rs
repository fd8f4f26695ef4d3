use std::collections::{HashMap, HashSet};
use std::path::Path;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::linalg::ZERO;

/// Dynamic parameters of a generator bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorData {
    /// Transient admittance between the internal source and the bus.
    pub admittance: c64,
    pub mass: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BusRole {
    Generator(GeneratorData),
    /// Quasi-static load admittance.
    Load { admittance: c64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bus {
    pub id: u64,
    pub shunt: c64,
    pub role: BusRole,
}

impl Bus {
    pub fn is_generator(&self) -> bool {
        matches!(self.role, BusRole::Generator(_))
    }
}

/// A branch between two buses, stored by bus position (file order).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub admittance: c64,
}

/// Static description of a grid: topology, admittances, generator inertia.
///
/// Bus order is file order; every matrix built from a case uses it.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCase {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    nominal_freq_hz: f64,
}

fn finite(z: c64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

impl GridCase {
    /// Builds a validated case. Connectivity is checked but only warned on.
    pub fn new(buses: Vec<Bus>, branches: Vec<Branch>, nominal_freq_hz: f64) -> Result<Self> {
        if buses.is_empty() {
            return Err(GspError::invalid("buses", "case has no buses"));
        }
        if !(nominal_freq_hz.is_finite() && nominal_freq_hz > 0.0) {
            return Err(GspError::invalid("f0_hz", format!("must be positive, got {nominal_freq_hz}")));
        }
        let mut seen = HashSet::new();
        for bus in &buses {
            if !seen.insert(bus.id) {
                return Err(GspError::invalid("buses", format!("duplicate bus id {}", bus.id)));
            }
            if !finite(bus.shunt) {
                return Err(GspError::invalid(format!("bus {}.shunt", bus.id), "non-finite value"));
            }
            match bus.role {
                BusRole::Generator(g) => {
                    if !finite(g.admittance) {
                        return Err(GspError::invalid(format!("bus {}.gen.y_g", bus.id), "non-finite value"));
                    }
                    if !(g.mass.is_finite() && g.mass > 0.0) {
                        return Err(GspError::invalid(
                            format!("bus {}.gen.mass", bus.id),
                            format!("must be strictly positive, got {}", g.mass),
                        ));
                    }
                    if !(g.damping.is_finite() && g.damping >= 0.0) {
                        return Err(GspError::invalid(
                            format!("bus {}.gen.damping", bus.id),
                            format!("must be nonnegative, got {}", g.damping),
                        ));
                    }
                }
                BusRole::Load { admittance } => {
                    if !finite(admittance) {
                        return Err(GspError::invalid(format!("bus {}.y_load", bus.id), "non-finite value"));
                    }
                }
            }
        }
        let n = buses.len();
        let mut pairs = HashSet::new();
        for br in &branches {
            if br.from >= n || br.to >= n {
                return Err(GspError::invalid("branches", format!("endpoint out of range ({}, {})", br.from, br.to)));
            }
            if br.from == br.to {
                return Err(GspError::invalid(
                    "branches",
                    format!("self-loop at bus {}", buses[br.from].id),
                ));
            }
            if !finite(br.admittance) {
                return Err(GspError::invalid("branches", "non-finite admittance"));
            }
            let key = (br.from.min(br.to), br.from.max(br.to));
            if !pairs.insert(key) {
                return Err(GspError::invalid(
                    "branches",
                    format!("duplicate branch ({}, {})", buses[key.0].id, buses[key.1].id),
                ));
            }
        }
        let case = GridCase {
            buses,
            branches,
            nominal_freq_hz,
        };
        if !case.is_connected() {
            log::warn!("grid graph is disconnected");
        }
        Ok(case)
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn nominal_freq_hz(&self) -> f64 {
        self.nominal_freq_hz
    }

    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.nominal_freq_hz
    }

    pub fn bus_ids(&self) -> Vec<u64> {
        self.buses.iter().map(|b| b.id).collect()
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn generator_indices(&self) -> Vec<usize> {
        partition_indices(self).0
    }

    pub fn load_indices(&self) -> Vec<usize> {
        partition_indices(self).1
    }

    pub fn n_generators(&self) -> usize {
        self.buses.iter().filter(|b| b.is_generator()).count()
    }

    fn generators(&self) -> impl Iterator<Item = &GeneratorData> {
        self.buses.iter().filter_map(|b| match &b.role {
            BusRole::Generator(g) => Some(g),
            BusRole::Load { .. } => None,
        })
    }

    /// `y_g` over generator buses.
    pub fn gen_admittance(&self) -> Vec<c64> {
        self.generators().map(|g| g.admittance).collect()
    }

    pub fn gen_mass(&self) -> Vec<f64> {
        self.generators().map(|g| g.mass).collect()
    }

    pub fn gen_damping(&self) -> Vec<f64> {
        self.generators().map(|g| g.damping).collect()
    }

    pub fn shunt_gen(&self) -> Vec<c64> {
        self.buses.iter().filter(|b| b.is_generator()).map(|b| b.shunt).collect()
    }

    pub fn shunt_load(&self) -> Vec<c64> {
        self.buses.iter().filter(|b| !b.is_generator()).map(|b| b.shunt).collect()
    }

    /// Quasi-static `y_l` over load buses.
    pub fn load_admittance(&self) -> Vec<c64> {
        self.buses
            .iter()
            .filter_map(|b| match b.role {
                BusRole::Load { admittance } => Some(admittance),
                BusRole::Generator(_) => None,
            })
            .collect()
    }

    /// System admittance matrix `Y`: the complex-weighted graph Laplacian.
    pub fn admittance_matrix(&self) -> Mat<c64> {
        let n = self.n_buses();
        let mut y = Mat::<c64>::zeros(n, n);
        for br in &self.branches {
            let (i, j, w) = (br.from, br.to, br.admittance);
            y[(i, i)] += w;
            y[(j, j)] += w;
            y[(i, j)] -= w;
            y[(j, i)] -= w;
        }
        y
    }

    /// `Y + diag(shunts)`: the matrix of the network Ohm's law.
    pub fn network_matrix(&self) -> Mat<c64> {
        let mut y = self.admittance_matrix();
        for (i, b) in self.buses.iter().enumerate() {
            y[(i, i)] += b.shunt;
        }
        y
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_buses()];
        for br in &self.branches {
            adj[br.from].push(br.to);
            adj[br.to].push(br.from);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        let adj = self.neighbors();
        let mut seen = vec![false; self.n_buses()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n_buses()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: CaseFile = serde_json::from_str(text).map_err(|e| GspError::Parse(e.to_string()))?;
        file.into_case()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&CaseFile::from_case(self)).expect("case serialization")
    }
}

/// Generator and load bus positions, each in file order.
pub fn partition_indices(case: &GridCase) -> (Vec<usize>, Vec<usize>) {
    let mut gens = Vec::new();
    let mut loads = Vec::new();
    for (i, b) in case.buses.iter().enumerate() {
        if b.is_generator() {
            gens.push(i);
        } else {
            loads.push(i);
        }
    }
    (gens, loads)
}

pub fn load_case(path: impl AsRef<Path>) -> Result<GridCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GspError::io(path, e))?;
    GridCase::from_json_str(&text)
}

pub fn save_case(case: &GridCase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, case.to_json_string() + "\n").map_err(|e| GspError::io(path, e))
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
struct ComplexRecord {
    re: f64,
    im: f64,
}

impl From<ComplexRecord> for c64 {
    fn from(r: ComplexRecord) -> c64 {
        c64::new(r.re, r.im)
    }
}

impl From<c64> for ComplexRecord {
    fn from(z: c64) -> Self {
        ComplexRecord { re: z.re, im: z.im }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BusType {
    Gen,
    Load,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenRecord {
    y_g: ComplexRecord,
    mass: f64,
    damping: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusRecord {
    id: u64,
    #[serde(rename = "type")]
    kind: BusType,
    #[serde(default)]
    shunt: ComplexRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gen: Option<GenRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_load: Option<ComplexRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchRecord {
    from: u64,
    to: u64,
    y: ComplexRecord,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    buses: Vec<BusRecord>,
    branches: Vec<BranchRecord>,
    f0_hz: f64,
}

impl CaseFile {
    fn into_case(self) -> Result<GridCase> {
        let mut buses = Vec::with_capacity(self.buses.len());
        let mut index: HashMap<u64, usize> = HashMap::new();
        for (pos, rec) in self.buses.into_iter().enumerate() {
            let role = match rec.kind {
                BusType::Gen => {
                    let g = rec
                        .gen
                        .ok_or_else(|| GspError::invalid(format!("bus {}.gen", rec.id), "generator bus without gen block"))?;
                    if rec.y_load.is_some() {
                        return Err(GspError::invalid(format!("bus {}", rec.id), "generator bus with y_load"));
                    }
                    BusRole::Generator(GeneratorData {
                        admittance: g.y_g.into(),
                        mass: g.mass,
                        damping: g.damping,
                    })
                }
                BusType::Load => {
                    if rec.gen.is_some() {
                        return Err(GspError::invalid(format!("bus {}", rec.id), "load bus with gen block"));
                    }
                    let y = rec
                        .y_load
                        .ok_or_else(|| GspError::invalid(format!("bus {}.y_load", rec.id), "load bus without y_load"))?;
                    BusRole::Load { admittance: y.into() }
                }
            };
            index.entry(rec.id).or_insert(pos);
            buses.push(Bus {
                id: rec.id,
                shunt: rec.shunt.into(),
                role,
            });
        }
        let mut branches = Vec::with_capacity(self.branches.len());
        for rec in self.branches {
            let lookup = |id: u64| {
                index
                    .get(&id)
                    .copied()
                    .ok_or_else(|| GspError::invalid("branches", format!("unknown bus id {id}")))
            };
            branches.push(Branch {
                from: lookup(rec.from)?,
                to: lookup(rec.to)?,
                admittance: rec.y.into(),
            });
        }
        GridCase::new(buses, branches, self.f0_hz)
    }

    fn from_case(case: &GridCase) -> Self {
        let buses = case
            .buses
            .iter()
            .map(|b| match b.role {
                BusRole::Generator(g) => BusRecord {
                    id: b.id,
                    kind: BusType::Gen,
                    shunt: b.shunt.into(),
                    gen: Some(GenRecord {
                        y_g: g.admittance.into(),
                        mass: g.mass,
                        damping: g.damping,
                    }),
                    y_load: None,
                },
                BusRole::Load { admittance } => BusRecord {
                    id: b.id,
                    kind: BusType::Load,
                    shunt: b.shunt.into(),
                    gen: None,
                    y_load: Some(admittance.into()),
                },
            })
            .collect();
        let branches = case
            .branches
            .iter()
            .map(|br| BranchRecord {
                from: case.buses[br.from].id,
                to: case.buses[br.to].id,
                y: br.admittance.into(),
            })
            .collect();
        CaseFile {
            buses,
            branches,
            f0_hz: case.nominal_freq_hz,
        }
    }
}

impl Default for Bus {
    fn default() -> Self {
        Bus {
            id: 0,
            shunt: ZERO,
            role: BusRole::Load { admittance: ZERO },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"{
        "buses": [
            {"id": 1, "type": "gen", "shunt": {"re": 0, "im": 0},
             "gen": {"y_g": {"re": 0, "im": -10}, "mass": 1.0, "damping": 0.1}},
            {"id": 2, "type": "load", "shunt": {"re": 0, "im": 0}, "y_load": {"re": 0, "im": 0}}
        ],
        "branches": [{"from": 1, "to": 2, "y": {"re": 0, "im": -5}}],
        "f0_hz": 60
    }"#;

    #[test]
    fn two_bus_case_partitions() {
        let case = GridCase::from_json_str(TWO_BUS).unwrap();
        assert_eq!(case.n_generators(), 1);
        assert_eq!(case.load_indices().len(), 1);
        assert_eq!(partition_indices(&case), (vec![0], vec![1]));
    }

    #[test]
    fn duplicate_branch_rejected() {
        let text = TWO_BUS.replace(
            r#"[{"from": 1, "to": 2, "y": {"re": 0, "im": -5}}]"#,
            r#"[{"from": 1, "to": 2, "y": {"re": 0, "im": -5}}, {"from": 2, "to": 1, "y": {"re": 0, "im": -1}}]"#,
        );
        let err = GridCase::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate branch"), "{err}");
    }

    #[test]
    fn nonpositive_mass_rejected_with_field() {
        let text = TWO_BUS.replace(r#""mass": 1.0"#, r#""mass": 0.0"#);
        let err = GridCase::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("bus 1.gen.mass"), "{err}");
    }

    #[test]
    fn self_loop_rejected() {
        let text = TWO_BUS.replace(r#""from": 1, "to": 2"#, r#""from": 2, "to": 2"#);
        assert!(GridCase::from_json_str(&text).unwrap_err().to_string().contains("self-loop"));
    }

    #[test]
    fn all_load_partition() {
        let buses = (0..4)
            .map(|i| Bus {
                id: i,
                ..Bus::default()
            })
            .collect();
        let case = GridCase::new(buses, vec![], 50.0).unwrap();
        assert_eq!(partition_indices(&case), (vec![], vec![0, 1, 2, 3]));
        assert!(!case.is_connected());
    }

    #[test]
    fn shuffled_generators_found_by_scan() {
        let gen_at = [2usize, 5];
        let buses: Vec<Bus> = (0..7)
            .map(|i| Bus {
                id: 100 + i as u64,
                shunt: ZERO,
                role: if gen_at.contains(&i) {
                    BusRole::Generator(GeneratorData {
                        admittance: c64::new(0.0, -4.0),
                        mass: 2.0,
                        damping: 0.0,
                    })
                } else {
                    BusRole::Load { admittance: ZERO }
                },
            })
            .collect();
        let expected_gens: Vec<usize> = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| matches!(b.role, BusRole::Generator(_)))
            .map(|(i, _)| i)
            .collect();
        let case = GridCase::new(buses, vec![], 60.0).unwrap();
        let (g, l) = partition_indices(&case);
        assert_eq!(g, expected_gens);
        assert_eq!(l, vec![0, 1, 3, 4, 6]);
    }

    #[test]
    fn json_roundtrip_is_identical() {
        let case = GridCase::from_json_str(TWO_BUS).unwrap();
        let again = GridCase::from_json_str(&case.to_json_string()).unwrap();
        assert_eq!(case, again);
    }
}
