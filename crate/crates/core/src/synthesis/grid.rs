use std::collections::HashSet;

use faer::c64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::grid_model::{Branch, Bus, BusRole, GeneratorData, GridCase};
use crate::rng::{sample_subset, seeded};

/// Parameters of the community-structured benchmark grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticGridConfig {
    pub n_buses: usize,
    pub communities: usize,
    /// Probability of each extra intra-community edge beyond the spanning tree.
    pub intra_edge_prob: f64,
    /// Random inter-community ties added on top of the ring of ties.
    pub extra_ties: usize,
    pub gen_fraction: f64,
    /// Range of the intra-community line susceptance magnitude.
    pub intra_susceptance: (f64, f64),
    pub inter_susceptance: (f64, f64),
    /// Line resistance-to-reactance ratio.
    pub r_over_x: f64,
    pub gen_susceptance: (f64, f64),
    pub mass: (f64, f64),
    /// Damping as a fraction of mass.
    pub damping_ratio: f64,
    pub load_conductance: (f64, f64),
    /// Reactive-to-active ratio of the load admittance.
    pub load_reactive_ratio: f64,
    pub f0_hz: f64,
}

impl Default for SyntheticGridConfig {
    fn default() -> Self {
        SyntheticGridConfig {
            n_buses: 120,
            communities: 6,
            intra_edge_prob: 0.15,
            extra_ties: 2,
            gen_fraction: 0.2,
            intra_susceptance: (5.0, 20.0),
            inter_susceptance: (0.5, 2.0),
            r_over_x: 0.1,
            gen_susceptance: (3.0, 6.0),
            mass: (5.0, 10.0),
            damping_ratio: 0.1,
            load_conductance: (0.1, 0.4),
            load_reactive_ratio: 0.3,
            f0_hz: 60.0,
        }
    }
}

/// A generated grid together with the community label of each bus.
#[derive(Debug, Clone)]
pub struct SyntheticGrid {
    pub case: GridCase,
    pub communities: Vec<usize>,
}

fn line_admittance(b: f64, r_over_x: f64) -> c64 {
    // 1 / (x (r/x + j)) with x = 1/b
    c64::new(r_over_x, -1.0) * (b / (1.0 + r_over_x * r_over_x))
}

fn uniform<R: Rng>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Builds a connected grid of `communities` tightly coupled clusters with
/// weak ties between them.
pub fn generate_synthetic_grid(cfg: &SyntheticGridConfig, seed: u64) -> Result<SyntheticGrid> {
    let (n, k) = (cfg.n_buses, cfg.communities);
    if n == 0 || k == 0 || k > n {
        return Err(GspError::invalid("synthetic grid", format!("need 1 <= communities <= n, got {k} of {n}")));
    }
    if !(0.0..=1.0).contains(&cfg.intra_edge_prob) || !(0.0..=1.0).contains(&cfg.gen_fraction) {
        return Err(GspError::invalid("synthetic grid", "probabilities must lie in [0, 1]"));
    }
    let mut rng = seeded(seed);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut label = vec![0; n];
    for (i, l) in label.iter_mut().enumerate() {
        *l = i * k / n;
        members[*l].push(i);
    }

    let mut edges: Vec<(usize, usize, c64)> = Vec::new();
    let mut used = HashSet::new();
    let mut add = |a: usize, b: usize, y: c64, edges: &mut Vec<(usize, usize, c64)>| {
        if a != b && used.insert((a.min(b), a.max(b))) {
            edges.push((a, b, y));
        }
    };
    for group in &members {
        for pos in 1..group.len() {
            let parent = group[rng.random_range(0..pos)];
            let y = line_admittance(uniform(&mut rng, cfg.intra_susceptance), cfg.r_over_x);
            add(parent, group[pos], y, &mut edges);
        }
        for a in 0..group.len() {
            for b in (a + 1)..group.len() {
                if rng.random::<f64>() < cfg.intra_edge_prob {
                    let y = line_admittance(uniform(&mut rng, cfg.intra_susceptance), cfg.r_over_x);
                    add(group[a], group[b], y, &mut edges);
                }
            }
        }
    }
    let pick = |rng: &mut crate::rng::SeededRng, c: usize| members[c][rng.random_range(0..members[c].len())];
    if k > 1 {
        let ring = if k == 2 { 1 } else { k };
        for c in 0..ring {
            let (a, b) = (pick(&mut rng, c), pick(&mut rng, (c + 1) % k));
            let y = line_admittance(uniform(&mut rng, cfg.inter_susceptance), cfg.r_over_x);
            add(a, b, y, &mut edges);
        }
        for _ in 0..cfg.extra_ties {
            let c1 = rng.random_range(0..k);
            let c2 = (c1 + rng.random_range(1..k)) % k;
            let (a, b) = (pick(&mut rng, c1), pick(&mut rng, c2));
            let y = line_admittance(uniform(&mut rng, cfg.inter_susceptance), cfg.r_over_x);
            add(a, b, y, &mut edges);
        }
    }

    let mut is_gen = vec![false; n];
    for group in &members {
        let count = ((group.len() as f64 * cfg.gen_fraction).round() as usize).clamp(1, group.len());
        for pos in sample_subset(&mut rng, group.len(), count) {
            is_gen[group[pos]] = true;
        }
    }

    let buses = (0..n)
        .map(|i| {
            let role = if is_gen[i] {
                let mass = uniform(&mut rng, cfg.mass);
                BusRole::Generator(GeneratorData {
                    admittance: c64::new(0.0, -uniform(&mut rng, cfg.gen_susceptance)),
                    mass,
                    damping: cfg.damping_ratio * mass,
                })
            } else {
                let g = uniform(&mut rng, cfg.load_conductance);
                BusRole::Load {
                    admittance: c64::new(g, -cfg.load_reactive_ratio * g),
                }
            };
            Bus {
                id: i as u64 + 1,
                shunt: c64::new(0.0, 0.0),
                role,
            }
        })
        .collect();
    let branches = edges
        .into_iter()
        .map(|(from, to, admittance)| Branch { from, to, admittance })
        .collect();
    let case = GridCase::new(buses, branches, cfg.f0_hz)?;
    Ok(SyntheticGrid { case, communities: label })
}
