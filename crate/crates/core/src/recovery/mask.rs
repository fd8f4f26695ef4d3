use std::path::Path;

use rand::Rng;

use crate::error::{GspError, Result};
use crate::rng::seeded;

/// Observed `(t, bus)` entries of a `T x N` series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask {
    frames: usize,
    buses: usize,
    observed: Vec<bool>,
}

impl ObservationMask {
    pub fn full(frames: usize, buses: usize) -> Self {
        ObservationMask {
            frames,
            buses,
            observed: vec![true; frames * buses],
        }
    }

    pub fn from_pairs(frames: usize, buses: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut observed = vec![false; frames * buses];
        for &(t, b) in pairs {
            if t >= frames || b >= buses {
                return Err(GspError::invalid("mask", format!("pair ({t}, {b}) outside {frames} x {buses}")));
            }
            observed[t * buses + b] = true;
        }
        Self::from_flags(frames, buses, observed)
    }

    pub fn from_flags(frames: usize, buses: usize, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != frames * buses {
            return Err(GspError::Dimension {
                expected: frames * buses,
                got: observed.len(),
            });
        }
        if !observed.iter().any(|&o| o) {
            return Err(GspError::invalid("mask", "no observed entries"));
        }
        Ok(ObservationMask {
            frames,
            buses,
            observed,
        })
    }

    /// Drops a `drop_rate` fraction of entries. When `gap_length > 1`, about
    /// half of the dropped entries come from contiguous per-bus gaps of that
    /// length and the rest are scattered.
    pub fn random(frames: usize, buses: usize, drop_rate: f64, gap_length: usize, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&drop_rate) {
            return Err(GspError::invalid("drop_rate", format!("must lie in [0, 1), got {drop_rate}")));
        }
        let total = frames * buses;
        let target = (drop_rate * total as f64).round() as usize;
        let mut observed = vec![true; total];
        let mut dropped = 0;
        let mut rng = seeded(seed);
        if gap_length > 1 && gap_length <= frames {
            let mut attempts = 0;
            while dropped < target / 2 && attempts < 100 * total {
                attempts += 1;
                let b = rng.random_range(0..buses);
                let start = rng.random_range(0..=frames - gap_length);
                let cells: Vec<usize> = (start..start + gap_length).map(|t| t * buses + b).collect();
                if cells.iter().all(|&c| observed[c]) && dropped + gap_length <= target {
                    for c in cells {
                        observed[c] = false;
                    }
                    dropped += gap_length;
                }
            }
        }
        while dropped < target {
            let c = rng.random_range(0..total);
            if observed[c] {
                observed[c] = false;
                dropped += 1;
            }
        }
        Self::from_flags(frames, buses, observed)
    }

    /// Reads a CSV of observed `t,bus` position pairs (header optional).
    pub fn load_csv(path: impl AsRef<Path>, frames: usize, buses: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GspError::io(path, e))?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with('t')) {
                continue;
            }
            let mut it = line.split(',').map(|f| f.trim().parse::<usize>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(t)), Some(Ok(b)), None) => pairs.push((t, b)),
                _ => return Err(GspError::Parse(format!("{}: line {}: expected `t,bus`", path.display(), i + 1))),
            }
        }
        Self::from_pairs(frames, buses, &pairs)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,bus\n");
        for t in 0..self.frames {
            for b in 0..self.buses {
                if self.is_observed(t, b) {
                    out.push_str(&format!("{t},{b}\n"));
                }
            }
        }
        out
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn buses(&self) -> usize {
        self.buses
    }

    pub fn is_observed(&self, t: usize, b: usize) -> bool {
        self.observed[t * self.buses + b]
    }

    /// Row-major flags.
    pub fn flags(&self) -> &[bool] {
        &self.observed
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Splits off a random `fraction` of observed entries as a validation
    /// set: returns (training mask, held-out flat indices).
    pub fn hold_out(&self, fraction: f64, seed: u64) -> Result<(ObservationMask, Vec<usize>)> {
        let obs: Vec<usize> = (0..self.observed.len()).filter(|&i| self.observed[i]).collect();
        let k = ((fraction * obs.len() as f64).round() as usize).min(obs.len().saturating_sub(1));
        let mut rng = seeded(seed);
        let picks = crate::rng::sample_subset(&mut rng, obs.len(), k);
        let held: Vec<usize> = picks.iter().map(|&p| obs[p]).collect();
        let mut flags = self.observed.clone();
        for &h in &held {
            flags[h] = false;
        }
        Ok((Self::from_flags(self.frames, self.buses, flags)?, held))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_mask_hits_drop_rate_with_gaps() {
        let m = ObservationMask::random(200, 40, 0.5, 10, 7).unwrap();
        assert_eq!(m.observed_count(), 4000);
        let mut longest = 0;
        for b in 0..40 {
            let mut run = 0;
            for t in 0..200 {
                run = if m.is_observed(t, b) { 0 } else { run + 1 };
                longest = longest.max(run);
            }
        }
        assert!(longest >= 10);
    }

    #[test]
    fn out_of_range_pair_rejected() {
        assert!(ObservationMask::from_pairs(2, 2, &[(2, 0)]).is_err());
        assert!(ObservationMask::from_pairs(2, 2, &[]).is_err());
    }
}
