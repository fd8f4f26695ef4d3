//! Sensor placement for bandlimited voltage signals, spatial reconstruction
//! from the placed sensors, and temporal decimation/interpolation.

use faer::{c64, Mat};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::grid_model::PhasorSeries;
use crate::linalg::{self, ZERO};
use crate::rng::{sample_subset, seeded};
use crate::spectral::SpectralOperator;

/// Minimum `sigma_min(P_M^T U_K)` accepted by [`reconstruct`].
pub const MIN_SIGMA: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    /// Selected bus positions, in selection order.
    pub selected: Vec<usize>,
    pub sigma_min: f64,
    /// Frequency indices spanning the bandlimited subspace.
    pub band: Vec<usize>,
}

fn rows_of_band(op: &SpectralOperator, band: &[usize], rows: &[usize]) -> Mat<c64> {
    let u = op.basis();
    Mat::from_fn(rows.len(), band.len(), |i, j| u[(rows[i], band[j])])
}

/// Smallest of the `min(|M|, |K|)` singular values of `P_M^T U_K`.
pub fn selection_sigma_min(op: &SpectralOperator, band: &[usize], rows: &[usize]) -> Result<f64> {
    linalg::sigma_min(rows_of_band(op, band, rows).as_ref())
}

/// Greedy E-optimal placement of `m` sensors for the `k` lowest frequencies.
/// Each step adds the bus that maximizes the updated `sigma_min`; ties go to
/// the lowest bus index.
pub fn greedy_placement(op: &SpectralOperator, k: usize, m: usize) -> Result<PlacementResult> {
    let n = op.dim();
    if k == 0 || k > n || m > n {
        return Err(GspError::invalid("placement", format!("need 1 <= K <= N and M <= N (K={k}, M={m}, N={n})")));
    }
    let band: Vec<usize> = (0..k).collect();
    let mut selected: Vec<usize> = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let mut best_sigma = 0.0;
    for _ in 0..m {
        let mut best: Option<(usize, f64)> = None;
        let mut trial = selected.clone();
        trial.push(0);
        for cand in (0..n).filter(|&c| !taken[c]) {
            *trial.last_mut().unwrap() = cand;
            let s = selection_sigma_min(op, &band, &trial)?;
            let better = match best {
                None => true,
                Some((_, b)) => s > b + 1e-12 * b.abs(),
            };
            if better {
                best = Some((cand, s));
            }
        }
        let (c, s) = best.expect("a free candidate exists while |M| <= N");
        taken[c] = true;
        selected.push(c);
        best_sigma = s;
    }
    Ok(PlacementResult {
        selected,
        sigma_min: best_sigma,
        band,
    })
}

/// `v = U_K (P_M^T U_K)^+ v_M`.
pub fn reconstruct(op: &SpectralOperator, band: &[usize], rows: &[usize], samples: &[c64]) -> Result<Vec<c64>> {
    Reconstructor::new(op, band, rows)?.apply(samples)
}

/// Precomputed least-squares reconstruction for a fixed placement.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    u_band: Mat<c64>,
    pinv: Mat<c64>,
    rows: usize,
    pub sigma_min: f64,
}

impl Reconstructor {
    pub fn new(op: &SpectralOperator, band: &[usize], rows: &[usize]) -> Result<Self> {
        let n = op.dim();
        if band.iter().chain(rows).any(|&i| i >= n) {
            return Err(GspError::invalid("placement", "index out of range"));
        }
        if rows.len() < band.len() {
            return Err(GspError::invalid(
                "placement",
                format!("|M| = {} is smaller than |K| = {}", rows.len(), band.len()),
            ));
        }
        let sub = rows_of_band(op, band, rows);
        let sigma_min = linalg::sigma_min(sub.as_ref())?;
        if !(sigma_min > MIN_SIGMA) {
            return Err(GspError::IllConditioned { sigma_min });
        }
        Ok(Reconstructor {
            u_band: linalg::columns(op.basis(), band),
            pinv: linalg::pinv(sub.as_ref(), 0.0)?,
            rows: rows.len(),
            sigma_min,
        })
    }

    pub fn apply(&self, samples: &[c64]) -> Result<Vec<c64>> {
        if samples.len() != self.rows {
            return Err(GspError::Dimension {
                expected: self.rows,
                got: samples.len(),
            });
        }
        let coef = linalg::mat_vec(self.pinv.as_ref(), samples);
        Ok(linalg::mat_vec(self.u_band.as_ref(), &coef))
    }
}

/// `||a - b||^2 / ||a||^2` over flattened data.
pub fn nmse(reference: &[c64], estimate: &[c64]) -> f64 {
    let num: f64 = reference.iter().zip(estimate).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den = linalg::norm_sq(reference);
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Reconstructs every frame of `v` from the rows `placement` and returns
/// the NMSE against the full series.
pub fn placement_nmse(op: &SpectralOperator, band: &[usize], rows: &[usize], v: &PhasorSeries) -> Result<f64> {
    let rec = Reconstructor::new(op, band, rows)?;
    let mut est = Vec::with_capacity(v.values().len());
    for f in v.frames() {
        let samples: Vec<c64> = rows.iter().map(|&r| f[r]).collect();
        est.extend(rec.apply(&samples)?);
    }
    Ok(nmse(v.values(), &est))
}

/// Reconstruction error statistics of uniformly random placements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomPlacementStats {
    pub nmse: Vec<f64>,
    pub median: f64,
    /// Center of the most populated bin of a histogram of `log10(NMSE)`
    /// with bins of width [`MODE_BIN_WIDTH`] decades, returned as NMSE.
    pub mode: f64,
}

pub const MODE_BIN_WIDTH: f64 = 0.25;

/// NMSE of `trials` random `m`-subsets; placements whose `sigma_min` is
/// below [`MIN_SIGMA`] count as infinite error.
pub fn random_placement_stats(
    op: &SpectralOperator,
    band: &[usize],
    m: usize,
    v: &PhasorSeries,
    trials: usize,
    seed: u64,
) -> Result<RandomPlacementStats> {
    let mut rng = seeded(seed);
    let mut errs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let rows = sample_subset(&mut rng, op.dim(), m);
        let e = match placement_nmse(op, band, &rows, v) {
            Ok(e) => e,
            Err(GspError::IllConditioned { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        errs.push(e);
    }
    let mut sorted = errs.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if sorted.is_empty() {
        f64::NAN
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let mut bins: std::collections::BTreeMap<i64, usize> = Default::default();
    for e in sorted.iter().filter(|e| e.is_finite() && **e > 0.0) {
        *bins.entry((e.log10() / MODE_BIN_WIDTH).floor() as i64).or_default() += 1;
    }
    let mode = bins
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map_or(f64::NAN, |(&bin, _)| 10f64.powf((bin as f64 + 0.5) * MODE_BIN_WIDTH));
    Ok(RandomPlacementStats {
        nmse: errs,
        median,
        mode,
    })
}

/// Frame length and hop (in decimated samples) of the interpolator.
pub const RESAMPLE_FRAME: usize = 64;
pub const RESAMPLE_HOP: usize = 32;

#[derive(Debug, Clone)]
pub struct Resampled {
    pub decimated: PhasorSeries,
    pub restored: PhasorSeries,
    /// NMSE of `restored` against the input.
    pub nmse: f64,
}

/// Decimates by `factor`, then interpolates back to the original rate by
/// zero-padding the spectrum of overlapping frames and cross-fading them
/// with a raised-sine window.
pub fn temporal_resample(series: &PhasorSeries, factor: usize) -> Result<Resampled> {
    if factor == 0 {
        return Err(GspError::invalid("factor", "must be at least 1"));
    }
    if factor == 1 {
        return Ok(Resampled {
            decimated: series.clone(),
            restored: series.clone(),
            nmse: 0.0,
        });
    }
    let n = series.n_buses();
    let t = series.len();
    let kept: Vec<usize> = (0..t).step_by(factor).collect();
    let dec_vals: Vec<c64> = kept.iter().flat_map(|&i| series.frame(i).to_vec()).collect();
    let decimated = PhasorSeries::new(dec_vals, series.bus_ids().to_vec(), series.rate_hz() / factor as f64, series.kind())?;
    let up = upsample(&decimated, factor, t);
    let restored = PhasorSeries::new(up, series.bus_ids().to_vec(), series.rate_hz(), series.kind())?;
    let nmse = nmse(series.values(), restored.values());
    debug_assert_eq!(restored.n_buses(), n);
    Ok(Resampled {
        decimated,
        restored,
        nmse,
    })
}

fn frame_starts(len: usize) -> Vec<usize> {
    if len <= RESAMPLE_FRAME {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..).map(|i| i * RESAMPLE_HOP).take_while(|&s| s + RESAMPLE_FRAME <= len).collect();
    let last = len - RESAMPLE_FRAME;
    if *starts.last().unwrap() != last {
        starts.push(last);
    }
    starts
}

/// Interpolates a decimated series by `factor`, truncated to `out_len` frames.
fn upsample(dec: &PhasorSeries, factor: usize, out_len: usize) -> Vec<c64> {
    let n = dec.n_buses();
    let len = dec.len();
    let frame = len.min(RESAMPLE_FRAME);
    let fine = frame * factor;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(frame);
    let inv = planner.plan_fft_inverse(fine);
    let window: Vec<f64> = (0..fine)
        .map(|m| {
            let s = (std::f64::consts::PI * (m as f64 / factor as f64 + 0.5) / frame as f64).sin();
            s * s
        })
        .collect();
    let total = len * factor;
    let mut acc = vec![ZERO; total * n];
    let mut weight = vec![0.0; total];
    for start in frame_starts(len) {
        for m in 0..fine {
            weight[start * factor + m] += window[m];
        }
        for b in 0..n {
            let mut spec: Vec<c64> = (0..frame).map(|i| dec.frame(start + i)[b]).collect();
            fwd.process(&mut spec);
            let mut padded = vec![ZERO; fine];
            let half = frame / 2;
            for (k, &val) in spec.iter().enumerate() {
                if frame % 2 == 0 && k == half && frame > 1 {
                    padded[half] += val * 0.5;
                    padded[fine - half] += val * 0.5;
                } else if k <= half {
                    padded[k] = val;
                } else {
                    padded[fine - (frame - k)] = val;
                }
            }
            inv.process(&mut padded);
            let scale = 1.0 / frame as f64;
            for m in 0..fine {
                acc[(start * factor + m) * n + b] += padded[m] * (scale * window[m]);
            }
        }
    }
    let mut out = Vec::with_capacity(out_len * n);
    for i in 0..out_len {
        let w = weight[i.min(total - 1)];
        if i < total {
            out.extend(acc[i * n..(i + 1) * n].iter().map(|z| z / w));
        } else {
            let last = out[(total - 1) * n..total * n].to_vec();
            out.extend(last);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::PhasorKind;
    use crate::linalg::{identity, ONE};

    #[test]
    fn identity_basis_greedy_picks_band_rows_first() {
        let s = Mat::<c64>::from_fn(5, 5, |i, j| if i == j { c64::new(i as f64 + 1.0, 0.0) } else { ZERO });
        let op = SpectralOperator::from_matrix(s).unwrap();
        let p = greedy_placement(&op, 3, 3).unwrap();
        let mut sel = p.selected.clone();
        sel.sort_unstable();
        assert_eq!(sel, vec![0, 1, 2]);
        assert!((p.sigma_min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_sampling_is_identity() {
        let s = Mat::<c64>::from_fn(3, 3, |i, j| if i == j { c64::new(2.0, -1.0) } else { c64::new(-0.5, 0.2) });
        let op = SpectralOperator::from_matrix(s).unwrap();
        let x = vec![c64::new(0.1, 1.0), c64::new(-2.0, 0.3), c64::new(0.7, 0.0)];
        let y = reconstruct(&op, &[0, 1, 2], &[0, 1, 2], &x).unwrap();
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn too_few_sensors_rejected() {
        let op = SpectralOperator::from_matrix(identity(3)).unwrap();
        assert!(reconstruct(&op, &[0, 1], &[0], &[ONE]).is_err());
        let err = reconstruct(&op, &[0], &[1], &[ONE]).unwrap_err();
        assert!(matches!(err, GspError::IllConditioned { .. }));
    }

    #[test]
    fn resample_identity_and_constant() {
        let s = PhasorSeries::new(vec![c64::new(1.0, -0.2); 3 * 150], vec![1, 2, 3], 30.0, PhasorKind::Voltage).unwrap();
        let r1 = temporal_resample(&s, 1).unwrap();
        assert_eq!(r1.restored, s);
        for f in [2, 3, 5] {
            let r = temporal_resample(&s, f).unwrap();
            assert_eq!(r.restored.len(), 150);
            assert!(r.nmse < 1e-24, "{}", r.nmse);
        }
    }

    #[test]
    fn bandlimited_sinusoid_roundtrip() {
        let factor = 3;
        let t = 64 * factor * 5;
        let vals: Vec<c64> = (0..t)
            .map(|i| {
                // 5 cycles per 64 decimated samples
                let ph = 2.0 * std::f64::consts::PI * 5.0 * i as f64 / (64.0 * factor as f64);
                c64::new(1.0, 0.0) + c64::from_polar(0.1, ph)
            })
            .collect();
        let s = PhasorSeries::new(vals, vec![1], 30.0, PhasorKind::Voltage).unwrap();
        let r = temporal_resample(&s, factor).unwrap();
        assert!(r.nmse < 1e-6, "{}", r.nmse);
    }
}
