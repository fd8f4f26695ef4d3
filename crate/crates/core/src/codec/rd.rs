use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::grid_model::PhasorSeries;

use super::model::CodecModel;
use super::quantizer::{MidRise, MAX_BITS};
use super::stream::{decode, encode, mse, CodedStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub d_target: f64,
    /// Emitted bits per complex sample, header included.
    pub rate: f64,
    pub mse: f64,
    /// Scalar-quantization MSE at the same total rate.
    pub baseline_mse: f64,
}

/// One encode/decode cycle per target; the rate is the actual stream size.
pub fn eval_rd(v: &PhasorSeries, model: &CodecModel, targets: &[f64]) -> Result<Vec<RdPoint>> {
    if targets.is_empty() {
        return Err(GspError::invalid("distortion grid", "must be nonempty"));
    }
    let samples = (v.n_buses() * v.len()) as f64;
    targets
        .iter()
        .map(|&d| {
            let enc = encode(v, model, d)?;
            let bytes = enc.stream.to_bytes();
            let decoded = decode(&CodedStream::from_bytes(&bytes)?, model)?;
            let rate = 8.0 * bytes.len() as f64 / samples;
            Ok(RdPoint {
                d_target: d,
                rate,
                mse: mse(v, &decoded)?,
                baseline_mse: scalar_quantization_mse(v, rate),
            })
        })
        .collect()
}

/// Side information of the baseline: `f64` minimum and maximum per real
/// series.
const BASELINE_SIDE_BITS: f64 = 128.0;

/// MSE of per-series uniform scalar quantization of the raw real and
/// imaginary parts at `rate` bits per complex sample (side information
/// included). Each series is quantized over its own `[min, max]`; the bit
/// budget is split as evenly as possible across the `2N` series.
pub fn scalar_quantization_mse(v: &PhasorSeries, rate: f64) -> f64 {
    let (n, t) = (v.n_buses(), v.len());
    let series = 2 * n;
    let budget = rate * (n * t) as f64 - BASELINE_SIDE_BITS * series as f64;
    let per_value = (budget / (series * t) as f64).max(0.0);
    let base = per_value.floor().min(MAX_BITS as f64) as u8;
    let extra = if base >= MAX_BITS {
        0
    } else {
        (((per_value - base as f64) * series as f64).floor() as usize).min(series)
    };
    let mut sq = 0.0;
    for s in 0..series {
        let bits = base + u8::from(s < extra);
        let vals: Vec<f64> = (0..t)
            .map(|k| {
                let z = v.frame(k)[s / 2];
                if s % 2 == 0 {
                    z.re
                } else {
                    z.im
                }
            })
            .collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mid = 0.5 * (lo + hi);
        if bits == 0 || hi <= lo {
            sq += vals.iter().map(|x| (x - mid).powi(2)).sum::<f64>();
            continue;
        }
        let q = MidRise {
            bits,
            range: (0.5 * (hi - lo)) as f32,
        };
        sq += vals.iter().map(|x| (x - (mid + q.decode(q.encode(x - mid)))).powi(2)).sum::<f64>();
    }
    sq / (n * t) as f64
}
