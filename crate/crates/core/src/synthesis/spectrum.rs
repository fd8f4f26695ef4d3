use rustfft::FftPlanner;

use crate::error::{GspError, Result};
use crate::grid_model::PhasorSeries;
use crate::spectral::SpectralOperator;

use super::dynamics::frame_gft;

/// Periodogram `|FFT_t(x~_k)|^2 / T` of every graph-frequency component.
/// Row `k` is graph frequency `k`, column `f` is temporal bin `f` of `T`.
pub fn joint_spectrum(x: &PhasorSeries, op: &SpectralOperator) -> Result<Vec<Vec<f64>>> {
    let t = x.len();
    if t < 8 {
        return Err(GspError::invalid("series", format!("need T ≥ 8 frames, got {t}")));
    }
    let xt = frame_gft(op, x)?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(t);
    Ok((0..op.dim())
        .map(|k| {
            let mut buf: Vec<_> = xt.iter().map(|f| f[k]).collect();
            fft.process(&mut buf);
            buf.iter().map(|z| z.norm_sqr() / t as f64).collect()
        })
        .collect())
}
