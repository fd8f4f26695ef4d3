use faer::c64;

use crate::error::{GspError, Result};
use crate::grid_model::{PhasorKind, PhasorSeries};
use crate::linalg::ZERO;

use super::model::CodecModel;
use super::quantizer::{BitReader, BitWriter, MidRise, MAX_BITS};
use super::waterfill::{allocation_at, reverse_waterfill};

pub const MAGIC: &[u8; 4] = b"GGSP";
pub const VERSION: u8 = 1;
/// Active-count value marking a frame coded at full precision.
pub const FALLBACK_FRAME: u16 = u16::MAX;
/// Forgetting factor of the running residual variances.
pub const FORGET: f64 = 0.95;
/// Quantizer range in standard deviations of each real part, reached from
/// 8 bits up.
pub const CLIP_SIGMAS: f64 = 4.0;
/// MSE-optimal uniform-quantizer half-range for a unit Gaussian at 1..=7
/// bits.
const LOADING: [f64; 7] = [1.596, 1.991, 2.344, 2.682, 3.010, 3.331, 3.642];

/// Normalized MSE of the uniform quantizer above on a unit Gaussian.
const LOADING_MSE: [f64; 7] = [0.3634, 0.1188, 0.03744, 0.01154, 0.003490, 0.001041, 0.0003066];

/// Expected quantization MSE relative to the input variance at `bits`;
/// zero for the full-precision marker `u8::MAX`.
fn quantizer_mse(bits: u8) -> f64 {
    match bits {
        u8::MAX => 0.0,
        b => LOADING_MSE
            .get(b as usize - 1)
            .copied()
            .unwrap_or_else(|| (2.0 * CLIP_SIGMAS).powi(2) / 12.0 / 4f64.powi(b as i32)),
    }
}

/// Half-range in standard deviations used at `bits`.
pub fn loading_factor(bits: u8) -> f64 {
    LOADING.get(bits as usize - 1).copied().unwrap_or(CLIP_SIGMAS)
}
/// Components with allocated rate at or below this stay uncoded.
pub const MIN_ACTIVE_RATE: f64 = 0.5;

/// Recursion state shared by encoder and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecState {
    /// Generator states in the reduced GFT domain at `t-1` and `t-2`.
    pub x1: Vec<c64>,
    pub x2: Vec<c64>,
    /// Load currents at `t-1` and `t-2`.
    pub i1: Vec<c64>,
    pub i2: Vec<c64>,
    /// Running variances of the GFT residual components.
    pub variances: Vec<f64>,
}

impl CodecState {
    /// Exact little-endian serialization, for synchronization checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [&self.x1, &self.x2, &self.i1, &self.i2] {
            put_complex(&mut out, v);
        }
        for s in &self.variances {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    fn push(&mut self, x: Vec<c64>, i: Vec<c64>) {
        self.x2 = std::mem::replace(&mut self.x1, x);
        self.i2 = std::mem::replace(&mut self.i1, i);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub n: usize,
    pub n_g: usize,
    pub frames: usize,
    pub rate_hz: f64,
    pub x0: Vec<c64>,
    pub x1: Vec<c64>,
    pub i0: Vec<c64>,
    pub i1: Vec<c64>,
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodedComponent {
    pub index: u16,
    pub bits: u8,
    pub scale: f32,
    pub re: u32,
    pub im: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameRecord {
    Coded { theta: f32, components: Vec<CodedComponent> },
    /// The state update from the quantized reconstruction failed; the whole
    /// residual is carried at full precision.
    Fallback { residual: Vec<c64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodedStream {
    pub header: StreamHeader,
    /// Records for frames `2..T`.
    pub frames: Vec<FrameRecord>,
}

/// Result of [`encode`].
#[derive(Debug, Clone)]
pub struct Encoded {
    pub stream: CodedStream,
    /// The encoder-side reconstruction, identical to the decoder output.
    pub reconstruction: PhasorSeries,
    /// `(N T)^{-1} sum_t ||v_t - v_hat_t||^2`.
    pub distortion: f64,
    /// Encoder state after every frame, starting with the header state.
    pub states: Vec<CodecState>,
}

struct Prediction {
    x: Vec<c64>,
    i: Vec<c64>,
    v0: Vec<c64>,
}

/// `S^{-1} [diag(y_g) exp(diag(m)^{-1/2} U_red x); i]`.
fn synthesize(model: &CodecModel, x_gf: &[c64], i: &[c64]) -> Result<Vec<c64>> {
    let x = model.red.inverse_gft(x_gf)?;
    let mut exc = vec![ZERO; model.case.n_buses()];
    for (k, &g) in model.gens.iter().enumerate() {
        exc[g] = model.y_g[k] * (x[k] / model.masses[k].sqrt()).exp();
    }
    for (k, &l) in model.loads.iter().enumerate() {
        exc[l] = i[k];
    }
    model.gso.solve(&exc)
}

/// States implied by a voltage frame; `None` when some internal voltage
/// has zero or non-finite magnitude.
fn states_from_voltage(model: &CodecModel, v: &[c64]) -> Result<Option<(Vec<c64>, Vec<c64>)>> {
    let s = model.gso.shift(v)?;
    let mut x = Vec::with_capacity(model.gens.len());
    for (k, &g) in model.gens.iter().enumerate() {
        let e = s[g] / model.y_g[k];
        let mag = e.norm();
        if !(mag.is_finite() && mag > 0.0) {
            return Ok(None);
        }
        x.push(e.ln() * model.masses[k].sqrt());
    }
    let x_gf = model.red.gft(&x)?;
    let i = model.loads.iter().map(|&l| s[l]).collect();
    Ok(Some((x_gf, i)))
}

fn predict(model: &CodecModel, st: &CodecState) -> Result<Prediction> {
    let g = &model.gen_dynamics;
    let x: Vec<c64> = (0..g.dim()).map(|k| g.predict(k, st.x1[k], st.x2[k])).collect();
    let l = &model.load_dynamics;
    let i: Vec<c64> = (0..l.dim())
        .map(|b| {
            let mu = l.mean_current[b];
            mu + l.b1[b] * (st.i1[b] - mu) + l.b2[b] * (st.i2[b] - mu)
        })
        .collect();
    let v0 = synthesize(model, &x, &i)?;
    Ok(Prediction { x, i, v0 })
}

/// Active components `(index, bits, scale)` for water level `theta`.
fn plan(variances: &[f64], theta: f32) -> Vec<(usize, u8, f32)> {
    let alloc = allocation_at(variances, theta as f64);
    alloc
        .rates
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > MIN_ACTIVE_RATE)
        .filter_map(|(i, &r)| {
            let bits = r.round().clamp(1.0, MAX_BITS as f64) as u8;
            let scale = (loading_factor(bits) * (variances[i] / 2.0).sqrt()) as f32;
            (scale.is_finite() && scale > 0.0).then_some((i, bits, scale))
        })
        .collect()
}

fn water_level(variances: &[f64], frame_target: f64) -> Result<f32> {
    let total: f64 = variances.iter().sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    if frame_target >= total {
        return Ok(variances.iter().copied().fold(0.0, f64::max) as f32);
    }
    Ok(reverse_waterfill(variances, frame_target)?.theta as f32)
}

/// Coded components blend in their quantized energy plus the expected
/// quantization error, which the quantized energy alone misses; uncoded
/// components keep their estimate.
fn update_variances(var: &mut [f64], values: &[c64], bits: &[u8]) {
    for ((v, x), &b) in var.iter_mut().zip(values).zip(bits) {
        if b > 0 {
            let energy = x.norm_sqr() + quantizer_mse(b) * *v;
            *v = FORGET * *v + (1.0 - FORGET) * energy;
        }
    }
}

fn coded_bits(n: usize, comps: &[CodedComponent]) -> Vec<u8> {
    let mut f = vec![0; n];
    for c in comps {
        f[c.index as usize] = c.bits;
    }
    f
}

fn add_basis(model: &CodecModel, v0: &[c64], xi: &[c64]) -> Result<Vec<c64>> {
    let d = model.gso.inverse_gft(xi)?;
    Ok(v0.iter().zip(&d).map(|(a, b)| a + b).collect())
}

/// Quantized residual and reconstruction of one coded frame.
fn dequantize(n: usize, comps: &[CodedComponent]) -> Vec<c64> {
    let mut xi = vec![ZERO; n];
    for c in comps {
        let q = MidRise {
            bits: c.bits,
            range: c.scale,
        };
        xi[c.index as usize] = c64::new(q.decode(c.re), q.decode(c.im));
    }
    xi
}

/// Shared post-reconstruction step. Returns `false` when the state could
/// not be updated from `v_hat`.
fn commit(model: &CodecModel, st: &mut CodecState, pred: &Prediction, v_hat: &[c64], force: bool) -> Result<bool> {
    match states_from_voltage(model, v_hat)? {
        Some((x, i)) => {
            st.push(x, i);
            Ok(true)
        }
        None if force => {
            st.push(pred.x.clone(), pred.i.clone());
            Ok(true)
        }
        None => Ok(false),
    }
}

fn initial_state(model: &CodecModel, v: &PhasorSeries) -> Result<(StreamHeader, CodecState)> {
    let n = model.case.n_buses();
    let derive = |t: usize| -> Result<(Vec<c64>, Vec<c64>)> {
        states_from_voltage(model, v.frame(t))?.ok_or_else(|| GspError::Stream {
            frame: t,
            message: "internal voltage with zero magnitude in an initial frame".into(),
        })
    };
    let (x0, i0) = derive(0)?;
    let (x1, i1) = derive(1)?;
    let mut st = CodecState {
        x1: x1.clone(),
        x2: x0.clone(),
        i1: i1.clone(),
        i2: i0.clone(),
        variances: vec![0.0; n],
    };
    // open-loop residuals of the first two coded frames
    let mut probe = st.clone();
    let mut used = 0;
    for t in 2..v.len().min(4) {
        let pred = predict(model, &probe)?;
        let diff: Vec<c64> = v.frame(t).iter().zip(&pred.v0).map(|(a, b)| a - b).collect();
        let xi = model.gso.gft(&diff)?;
        for (s, r) in st.variances.iter_mut().zip(&xi) {
            *s += r.norm_sqr();
        }
        used += 1;
        commit(model, &mut probe, &pred, v.frame(t), true)?;
    }
    if used > 0 {
        st.variances.iter_mut().for_each(|s| *s /= used as f64);
    }
    let header = StreamHeader {
        n,
        n_g: model.gens.len(),
        frames: v.len(),
        rate_hz: v.rate_hz(),
        x0,
        x1,
        i0,
        i1,
        variances: st.variances.clone(),
    };
    Ok((header, st))
}

fn sq_error(a: &[c64], b: &[c64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// Sequential closed-loop encoder. `d_target` is the per-sample MSE
/// budget; each frame gets `N d_target` in the GFT domain.
pub fn encode(v: &PhasorSeries, model: &CodecModel, d_target: f64) -> Result<Encoded> {
    let n = model.case.n_buses();
    if v.n_buses() != n {
        return Err(GspError::Dimension {
            expected: n,
            got: v.n_buses(),
        });
    }
    if v.len() < 2 {
        return Err(GspError::invalid("series", "need at least the two initial frames"));
    }
    if n >= FALLBACK_FRAME as usize {
        return Err(GspError::invalid("series", format!("{n} buses exceed the stream index range")));
    }
    if !(d_target.is_finite() && d_target > 0.0) {
        return Err(GspError::invalid("distortion target", "must be positive and finite"));
    }
    let (header, mut st) = initial_state(model, v)?;
    let mut recon: Vec<Vec<c64>> = vec![
        synthesize(model, &header.x0, &header.i0)?,
        synthesize(model, &header.x1, &header.i1)?,
    ];
    let mut states = vec![st.clone()];
    let mut frames = Vec::with_capacity(v.len() - 2);
    for t in 2..v.len() {
        let pred = predict(model, &st)?;
        let diff: Vec<c64> = v.frame(t).iter().zip(&pred.v0).map(|(a, b)| a - b).collect();
        let xi = model.gso.gft(&diff)?;
        let theta = water_level(&st.variances, d_target * n as f64)?;
        let comps: Vec<CodedComponent> = plan(&st.variances, theta)
            .into_iter()
            .map(|(i, bits, scale)| {
                let q = MidRise { bits, range: scale };
                CodedComponent {
                    index: i as u16,
                    bits,
                    scale,
                    re: q.encode(xi[i].re),
                    im: q.encode(xi[i].im),
                }
            })
            .collect();
        let xi_hat = dequantize(n, &comps);
        let v_hat = add_basis(model, &pred.v0, &xi_hat)?;
        if commit(model, &mut st, &pred, &v_hat, false)? {
            update_variances(&mut st.variances, &xi_hat, &coded_bits(n, &comps));
            frames.push(FrameRecord::Coded {
                theta,
                components: comps,
            });
            recon.push(v_hat);
        } else {
            log::warn!("frame {t}: state update failed on the quantized reconstruction; coding at full precision");
            let v_full = add_basis(model, &pred.v0, &xi)?;
            commit(model, &mut st, &pred, &v_full, true)?;
            update_variances(&mut st.variances, &xi, &vec![u8::MAX; n]);
            frames.push(FrameRecord::Fallback { residual: xi });
            recon.push(v_full);
        }
        states.push(st.clone());
    }
    let sq: f64 = (0..v.len()).map(|t| sq_error(v.frame(t), &recon[t])).sum();
    let distortion = sq / (n * v.len()) as f64;
    let reconstruction = PhasorSeries::from_frames(&recon, model.case.bus_ids(), v.rate_hz(), PhasorKind::Voltage)?;
    Ok(Encoded {
        stream: CodedStream { header, frames },
        reconstruction,
        distortion,
        states,
    })
}

/// Decoder mirroring [`encode`]; also returns the state after each frame.
pub fn decode_with_states(stream: &CodedStream, model: &CodecModel) -> Result<(PhasorSeries, Vec<CodecState>)> {
    let h = &stream.header;
    let n = model.case.n_buses();
    if h.n != n || h.n_g != model.gens.len() {
        return Err(GspError::Stream {
            frame: 0,
            message: format!("stream is for N = {}, N_G = {}; model has {}, {}", h.n, h.n_g, n, model.gens.len()),
        });
    }
    if stream.frames.len() + 2 != h.frames {
        return Err(GspError::Stream {
            frame: stream.frames.len() + 2,
            message: format!("header announces {} frames", h.frames),
        });
    }
    let mut st = CodecState {
        x1: h.x1.clone(),
        x2: h.x0.clone(),
        i1: h.i1.clone(),
        i2: h.i0.clone(),
        variances: h.variances.clone(),
    };
    let mut recon = vec![synthesize(model, &h.x0, &h.i0)?, synthesize(model, &h.x1, &h.i1)?];
    let mut states = vec![st.clone()];
    for (k, rec) in stream.frames.iter().enumerate() {
        let t = k + 2;
        let pred = predict(model, &st)?;
        match rec {
            FrameRecord::Coded { theta, components } => {
                let expected = plan(&st.variances, *theta);
                let matches = expected.len() == components.len()
                    && expected
                        .iter()
                        .zip(components)
                        .all(|(&(i, b, s), c)| c.index as usize == i && c.bits == b && c.scale == s);
                if !matches {
                    return Err(GspError::Stream {
                        frame: t,
                        message: "bit allocation does not match the water level".into(),
                    });
                }
                let xi_hat = dequantize(n, components);
                let v_hat = add_basis(model, &pred.v0, &xi_hat)?;
                if !commit(model, &mut st, &pred, &v_hat, false)? {
                    return Err(GspError::Stream {
                        frame: t,
                        message: "state update failed on a quantized frame".into(),
                    });
                }
                update_variances(&mut st.variances, &xi_hat, &coded_bits(n, components));
                recon.push(v_hat);
            }
            FrameRecord::Fallback { residual } => {
                if residual.len() != n {
                    return Err(GspError::Stream {
                        frame: t,
                        message: "fallback residual has the wrong length".into(),
                    });
                }
                let v_full = add_basis(model, &pred.v0, residual)?;
                commit(model, &mut st, &pred, &v_full, true)?;
                update_variances(&mut st.variances, residual, &vec![u8::MAX; n]);
                recon.push(v_full);
            }
        }
        states.push(st.clone());
    }
    let series = PhasorSeries::from_frames(&recon, model.case.bus_ids(), h.rate_hz, PhasorKind::Voltage)?;
    Ok((series, states))
}

pub fn decode(stream: &CodedStream, model: &CodecModel) -> Result<PhasorSeries> {
    Ok(decode_with_states(stream, model)?.0)
}

/// `(N T)^{-1} sum_t ||v_t - v_hat_t||^2`.
pub fn mse(v: &PhasorSeries, v_hat: &PhasorSeries) -> Result<f64> {
    if v.len() != v_hat.len() || v.n_buses() != v_hat.n_buses() {
        return Err(GspError::Dimension {
            expected: v.values().len(),
            got: v_hat.values().len(),
        });
    }
    let sq: f64 = (0..v.len()).map(|t| sq_error(v.frame(t), v_hat.frame(t))).sum();
    Ok(sq / (v.n_buses() * v.len()) as f64)
}

fn put_complex(out: &mut Vec<u8>, v: &[c64]) {
    for z in v {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
}

impl CodedStream {
    /// Little-endian layout: magic, version, `N`, `N_G`, `T`, rate, initial
    /// states `x0, x1` (`N_G` complex each), `i0, i1` (`N - N_G` complex
    /// each), `N` initial variances; then per frame `f32 theta`, `u16` active
    /// count, `u16` indices, and per active component `u8` bits, `f32`
    /// scale and the real and imaginary codes packed into
    /// `ceil(2 bits / 8)` bytes. A fallback frame has count `u16::MAX`
    /// followed by `N` complex residuals.
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(h.n as u32).to_le_bytes());
        out.extend_from_slice(&(h.n_g as u32).to_le_bytes());
        out.extend_from_slice(&(h.frames as u32).to_le_bytes());
        out.extend_from_slice(&h.rate_hz.to_le_bytes());
        for v in [&h.x0, &h.x1, &h.i0, &h.i1] {
            put_complex(&mut out, v);
        }
        for s in &h.variances {
            out.extend_from_slice(&s.to_le_bytes());
        }
        for rec in &self.frames {
            match rec {
                FrameRecord::Coded { theta, components } => {
                    out.extend_from_slice(&theta.to_le_bytes());
                    out.extend_from_slice(&(components.len() as u16).to_le_bytes());
                    for c in components {
                        out.extend_from_slice(&c.index.to_le_bytes());
                    }
                    for c in components {
                        out.push(c.bits);
                        out.extend_from_slice(&c.scale.to_le_bytes());
                        let mut w = BitWriter::default();
                        w.push(c.re, c.bits);
                        w.push(c.im, c.bits);
                        out.extend(w.finish());
                    }
                }
                FrameRecord::Fallback { residual } => {
                    out.extend_from_slice(&0f32.to_le_bytes());
                    out.extend_from_slice(&FALLBACK_FRAME.to_le_bytes());
                    put_complex(&mut out, residual);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, frame: 0 };
        if r.take(4)? != MAGIC {
            return Err(r.error("bad magic"));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(r.error(&format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        let n_g = r.u32()? as usize;
        let frames = r.u32()? as usize;
        let rate_hz = r.f64()?;
        if n_g > n || frames < 2 || n >= FALLBACK_FRAME as usize {
            return Err(r.error("inconsistent header sizes"));
        }
        let x0 = r.complex(n_g)?;
        let x1 = r.complex(n_g)?;
        let i0 = r.complex(n - n_g)?;
        let i1 = r.complex(n - n_g)?;
        let variances = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let header = StreamHeader {
            n,
            n_g,
            frames,
            rate_hz,
            x0,
            x1,
            i0,
            i1,
            variances,
        };
        let mut recs = Vec::with_capacity(frames - 2);
        for t in 2..frames {
            r.frame = t;
            let theta = r.f32()?;
            let count = r.u16()?;
            if count == FALLBACK_FRAME {
                recs.push(FrameRecord::Fallback { residual: r.complex(n)? });
                continue;
            }
            if !(theta.is_finite() && theta >= 0.0) {
                return Err(r.error("invalid water level"));
            }
            let count = count as usize;
            if count > n {
                return Err(r.error("active count exceeds N"));
            }
            let idx = (0..count).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
            if idx.iter().any(|&i| i as usize >= n) || idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(r.error("invalid component indices"));
            }
            let mut comps = Vec::with_capacity(count);
            for index in idx {
                let bits = r.u8()?;
                if bits == 0 || bits > MAX_BITS {
                    return Err(r.error("invalid bit depth"));
                }
                let scale = r.f32()?;
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(r.error("invalid quantizer scale"));
                }
                let packed = r.take((2 * bits as usize).div_ceil(8))?;
                let mut br = BitReader::new(packed);
                let re = br.pull(bits).expect("packed length covers both codes");
                let im = br.pull(bits).expect("packed length covers both codes");
                comps.push(CodedComponent {
                    index,
                    bits,
                    scale,
                    re,
                    im,
                });
            }
            recs.push(FrameRecord::Coded {
                theta,
                components: comps,
            });
        }
        r.frame = frames;
        if r.pos != bytes.len() {
            return Err(r.error("trailing bytes after the last frame"));
        }
        Ok(CodedStream { header, frames: recs })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    frame: usize,
}

impl<'a> Reader<'a> {
    fn error(&self, message: &str) -> GspError {
        GspError::Stream {
            frame: self.frame,
            message: message.to_string(),
        }
    }

    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.pos + k > self.bytes.len() {
            return Err(self.error("truncated stream"));
        }
        let s = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn complex(&mut self, k: usize) -> Result<Vec<c64>> {
        (0..k).map(|_| Ok(c64::new(self.f64()?, self.f64()?))).collect()
    }
}
