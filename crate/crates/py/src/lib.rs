//! Python bindings. Complex vectors travel as lists of `complex`; series as
//! lists of frames (T lists of N values). Anything numpy can iterate works
//! as input.

use gridgsp::codec::{self, CodecModel, CodedStream};
use gridgsp::fdi::{self, Decision, IsolationConfig, MeasurementModel};
use gridgsp::grid_model::{GridCase, PhasorKind, PhasorSeries};
use gridgsp::recovery::{self, InferenceConfig, InterpolationConfig, ObservationMask};
use gridgsp::sampling;
use gridgsp::spectral::{self, FilterSpec, SpectralOperator};
use gridgsp::synthesis::{self, FitOptions, SimulationConfig, SyntheticGridConfig};
use gridgsp::GspError;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

type Frames = Vec<Vec<Complex64>>;

fn err(e: GspError) -> PyErr {
    match e {
        GspError::Io { .. } | GspError::NotConverged { .. } | GspError::Singular(_) | GspError::NonDiagonalizable { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn mat_rows(m: faer::MatRef<'_, Complex64>) -> Frames {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn series(frames: &Frames, bus_ids: Option<Vec<u64>>, rate_hz: f64, kind: PhasorKind) -> PyResult<PhasorSeries> {
    let n = frames.first().map_or(0, Vec::len);
    let ids = bus_ids.unwrap_or_else(|| (0..n as u64).collect());
    PhasorSeries::from_frames(frames, ids, rate_hz, kind).map_err(err)
}

fn case_series(case: &GridCase, frames: &Frames) -> PyResult<PhasorSeries> {
    series(frames, Some(case.bus_ids()), 30.0, PhasorKind::Voltage)
}

/// A power grid: buses, branches and generator data.
#[pyclass(name = "GridCase", module = "gridgsp")]
#[derive(Clone)]
struct PyGridCase(GridCase);

#[pymethods]
impl PyGridCase {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        GridCase::from_json_str(text).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        gridgsp::grid_model::load_case(path).map(Self).map_err(err)
    }

    /// Random community-structured grid.
    #[staticmethod]
    #[pyo3(signature = (n_buses, communities = 6, seed = 0))]
    fn synthetic(n_buses: usize, communities: usize, seed: u64) -> PyResult<Self> {
        let cfg = SyntheticGridConfig {
            n_buses,
            communities,
            ..Default::default()
        };
        synthesis::generate_synthetic_grid(&cfg, seed).map(|g| Self(g.case)).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json_string()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        gridgsp::grid_model::save_case(&self.0, path).map_err(err)
    }

    #[getter]
    fn n_buses(&self) -> usize {
        self.0.n_buses()
    }

    #[getter]
    fn bus_ids(&self) -> Vec<u64> {
        self.0.bus_ids()
    }

    #[getter]
    fn generator_indices(&self) -> Vec<usize> {
        self.0.generator_indices()
    }

    #[getter]
    fn load_indices(&self) -> Vec<usize> {
        self.0.load_indices()
    }

    fn admittance_matrix(&self) -> Frames {
        mat_rows(self.0.admittance_matrix().as_ref())
    }

    /// Shift operator `S` of the grid with its eigendecomposition.
    fn gso(&self) -> PyResult<PyOperator> {
        spectral::build_gso(&self.0).map(PyOperator).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("GridCase(n_buses={}, generators={})", self.0.n_buses(), self.0.n_generators())
    }
}

/// Complex-symmetric shift operator `S = U diag(L) U^T`, eigenvalues by
/// ascending modulus.
#[pyclass(name = "SpectralOperator", module = "gridgsp")]
#[derive(Clone)]
struct PyOperator(SpectralOperator);

#[pymethods]
impl PyOperator {
    #[staticmethod]
    fn from_matrix(rows: Frames) -> PyResult<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("matrix must be square"));
        }
        let m = faer::Mat::from_fn(n, n, |i, j| rows[i][j]);
        SpectralOperator::from_matrix(m).map(Self).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn matrix(&self) -> Frames {
        mat_rows(self.0.matrix())
    }

    fn eigenvalues(&self) -> Vec<Complex64> {
        self.0.eigenvalues().to_vec()
    }

    fn basis(&self) -> Frames {
        mat_rows(self.0.basis())
    }

    /// Residuals and eigenvalue range as a dict.
    fn diagnostics(&self) -> std::collections::BTreeMap<&'static str, f64> {
        let d = self.0.diagnostics();
        [
            ("spectral_residual", d.spectral_residual),
            ("orthogonality_residual", d.orthogonality_residual),
            ("min_abs_eigenvalue", d.min_abs_eigenvalue),
            ("max_abs_eigenvalue", d.max_abs_eigenvalue),
        ]
        .into_iter()
        .collect()
    }

    fn gft(&self, x: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.0.gft(&x).map_err(err)
    }

    fn inverse_gft(&self, xt: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.0.inverse_gft(&xt).map_err(err)
    }

    fn shift(&self, x: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.0.shift(&x).map_err(err)
    }

    /// `S^{-1} x`, or its restriction to the `k` lowest frequencies.
    #[pyo3(signature = (x, k = None))]
    fn inverse_filter(&self, x: Vec<Complex64>, k: Option<usize>) -> PyResult<Vec<Complex64>> {
        let spec = k.map_or(FilterSpec::FullInverse, FilterSpec::LowPass);
        self.0.apply_filter(&spec, &x).map_err(err)
    }

    fn kron_reduce(&self, keep: Vec<usize>) -> PyResult<Self> {
        spectral::kron_reduce(&self.0, &keep).map(Self).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("SpectralOperator(dim={})", self.0.dim())
    }
}

/// Simulated run on `case`; returns a dict with frames of `v`, `e`
/// (generator internal voltages) and `loads` (load currents).
#[pyfunction]
#[pyo3(signature = (case, frames = 300, seed = 0, meas_noise = 1e-4))]
fn simulate(case: &PyGridCase, frames: usize, seed: u64, meas_noise: f64) -> PyResult<std::collections::BTreeMap<&'static str, Frames>> {
    let cfg = SimulationConfig {
        frames,
        meas_noise,
        ..Default::default()
    };
    let sc = synthesis::simulate_scenario(&case.0, &cfg, seed).map_err(err)?;
    Ok([("v", sc.v.to_frames()), ("e", sc.e.to_frames()), ("loads", sc.loads.to_frames())].into_iter().collect())
}

/// Greedy placement of `m` sensors for the `k` lowest frequencies.
/// Returns `(selected, sigma_min)`.
#[pyfunction]
fn greedy_placement(op: &PyOperator, k: usize, m: usize) -> PyResult<(Vec<usize>, f64)> {
    let p = sampling::greedy_placement(&op.0, k, m).map_err(err)?;
    Ok((p.selected, p.sigma_min))
}

/// Bandlimited reconstruction of a full graph signal from samples at `rows`.
#[pyfunction]
fn reconstruct(op: &PyOperator, k: usize, rows: Vec<usize>, samples: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
    let band: Vec<usize> = (0..k).collect();
    sampling::reconstruct(&op.0, &band, &rows, &samples).map_err(err)
}

#[pyfunction]
fn nmse(reference: Vec<Complex64>, estimate: Vec<Complex64>) -> f64 {
    sampling::nmse(&reference, &estimate)
}

/// Fills the entries of `frames` where `observed[t][b]` is false. Weights
/// are chosen by hold-out validation when `c_g` and `c_t` are omitted.
#[pyfunction]
#[pyo3(signature = (op, frames, observed, c_g = None, c_t = None, seed = 0))]
fn interpolate(
    op: &PyOperator,
    frames: Frames,
    observed: Vec<Vec<bool>>,
    c_g: Option<f64>,
    c_t: Option<f64>,
    seed: u64,
) -> PyResult<Frames> {
    let s = series(&frames, None, 30.0, PhasorKind::Voltage)?;
    let flags: Vec<bool> = observed.concat();
    let mask = ObservationMask::from_flags(s.len(), s.n_buses(), flags).map_err(err)?;
    let cfg = InterpolationConfig::default();
    let res = match (c_g, c_t) {
        (Some(g), Some(t)) => recovery::interpolate(&s, &mask, &op.0, g, t, &cfg),
        (None, None) => recovery::interpolate_auto(&s, &mask, &op.0, &cfg, seed),
        _ => return Err(PyValueError::new_err("give both c_g and c_t or neither")),
    }
    .map_err(err)?;
    Ok(res.series.to_frames())
}

/// Sparse complex-symmetric operator from voltage frames (and optional
/// current frames), with trace constraint `alpha + j beta`.
#[pyfunction]
#[pyo3(signature = (voltages, alpha, beta, currents = None, current_weight = 1.0))]
fn infer_gso(voltages: Frames, alpha: f64, beta: f64, currents: Option<Frames>, current_weight: f64) -> PyResult<PyOperator> {
    let v = series(&voltages, None, 30.0, PhasorKind::Voltage)?;
    let i = currents.map(|c| series(&c, None, 30.0, PhasorKind::Current)).transpose()?;
    let mut cfg = InferenceConfig::new(alpha, beta);
    cfg.current_fit_weight = current_weight;
    recovery::infer_gso(&v, i.as_ref(), &cfg).map(|r| PyOperator(r.op)).map_err(err)
}

/// Detector for stealthy false-data injection on the measured buses.
#[pyclass(name = "MeasurementModel", module = "gridgsp")]
struct PyMeasurementModel(MeasurementModel);

#[pymethods]
impl PyMeasurementModel {
    #[new]
    fn new(case: &PyGridCase, available: Vec<usize>, k: usize) -> PyResult<Self> {
        let op = spectral::build_gso(&case.0).map_err(err)?;
        fdi::build_measurement_model(&case.0, &op, &available, k).map(Self).map_err(err)
    }

    /// Stacked voltages and injected currents at the measured buses.
    fn measure(&self, v: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.0.measure(&v).map_err(err)
    }

    fn statistic(&self, z: Vec<Complex64>) -> PyResult<f64> {
        self.0.statistic(&z).map_err(err)
    }

    /// `(statistic, attacked)` for threshold `tau`.
    fn detect(&self, z: Vec<Complex64>, tau: f64) -> PyResult<(f64, bool)> {
        let (d, dec) = fdi::detect(&z, &self.0, tau).map_err(err)?;
        Ok((d, dec == Decision::Attack))
    }

    /// Sparse voltage perturbation explaining `z` within an l1 budget `mu`.
    fn isolate(&self, z: Vec<Complex64>, mu: f64) -> PyResult<Vec<Complex64>> {
        fdi::isolate(&z, &self.0, mu, &IsolationConfig::default()).map(|r| r.delta_v).map_err(err)
    }

    #[getter]
    fn available(&self) -> Vec<usize> {
        self.0.available().to_vec()
    }
}

/// Voltage perturbation on `compromised` that leaves the currents at every
/// honest measured bus unchanged.
#[pyfunction]
#[pyo3(signature = (case, available, compromised, scale = 1.0, seed = 0))]
fn craft_attack(case: &PyGridCase, available: Vec<usize>, compromised: Vec<usize>, scale: f64, seed: u64) -> PyResult<Vec<Complex64>> {
    fdi::craft_attack(&case.0, &available, &compromised, scale, seed).map(|a| a.delta_v).map_err(err)
}

/// Predictive GFT-domain codec fitted to a voltage series on `case`.
#[pyclass(name = "Codec", module = "gridgsp")]
struct PyCodec(CodecModel);

#[pymethods]
impl PyCodec {
    #[staticmethod]
    fn fit(case: &PyGridCase, frames: Frames) -> PyResult<Self> {
        let v = case_series(&case.0, &frames)?;
        CodecModel::fit(case.0.clone(), &v, &FitOptions::default()).map(Self).map_err(err)
    }

    /// Returns `(stream bytes, distortion)`.
    fn encode<'py>(&self, py: Python<'py>, frames: Frames, d_target: f64) -> PyResult<(Bound<'py, PyBytes>, f64)> {
        let v = case_series(self.0.case(), &frames)?;
        let enc = codec::encode(&v, &self.0, d_target).map_err(err)?;
        Ok((PyBytes::new(py, &enc.stream.to_bytes()), enc.distortion))
    }

    fn decode(&self, stream: &[u8]) -> PyResult<Frames> {
        let s = CodedStream::from_bytes(stream).map_err(err)?;
        codec::decode(&s, &self.0).map(|v| v.to_frames()).map_err(err)
    }

    /// `(d_target, rate, mse, baseline_mse)` per target.
    fn rate_distortion(&self, frames: Frames, targets: Vec<f64>) -> PyResult<Vec<(f64, f64, f64, f64)>> {
        let v = case_series(self.0.case(), &frames)?;
        let pts = codec::eval_rd(&v, &self.0, &targets).map_err(err)?;
        Ok(pts.iter().map(|p| (p.d_target, p.rate, p.mse, p.baseline_mse)).collect())
    }

    fn dynamics_json(&self) -> String {
        self.0.dynamics_json()
    }
}

#[pymodule]
fn _native(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGridCase>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyMeasurementModel>()?;
    m.add_class::<PyCodec>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_placement, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(nmse, m)?)?;
    m.add_function(wrap_pyfunction!(interpolate, m)?)?;
    m.add_function(wrap_pyfunction!(infer_gso, m)?)?;
    m.add_function(wrap_pyfunction!(craft_attack, m)?)?;
    Ok(())
}
