//! Batch command-line front end.
//!
//! Every subcommand writes its artifacts into `--out` together with a
//! `manifest.json` holding the parsed configuration, the tool version and
//! the SHA-256 of each artifact. Exit codes: 0 success, 1 compute error,
//! 2 usage error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use faer::c64;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::codec::{self, CodecModel, CodedStream};
use crate::error::{GspError, Result};
use crate::fdi::{self, AttackScenario, IsolationConfig};
use crate::grid_model::{load_case, load_phasor_csv, GridCase, PhasorKind, PhasorSeries};
use crate::recovery::{infer_gso, interpolate, interpolate_auto, InferenceConfig, InterpolationConfig, ObservationMask};
use crate::rng::{sample_subset, seeded};
use crate::sampling::{self, greedy_placement, random_placement_stats, Reconstructor};
use crate::spectral::{build_gso, FilterSpec, SpectralOperator};
use crate::synthesis::{
    excitation, generate_synthetic_grid, joint_spectrum, simulate_scenario, FitOptions, SimulationConfig,
    SyntheticGridConfig,
};

#[derive(Parser, Debug)]
#[command(name = "gridgsp", version, about = "Graph signal processing for power-grid phasor data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Generate a community-structured synthetic grid case.
    GenSyntheticGrid(GenGridArgs),
    /// Simulate voltages, internal voltages and bus current injections.
    Simulate(SimulateArgs),
    /// GSO eigenvalues, diagnostics and optionally the spectrum of a series.
    Spectrum(SpectrumArgs),
    /// Greedy E-optimal PMU placement.
    Place(PlaceArgs),
    /// Reconstruct a series from the buses of a placement.
    Reconstruct(ReconstructArgs),
    /// Fill missing samples of a series.
    Interpolate(InterpolateArgs),
    /// Estimate the GSO from voltages (and optionally currents).
    Infer(InferArgs),
    /// False data injection detection, ROC and isolation.
    Fdi(FdiArgs),
    /// Encode a voltage series.
    Compress(CompressArgs),
    /// Decode a stream written by `compress`.
    Decompress(DecompressArgs),
    /// Rate-distortion sweep against scalar quantization.
    EvalRd(EvalRdArgs),
}

#[derive(Args, Debug, Serialize)]
struct OutArg {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct GenGridArgs {
    #[arg(long, default_value_t = 120)]
    n: usize,
    #[arg(long, default_value_t = 6)]
    communities: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long = "T", visible_alias = "frames", default_value_t = 300)]
    frames: usize,
    #[arg(long, default_value_t = 30.0)]
    rate_hz: f64,
    #[arg(long, default_value_t = 1e-4)]
    meas_noise: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
}

#[derive(Args, Debug, Serialize)]
struct SpectrumArgs {
    #[arg(long)]
    case: PathBuf,
    /// Voltage CSV whose GFT energy and joint spectrum are reported.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
}

#[derive(Args, Debug, Serialize)]
struct PlaceArgs {
    #[arg(long)]
    case: PathBuf,
    /// Bandwidth: number of lowest graph frequencies.
    #[arg(long = "K", visible_alias = "k")]
    k: usize,
    /// Number of PMUs.
    #[arg(long = "M", visible_alias = "m")]
    m: usize,
    /// Voltage CSV for reconstruction NMSE of the placement.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Random placements to compare against (requires --input and --seed).
    #[arg(long, default_value_t = 0)]
    random_trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
}

#[derive(Args, Debug, Serialize)]
struct ReconstructArgs {
    #[arg(long)]
    case: PathBuf,
    /// placement.json written by `place`.
    #[arg(long)]
    placement: PathBuf,
    /// Voltage CSV of either every bus or only the placed buses.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
}

#[derive(Args, Debug, Serialize)]
struct InterpolateArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// CSV of observed `t,bus` index pairs. Without it a random mask is drawn.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    drop_rate: f64,
    #[arg(long, default_value_t = 5)]
    gap: usize,
    /// Graph smoothness weight; omit both weights to select them by validation.
    #[arg(long)]
    c_g: Option<f64>,
    /// Temporal smoothness weight.
    #[arg(long)]
    c_t: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
}

#[derive(Args, Debug, Serialize)]
struct InferArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    currents: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    current_weight: f64,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FdiMode {
    /// Monte Carlo ROC of the projection statistic.
    Roc,
    /// Per-frame statistic and decision, clean and attacked.
    Detect,
    /// Sparse recovery of the attack support on one frame.
    Isolate,
}

#[derive(Args, Debug, Serialize)]
struct FdiArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long, value_enum, default_value_t = FdiMode::Roc)]
    mode: FdiMode,
    /// Voltage CSV of states; without it low-pass states are simulated.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Detector bandwidth.
    #[arg(long = "K", visible_alias = "k", default_value_t = 10)]
    k: usize,
    /// Fraction of buses with a PMU.
    #[arg(long, default_value_t = 0.25)]
    available_fraction: f64,
    /// Fraction of measured buses the attacker controls.
    #[arg(long, default_value_t = 0.1)]
    attack_fraction: f64,
    /// Norm of the voltage perturbation.
    #[arg(long, default_value_t = 0.02)]
    scale: f64,
    /// Noise std relative to the RMS of the clean measurement.
    #[arg(long, default_value_t = 1e-2)]
    noise: f64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Detection threshold; calibrated on clean statistics if omitted.
    #[arg(long)]
    tau: Option<f64>,
    /// l1 budget for isolation; defaults to the l1 norm of the crafted attack.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
}

#[derive(Args, Debug, Serialize)]
struct ModelArgs {
    #[arg(long)]
    case: PathBuf,
    /// Dynamics JSON (as written by `simulate` or `compress`); fitted to the input if omitted.
    #[arg(long)]
    dynamics: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CompressArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long)]
    input: PathBuf,
    /// Per-sample MSE target.
    #[arg(long)]
    distortion: f64,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
}

#[derive(Args, Debug, Serialize)]
struct DecompressArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    dynamics: PathBuf,
    #[arg(long)]
    stream: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
}

#[derive(Args, Debug, Serialize)]
struct EvalRdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long)]
    input: PathBuf,
    /// Distortion targets: `a,b,c` or log-spaced `hi:lo:count`.
    #[arg(long, default_value = "1e-5:1e-8:13")]
    grid: String,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    faer::set_global_parallelism(faer::Par::Seq);
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                GspError::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}

fn usage(msg: impl Into<String>) -> GspError {
    GspError::Usage(msg.into())
}

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64> {
    seed.ok_or_else(|| usage(format!("--seed is required for {what}")))
}

fn check_inputs(paths: &[Option<&Path>]) -> Result<()> {
    for p in paths.iter().flatten() {
        if !p.is_file() {
            return Err(usage(format!("input file not found: {}", p.display())));
        }
    }
    Ok(())
}

struct Artifacts {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        if dir.exists() && !dir.is_dir() {
            return Err(usage(format!("--out is not a directory: {}", dir.display())));
        }
        std::fs::create_dir_all(dir).map_err(|e| GspError::io(dir, e))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| GspError::io(&path, e))?;
        self.hashes.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("json value");
        text.push('\n');
        self.write(name, text)
    }

    fn finish(self, command: &Command) -> Result<()> {
        let manifest = json!({
            "tool": "gridgsp",
            "version": env!("CARGO_PKG_VERSION"),
            "config": command,
            "outputs": self.hashes,
        });
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| GspError::io(&path, e))
    }
}

fn execute(cmd: &Command) -> Result<()> {
    let mut art = match cmd {
        Command::GenSyntheticGrid(a) => prepare(&a.out, &[])?,
        Command::Simulate(a) => prepare(&a.out, &[Some(&a.case)])?,
        Command::Spectrum(a) => prepare(&a.out, &[Some(&a.case), a.input.as_deref()])?,
        Command::Place(a) => prepare(&a.out, &[Some(&a.case), a.input.as_deref()])?,
        Command::Reconstruct(a) => prepare(&a.out, &[Some(&a.case), Some(&a.placement), Some(&a.input)])?,
        Command::Interpolate(a) => prepare(&a.out, &[Some(&a.case), Some(&a.input), a.mask.as_deref()])?,
        Command::Infer(a) => prepare(&a.out, &[Some(&a.input), a.currents.as_deref()])?,
        Command::Fdi(a) => prepare(&a.out, &[Some(&a.case), a.input.as_deref()])?,
        Command::Compress(a) => prepare(&a.out, &[Some(&a.model.case), a.model.dynamics.as_deref(), Some(&a.input)])?,
        Command::Decompress(a) => prepare(&a.out, &[Some(&a.case), Some(&a.dynamics), Some(&a.stream)])?,
        Command::EvalRd(a) => prepare(&a.out, &[Some(&a.model.case), a.model.dynamics.as_deref(), Some(&a.input)])?,
    };
    match cmd {
        Command::GenSyntheticGrid(a) => gen_grid(a, &mut art)?,
        Command::Simulate(a) => simulate(a, &mut art)?,
        Command::Spectrum(a) => spectrum(a, &mut art)?,
        Command::Place(a) => place(a, &mut art)?,
        Command::Reconstruct(a) => reconstruct(a, &mut art)?,
        Command::Interpolate(a) => interpolate_cmd(a, &mut art)?,
        Command::Infer(a) => infer(a, &mut art)?,
        Command::Fdi(a) => fdi_cmd(a, &mut art)?,
        Command::Compress(a) => compress(a, &mut art)?,
        Command::Decompress(a) => decompress(a, &mut art)?,
        Command::EvalRd(a) => eval_rd(a, &mut art)?,
    }
    art.finish(cmd)
}

fn prepare(out: &OutArg, inputs: &[Option<&Path>]) -> Result<Artifacts> {
    check_inputs(inputs)?;
    Artifacts::new(&out.out)
}

fn phasor_csv(series: &PhasorSeries) -> String {
    crate::grid_model::format_phasor_csv(series)
}

fn fmt_c(z: c64) -> String {
    format!("{:e},{:e}", z.re, z.im)
}

fn gen_grid(a: &GenGridArgs, art: &mut Artifacts) -> Result<()> {
    let seed = require_seed(a.seed, "gen-synthetic-grid")?;
    let cfg = SyntheticGridConfig {
        n_buses: a.n,
        communities: a.communities,
        ..Default::default()
    };
    let g = generate_synthetic_grid(&cfg, seed)?;
    art.write("case.json", g.case.to_json_string())?;
    let mut csv = String::from("bus_id,community\n");
    for (id, c) in g.case.bus_ids().iter().zip(&g.communities) {
        let _ = writeln!(csv, "{id},{c}");
    }
    art.write("communities.csv", csv)
}

fn simulate(a: &SimulateArgs, art: &mut Artifacts) -> Result<()> {
    let seed = require_seed(a.seed, "simulate")?;
    let case = load_case(&a.case)?;
    let cfg = SimulationConfig {
        frames: a.frames,
        rate_hz: a.rate_hz,
        meas_noise: a.meas_noise,
        ..Default::default()
    };
    let sc = simulate_scenario(&case, &cfg, seed)?;
    art.write("v.csv", phasor_csv(&sc.v))?;
    art.write("e.csv", phasor_csv(&sc.e))?;
    let mut inj = Vec::with_capacity(sc.v.values().len());
    for t in 0..sc.v.len() {
        inj.extend(excitation(&case, sc.e.frame(t), sc.loads.frame(t))?);
    }
    let inj = PhasorSeries::new(inj, case.bus_ids(), sc.v.rate_hz(), PhasorKind::Current)?;
    art.write("i.csv", phasor_csv(&inj))?;
    art.write("load_currents.csv", phasor_csv(&sc.loads))?;
    let model = CodecModel::new(case, sc.gen_dynamics, sc.load_dynamics)?;
    art.write("dynamics.json", model.dynamics_json())
}

fn spectrum(a: &SpectrumArgs, art: &mut Artifacts) -> Result<()> {
    let case = load_case(&a.case)?;
    let op = build_gso(&case)?;
    let mut csv = String::from("k,re,im,abs\n");
    for (k, l) in op.eigenvalues().iter().enumerate() {
        let _ = writeln!(csv, "{k},{},{:e}", fmt_c(*l), l.norm());
    }
    art.write("eigenvalues.csv", csv)?;
    let d = op.diagnostics();
    art.json(
        "diagnostics.json",
        &json!({
            "n": op.dim(),
            "spectral_residual": d.spectral_residual,
            "orthogonality_residual": d.orthogonality_residual,
            "min_abs_eigenvalue": d.min_abs_eigenvalue,
            "max_abs_eigenvalue": d.max_abs_eigenvalue,
        }),
    )?;
    if let Some(input) = &a.input {
        let v = load_phasor_csv(input, PhasorKind::Voltage)?;
        check_buses(&case, &v)?;
        let mut energy = vec![0.0; op.dim()];
        for f in v.frames() {
            for (e, x) in energy.iter_mut().zip(op.gft(f)?) {
                *e += x.norm_sqr();
            }
        }
        let total: f64 = energy.iter().sum();
        let mut csv = String::from("k,energy,fraction,cumulative\n");
        let mut cum = 0.0;
        for (k, e) in energy.iter().enumerate() {
            cum += e / total;
            let _ = writeln!(csv, "{k},{e:e},{:e},{cum:e}", e / total);
        }
        art.write("gft_energy.csv", csv)?;
        let spec = joint_spectrum(&v, &op)?;
        let mut csv = String::from("k");
        for f in 0..v.len() {
            let _ = write!(csv, ",f{f}");
        }
        csv.push('\n');
        for (k, row) in spec.iter().enumerate() {
            let _ = write!(csv, "{k}");
            for p in row {
                let _ = write!(csv, ",{p:e}");
            }
            csv.push('\n');
        }
        art.write("joint_spectrum.csv", csv)?;
    }
    Ok(())
}

fn check_buses(case: &GridCase, v: &PhasorSeries) -> Result<()> {
    if v.bus_ids() != case.bus_ids().as_slice() {
        return Err(GspError::invalid("series", "bus ids must match the case in order"));
    }
    Ok(())
}

fn place(a: &PlaceArgs, art: &mut Artifacts) -> Result<()> {
    if a.random_trials > 0 && a.input.is_none() {
        return Err(usage("--random-trials needs --input"));
    }
    let seed = if a.random_trials > 0 {
        Some(require_seed(a.seed, "random placements")?)
    } else {
        None
    };
    let case = load_case(&a.case)?;
    let op = build_gso(&case)?;
    let p = greedy_placement(&op, a.k, a.m)?;
    let ids = case.bus_ids();
    let mut summary = json!({
        "K": a.k,
        "M": a.m,
        "band": p.band,
        "selected": p.selected,
        "selected_bus_ids": p.selected.iter().map(|&i| ids[i]).collect::<Vec<_>>(),
        "sigma_min": p.sigma_min,
    });
    if let Some(input) = &a.input {
        let v = load_phasor_csv(input, PhasorKind::Voltage)?;
        check_buses(&case, &v)?;
        summary["nmse"] = json!(sampling::placement_nmse(&op, &p.band, &p.selected, &v)?);
        if let Some(seed) = seed {
            let st = random_placement_stats(&op, &p.band, a.m, &v, a.random_trials, seed)?;
            let mut csv = String::from("trial,nmse\n");
            for (t, e) in st.nmse.iter().enumerate() {
                let _ = writeln!(csv, "{t},{e:e}");
            }
            art.write("random_placements.csv", csv)?;
            summary["random_median_nmse"] = finite_or_null(st.median);
            summary["random_mode_nmse"] = finite_or_null(st.mode);
        }
    }
    art.json("placement.json", &summary)
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

fn reconstruct(a: &ReconstructArgs, art: &mut Artifacts) -> Result<()> {
    let case = load_case(&a.case)?;
    let text = std::fs::read_to_string(&a.placement).map_err(|e| GspError::io(&a.placement, e))?;
    let p: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| GspError::Parse(format!("{}: {e}", a.placement.display())))?;
    let indices = |key: &str| -> Result<Vec<usize>> {
        p[key]
            .as_array()
            .ok_or_else(|| GspError::Parse(format!("placement: missing `{key}`")))?
            .iter()
            .map(|x| x.as_u64().map(|u| u as usize).ok_or_else(|| GspError::Parse(format!("placement: bad `{key}` entry"))))
            .collect()
    };
    let band = indices("band")?;
    let rows = indices("selected")?;
    let v = load_phasor_csv(&a.input, PhasorKind::Voltage)?;
    let ids = case.bus_ids();
    if rows.iter().any(|&r| r >= ids.len()) {
        return Err(GspError::invalid("placement", "bus index out of range"));
    }
    let sel_ids: Vec<u64> = rows.iter().map(|&r| ids[r]).collect();
    // Either the full series or only the placed buses, in placement order.
    let full = v.bus_ids() == ids.as_slice();
    if !full && v.bus_ids() != sel_ids.as_slice() {
        return Err(GspError::invalid("series", "bus ids must match the case or the placement"));
    }
    let op = build_gso(&case)?;
    let rec = Reconstructor::new(&op, &band, &rows)?;
    let mut values = Vec::with_capacity(v.len() * ids.len());
    for f in v.frames() {
        let samples: Vec<c64> = if full { rows.iter().map(|&r| f[r]).collect() } else { f.to_vec() };
        values.extend(rec.apply(&samples)?);
    }
    let out = PhasorSeries::new(values, ids, v.rate_hz(), PhasorKind::Voltage)?;
    art.write("reconstructed.csv", phasor_csv(&out))?;
    let nmse = if full { json!(sampling::nmse(v.values(), out.values())) } else { serde_json::Value::Null };
    art.json(
        "summary.json",
        &json!({
            "sigma_min": rec.sigma_min,
            "nmse": nmse,
        }),
    )
}

fn interpolate_cmd(a: &InterpolateArgs, art: &mut Artifacts) -> Result<()> {
    let auto = match (a.c_g, a.c_t) {
        (Some(_), Some(_)) => false,
        (None, None) => true,
        _ => return Err(usage("give both --c-g and --c-t, or neither")),
    };
    let case = load_case(&a.case)?;
    let v = load_phasor_csv(&a.input, PhasorKind::Voltage)?;
    check_buses(&case, &v)?;
    let op = build_gso(&case)?;
    let (t, n) = (v.len(), v.n_buses());
    let mask = match &a.mask {
        Some(path) => ObservationMask::load_csv(path, t, n)?,
        None => {
            let seed = require_seed(a.seed, "a random mask")?;
            let m = ObservationMask::random(t, n, a.drop_rate, a.gap, seed)?;
            art.write("mask.csv", m.to_csv())?;
            m
        }
    };
    let cfg = InterpolationConfig::default();
    let res = if auto {
        interpolate_auto(&v, &mask, &op, &cfg, require_seed(a.seed, "weight selection")?)?
    } else {
        interpolate(&v, &mask, &op, a.c_g.unwrap(), a.c_t.unwrap(), &cfg)?
    };
    art.write("interpolated.csv", phasor_csv(&res.series))?;
    let missing: Vec<usize> = (0..t * n).filter(|&k| !mask.flags()[k]).collect();
    let missing_nmse = if missing.is_empty() {
        serde_json::Value::Null
    } else {
        let truth: Vec<c64> = missing.iter().map(|&k| v.values()[k]).collect();
        let est: Vec<c64> = missing.iter().map(|&k| res.series.values()[k]).collect();
        json!(sampling::nmse(&truth, &est))
    };
    art.json(
        "summary.json",
        &json!({
            "c_g": res.c_g,
            "c_t": res.c_t,
            "iterations": res.iterations,
            "primal_residual": res.primal_residual,
            "dual_residual": res.dual_residual,
            "objective": res.objective,
            "observed": mask.observed_count(),
            "nmse_vs_input": sampling::nmse(v.values(), res.series.values()),
            "nmse_missing_vs_input": missing_nmse,
        }),
    )
}

fn infer(a: &InferArgs, art: &mut Artifacts) -> Result<()> {
    let v = load_phasor_csv(&a.input, PhasorKind::Voltage)?;
    let i = match &a.currents {
        Some(p) => Some(load_phasor_csv(p, PhasorKind::Current)?),
        None => None,
    };
    let mut cfg = InferenceConfig::new(a.alpha, a.beta);
    cfg.gamma = a.gamma;
    cfg.current_fit_weight = a.current_weight;
    let res = infer_gso(&v, i.as_ref(), &cfg)?;
    let s = res.op.matrix();
    let ids = v.bus_ids();
    let mut csv = String::from("row_id,col_id,re,im\n");
    for r in 0..s.nrows() {
        for c in 0..s.ncols() {
            let _ = writeln!(csv, "{},{},{}", ids[r], ids[c], fmt_c(s[(r, c)]));
        }
    }
    art.write("gso.csv", csv)?;
    art.json(
        "summary.json",
        &json!({
            "iterations": res.iterations,
            "primal_residual": res.primal_residual,
            "dual_residual": res.dual_residual,
            "objective": res.objective,
        }),
    )
}

/// Clean states for the detector: the input frames, or `H_K(S)` applied to
/// simulated excitations.
fn fdi_states(case: &GridCase, op: &SpectralOperator, a: &FdiArgs, seed: u64) -> Result<Vec<Vec<c64>>> {
    if let Some(path) = &a.input {
        let v = load_phasor_csv(path, PhasorKind::Voltage)?;
        check_buses(case, &v)?;
        return Ok(v.to_frames());
    }
    let cfg = SimulationConfig {
        frames: a.trials.max(2),
        ..Default::default()
    };
    let sc = simulate_scenario(case, &cfg, seed)?;
    (0..sc.v.len())
        .map(|t| op.apply_filter(&FilterSpec::LowPass(a.k), &excitation(case, sc.e.frame(t), sc.loads.frame(t))?))
        .collect()
}

/// Measured buses and a compromised subset admitting a stealthy attack.
/// Compromised sets are redrawn until the null space of `Y_PC` is
/// nontrivial.
fn fdi_sets(case: &GridCase, a: &FdiArgs, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(a.available_fraction > 0.0 && a.available_fraction <= 1.0) || !(a.attack_fraction > 0.0 && a.attack_fraction <= 1.0) {
        return Err(usage("fractions must lie in (0, 1]"));
    }
    let n = case.n_buses();
    let mut rng = seeded(seed);
    let na = ((a.available_fraction * n as f64).round() as usize).clamp(1, n);
    let mut avail = sample_subset(&mut rng, n, na);
    avail.sort_unstable();
    let nc = ((a.attack_fraction * na as f64).round() as usize).clamp(1, na);
    for _ in 0..FDI_DRAWS {
        let mut comp: Vec<usize> = sample_subset(&mut rng, na, nc).into_iter().map(|i| avail[i]).collect();
        comp.sort_unstable();
        match fdi::craft_attack(case, &avail, &comp, 1.0, 0) {
            Ok(_) => return Ok((avail, comp)),
            Err(GspError::NoUnobservableAttack) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(GspError::NoUnobservableAttack)
}

const FDI_DRAWS: usize = 1000;

fn fdi_cmd(a: &FdiArgs, art: &mut Artifacts) -> Result<()> {
    let seed = require_seed(a.seed, "fdi")?;
    let case = load_case(&a.case)?;
    let op = build_gso(&case)?;
    let (avail, comp) = fdi_sets(&case, a, seed)?;
    let model = fdi::build_measurement_model(&case, &op, &avail, a.k)?;
    let states = fdi_states(&case, &op, a, seed.wrapping_add(1))?;
    let ids = case.bus_ids();
    let mut summary = json!({
        "available_bus_ids": avail.iter().map(|&i| ids[i]).collect::<Vec<_>>(),
        "compromised_bus_ids": comp.iter().map(|&i| ids[i]).collect::<Vec<_>>(),
    });
    match a.mode {
        FdiMode::Roc => {
            let attacks: Vec<AttackScenario> = (0..a.trials.clamp(1, 16))
                .map(|j| fdi::craft_attack(&case, &avail, &comp, a.scale, seed.wrapping_add(100 + j as u64)))
                .collect::<Result<_>>()?;
            let roc = fdi::roc_curve(&model, &states, &attacks, a.noise, a.trials, seed.wrapping_add(2))?;
            let mut csv = String::from("false_alarm,detection\n");
            for (fa, pd) in &roc.points {
                let _ = writeln!(csv, "{fa:e},{pd:e}");
            }
            art.write("roc.csv", csv)?;
            art.write("statistics.csv", statistics_csv(&roc.h0, &roc.h1))?;
            summary["auc"] = json!(roc.auc);
            summary["tau"] = json!(fdi::calibrate_threshold(&roc.h0, fdi::DEFAULT_THRESHOLD_QUANTILE)?);
            summary["unobservability_residual"] = json!(max_residual(&case, &attacks));
        }
        FdiMode::Detect => {
            let attack = fdi::craft_attack(&case, &avail, &comp, a.scale, seed.wrapping_add(100))?;
            let shift = attack.measurement_shift(&model)?;
            let mut rng = seeded(seed.wrapping_add(2));
            let (mut h0, mut h1) = (Vec::new(), Vec::new());
            for v in &states {
                let z = noisy(&model.measure(v)?, a.noise, &mut rng);
                h0.push(model.statistic(&z)?);
                let za: Vec<c64> = z.iter().zip(&shift).map(|(x, s)| x + s).collect();
                h1.push(model.statistic(&za)?);
            }
            let tau = match a.tau {
                Some(t) => t,
                None => fdi::calibrate_threshold(&h0, fdi::DEFAULT_THRESHOLD_QUANTILE)?,
            };
            let mut csv = String::from("t,statistic_clean,decision_clean,statistic_attacked,decision_attacked\n");
            for (t, (d0, d1)) in h0.iter().zip(&h1).enumerate() {
                let _ = writeln!(csv, "{t},{d0:e},{},{d1:e},{}", decision(*d0, tau), decision(*d1, tau));
            }
            art.write("statistics.csv", csv)?;
            summary["tau"] = json!(tau);
            summary["false_alarm_rate"] = json!(h0.iter().filter(|&&d| d > tau).count() as f64 / h0.len() as f64);
            summary["detection_rate"] = json!(h1.iter().filter(|&&d| d > tau).count() as f64 / h1.len() as f64);
            summary["unobservability_residual"] = json!(attack.honest_current_change(&case));
        }
        FdiMode::Isolate => {
            let attack = fdi::craft_attack(&case, &avail, &comp, a.scale, seed.wrapping_add(100))?;
            let shift = attack.measurement_shift(&model)?;
            let mut rng = seeded(seed.wrapping_add(2));
            let z: Vec<c64> = noisy(&model.measure(&states[0])?, a.noise, &mut rng)
                .iter()
                .zip(&shift)
                .map(|(x, s)| x + s)
                .collect();
            let mu = a.mu.unwrap_or_else(|| attack.delta_v.iter().map(|x| x.norm()).sum());
            let res = fdi::isolate(&z, &model, mu, &IsolationConfig::default())?;
            let truth = attack.support();
            let est = fdi::estimated_support(&res.delta_v, 1e-3);
            let mut csv = String::from("bus_id,true_abs,estimated_abs\n");
            for &i in &avail {
                let _ = writeln!(csv, "{},{:e},{:e}", ids[i], attack.delta_v[i].norm(), res.delta_v[i].norm());
            }
            art.write("isolation.csv", csv)?;
            summary["mu"] = json!(mu);
            summary["iterations"] = json!(res.iterations);
            summary["objective"] = json!(res.objective);
            summary["true_support_bus_ids"] = json!(truth.iter().map(|&i| ids[i]).collect::<Vec<_>>());
            summary["estimated_support_bus_ids"] = json!(est.iter().map(|&i| ids[i]).collect::<Vec<_>>());
            summary["support_f1"] = json!(fdi::set_f1(&est, &truth));
        }
    }
    art.json("summary.json", &summary)
}

fn decision(d: f64, tau: f64) -> &'static str {
    if d > tau {
        "attack"
    } else {
        "no_attack"
    }
}

fn noisy(z: &[c64], rel: f64, rng: &mut crate::rng::SeededRng) -> Vec<c64> {
    let rms = (z.iter().map(|x| x.norm_sqr()).sum::<f64>() / z.len() as f64).sqrt();
    z.iter().map(|&x| x + crate::rng::complex_normal(rng, rel * rms)).collect()
}

fn max_residual(case: &GridCase, attacks: &[AttackScenario]) -> f64 {
    attacks.iter().map(|a| a.honest_current_change(case)).fold(0.0, f64::max)
}

fn statistics_csv(h0: &[f64], h1: &[f64]) -> String {
    let mut csv = String::from("trial,h0,h1\n");
    for (t, (a, b)) in h0.iter().zip(h1).enumerate() {
        let _ = writeln!(csv, "{t},{a:e},{b:e}");
    }
    csv
}

fn codec_model(m: &ModelArgs, v: &PhasorSeries) -> Result<CodecModel> {
    let case = load_case(&m.case)?;
    check_buses(&case, v)?;
    match &m.dynamics {
        Some(path) => CodecModel::load_dynamics_file(case, path),
        None => CodecModel::fit(case, v, &FitOptions::default()),
    }
}

fn compress(a: &CompressArgs, art: &mut Artifacts) -> Result<()> {
    if !(a.distortion.is_finite() && a.distortion > 0.0) {
        return Err(usage("--distortion must be positive"));
    }
    let v = load_phasor_csv(&a.input, PhasorKind::Voltage)?;
    let model = codec_model(&a.model, &v)?;
    let enc = codec::encode(&v, &model, a.distortion)?;
    let bytes = enc.stream.to_bytes();
    art.write("stream.ggsp", &bytes)?;
    art.write("dynamics.json", model.dynamics_json())?;
    art.json(
        "summary.json",
        &json!({
            "frames": v.len(),
            "buses": v.n_buses(),
            "bytes": bytes.len(),
            "rate_bits_per_sample": (bytes.len() * 8) as f64 / (v.len() * v.n_buses()) as f64,
            "distortion": enc.distortion,
        }),
    )
}

fn decompress(a: &DecompressArgs, art: &mut Artifacts) -> Result<()> {
    let case = load_case(&a.case)?;
    let model = CodecModel::load_dynamics_file(case, &a.dynamics)?;
    let bytes = std::fs::read(&a.stream).map_err(|e| GspError::io(&a.stream, e))?;
    let stream = CodedStream::from_bytes(&bytes)?;
    let v = codec::decode(&stream, &model)?;
    art.write("decoded.csv", phasor_csv(&v))
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || usage(format!("bad --grid {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|x| x.is_finite() && *x > 0.0);
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [hi, lo, count] => {
            let (hi, lo) = (num(hi).ok_or_else(bad)?, num(lo).ok_or_else(bad)?);
            let count: usize = count.trim().parse().map_err(|_| bad())?;
            match count {
                0 => return Err(bad()),
                1 => vec![hi],
                _ => (0..count)
                    .map(|k| 10f64.powf(hi.log10() + (lo.log10() - hi.log10()) * k as f64 / (count - 1) as f64))
                    .collect(),
            }
        }
        [list] => list.split(',').map(|s| num(s).ok_or_else(bad)).collect::<Result<_>>()?,
        _ => return Err(bad()),
    };
    Ok(grid)
}

fn eval_rd(a: &EvalRdArgs, art: &mut Artifacts) -> Result<()> {
    let grid = parse_grid(&a.grid)?;
    let v = load_phasor_csv(&a.input, PhasorKind::Voltage)?;
    let model = codec_model(&a.model, &v)?;
    let rd = codec::eval_rd(&v, &model, &grid)?;
    let mut csv = String::from("d_target,rate,mse,baseline_mse,gain_db\n");
    for p in &rd {
        let _ = writeln!(
            csv,
            "{:e},{:e},{:e},{:e},{:e}",
            p.d_target,
            p.rate,
            p.mse,
            p.baseline_mse,
            10.0 * (p.baseline_mse / p.mse).log10()
        );
    }
    art.write("rd.csv", csv)
}
