#![allow(dead_code)]

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};
use gridgsp::grid_model::{Branch, Bus, BusRole, GeneratorData, GridCase, PhasorKind, PhasorSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

pub fn random_c<R: Rng>(rng: &mut R) -> c64 {
    c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<c64> {
    (0..n).map(|_| random_c(rng)).collect()
}

/// Dense complex symmetric matrix with a dominant diagonal shift so that it
/// is comfortably invertible.
pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize, shift: f64) -> Mat<c64> {
    let mut m = Mat::<c64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let z = random_c(rng);
            m[(i, j)] = z;
            m[(j, i)] = z;
        }
        m[(i, i)] += c64::new(shift, shift);
    }
    m
}

/// Solves `a x = b` with faer's own LU, independent of the crate's wrappers.
pub fn solve(a: &Mat<c64>, b: &[c64]) -> Vec<c64> {
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = a.partial_piv_lu().solve(&rhs);
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}

pub fn mat_vec(a: &Mat<c64>, x: &[c64]) -> Vec<c64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect()
}

pub fn max_abs_diff(a: &[c64], b: &[c64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn norm(x: &[c64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn gen_bus(id: u64, y: c64, mass: f64) -> Bus {
    Bus {
        id,
        shunt: c(0.0, 0.0),
        role: BusRole::Generator(GeneratorData {
            admittance: y,
            mass,
            damping: 0.1 * mass,
        }),
    }
}

pub fn load_bus(id: u64, y: c64) -> Bus {
    Bus {
        id,
        shunt: c(0.0, 0.0),
        role: BusRole::Load { admittance: y },
    }
}

pub fn branch(from: usize, to: usize, y: c64) -> Branch {
    Branch { from, to, admittance: y }
}

/// Ring of `n` buses, every third a generator.
pub fn ring(n: usize) -> GridCase {
    let buses = (0..n)
        .map(|i| {
            if i % 3 == 0 {
                gen_bus(i as u64 + 1, c(0.0, -5.0), 5.0)
            } else {
                load_bus(i as u64 + 1, c(0.3, -0.1))
            }
        })
        .collect();
    let branches = (0..n).map(|i| branch(i, (i + 1) % n, c(1.0, -10.0 - i as f64))).collect();
    GridCase::new(buses, branches, 60.0).unwrap()
}

/// The two-bus example: generator with `y_g = -j10` tied to a bare bus by
/// `y12 = -j5`.
pub fn two_bus() -> GridCase {
    let buses = vec![gen_bus(1, c(0.0, -10.0), 1.0), load_bus(2, c(0.0, 0.0))];
    GridCase::new(buses, vec![branch(0, 1, c(0.0, -5.0))], 60.0).unwrap()
}

/// Smallest singular value through faer's SVD directly.
pub fn sigma_min(a: &Mat<c64>) -> f64 {
    a.singular_values().unwrap().into_iter().fold(f64::INFINITY, f64::min)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Runs every CLI subcommand on a small synthetic grid, writing each into
/// its own directory under `root`. Returns the exit codes in order.
pub fn cli_pipeline(root: &std::path::Path) -> Vec<(String, i32)> {
    let p = |sub: &str| root.join(sub).to_string_lossy().into_owned();
    let case = format!("{}/case.json", p("grid"));
    let v = format!("{}/v.csv", p("sim"));
    let i = format!("{}/i.csv", p("sim"));
    let dynamics = format!("{}/dynamics.json", p("sim"));
    let placement = format!("{}/placement.json", p("place"));
    let stream = format!("{}/stream.ggsp", p("compress"));
    let steps: Vec<(&str, Vec<String>)> = vec![
        ("gen-synthetic-grid", vec!["--n".into(), "40".into(), "--communities".into(), "4".into(), "--seed".into(), "7".into(), "--out".into(), p("grid")]),
        ("simulate", vec!["--case".into(), case.clone(), "--T".into(), "120".into(), "--seed".into(), "8".into(), "--out".into(), p("sim")]),
        ("spectrum", vec!["--case".into(), case.clone(), "--input".into(), v.clone(), "--out".into(), p("spectrum")]),
        ("place", vec!["--case".into(), case.clone(), "--K".into(), "4".into(), "--M".into(), "6".into(), "--input".into(), v.clone(), "--random-trials".into(), "10".into(), "--seed".into(), "3".into(), "--out".into(), p("place")]),
        ("reconstruct", vec!["--case".into(), case.clone(), "--placement".into(), placement, "--input".into(), v.clone(), "--out".into(), p("reconstruct")]),
        ("interpolate", vec!["--case".into(), case.clone(), "--input".into(), v.clone(), "--c-g".into(), "1e-4".into(), "--c-t".into(), "1".into(), "--seed".into(), "4".into(), "--out".into(), p("interpolate")]),
        ("infer", vec!["--input".into(), v.clone(), "--currents".into(), i, "--alpha".into(), "2".into(), "--beta".into(), "-20".into(), "--current-weight".into(), "1e3".into(), "--out".into(), p("infer")]),
        ("fdi", vec!["--case".into(), case.clone(), "--mode".into(), "roc".into(), "--trials".into(), "40".into(), "--seed".into(), "5".into(), "--out".into(), p("fdi-roc")]),
        ("fdi", vec!["--case".into(), case.clone(), "--mode".into(), "detect".into(), "--trials".into(), "40".into(), "--seed".into(), "5".into(), "--out".into(), p("fdi-detect")]),
        ("fdi", vec!["--case".into(), case.clone(), "--mode".into(), "isolate".into(), "--available-fraction".into(), "0.5".into(), "--seed".into(), "5".into(), "--out".into(), p("fdi-isolate")]),
        ("compress", vec!["--case".into(), case.clone(), "--dynamics".into(), dynamics.clone(), "--input".into(), v.clone(), "--distortion".into(), "1e-6".into(), "--out".into(), p("compress")]),
        ("compress", vec!["--case".into(), case.clone(), "--input".into(), v.clone(), "--distortion".into(), "1e-6".into(), "--out".into(), p("compress-fit")]),
        ("decompress", vec!["--case".into(), case.clone(), "--dynamics".into(), dynamics.clone(), "--stream".into(), stream, "--out".into(), p("decompress")]),
        ("eval-rd", vec!["--case".into(), case, "--dynamics".into(), dynamics, "--input".into(), v, "--grid".into(), "1e-5:1e-7:3".into(), "--out".into(), p("eval-rd")]),
    ];
    steps
        .into_iter()
        .map(|(sub, args)| {
            let argv = std::iter::once("gridgsp".to_string()).chain(std::iter::once(sub.to_string())).chain(args);
            (sub.to_string(), gridgsp::cli::run(argv))
        })
        .collect()
}

/// Every file under `dir` with its contents, keyed by relative path.
pub fn tree(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// `T` snapshots with random current injections, `v = S^{-1} i`, and
/// complex noise of relative std `rel` on both.
pub fn snapshots(case: &GridCase, t: usize, rel: f64, seed: u64) -> (PhasorSeries, PhasorSeries) {
    let op = gridgsp::spectral::build_gso(case).unwrap();
    let n = case.n_buses();
    let mut r = rng(seed);
    let (mut vs, mut is) = (Vec::new(), Vec::new());
    for _ in 0..t {
        let i = random_vec(&mut r, n);
        vs.extend(op.solve(&i).unwrap());
        is.extend(i);
    }
    let mut noise = gridgsp::rng::seeded(seed ^ 0x5eed);
    let mut perturb = |x: Vec<c64>| -> Vec<c64> {
        let rms = (x.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64).sqrt();
        x.into_iter().map(|z| z + gridgsp::rng::complex_normal(&mut noise, rel * rms)).collect()
    };
    let ids = case.bus_ids();
    (
        PhasorSeries::new(perturb(vs), ids.clone(), 30.0, PhasorKind::Voltage).unwrap(),
        PhasorSeries::new(perturb(is), ids, 30.0, PhasorKind::Current).unwrap(),
    )
}
