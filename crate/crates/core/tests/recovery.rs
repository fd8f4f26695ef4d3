mod common;

use common::*;
use faer::c64;
use gridgsp::grid_model::{GridCase, PhasorKind, PhasorSeries};
use gridgsp::linalg;
use gridgsp::recovery::*;
use gridgsp::sampling::nmse;
use gridgsp::spectral::{build_gso, kron_reduce};
use gridgsp::synthesis::{generate_synthetic_grid, simulate_scenario, SimulationConfig, SyntheticGridConfig};

fn interpolation_case(seed: u64) -> (GridCase, PhasorSeries, ObservationMask) {
    let cfg = SyntheticGridConfig {
        n_buses: 40,
        communities: 4,
        ..Default::default()
    };
    let g = generate_synthetic_grid(&cfg, seed).unwrap();
    let sim = SimulationConfig {
        frames: 200,
        meas_noise: 0.0,
        ..Default::default()
    };
    let sc = simulate_scenario(&g.case, &sim, seed).unwrap();
    // Relative noise 1e-4 of the RMS voltage.
    let rms = (sc.v.values().iter().map(|z| z.norm_sqr()).sum::<f64>() / sc.v.values().len() as f64).sqrt();
    let mut r = gridgsp::rng::seeded(seed + 100);
    let noisy: Vec<c64> = sc.v.values().iter().map(|&z| z + gridgsp::rng::complex_normal(&mut r, 1e-4 * rms)).collect();
    let v = PhasorSeries::new(noisy, sc.v.bus_ids().to_vec(), sc.v.rate_hz(), PhasorKind::Voltage).unwrap();
    let mask = ObservationMask::random(200, 40, 0.5, 10, seed).unwrap();
    (g.case, v, mask)
}

#[test]
fn interpolation_with_half_missing() {
    let (case, v, mask) = interpolation_case(1);
    assert_eq!(mask.observed_count(), 4000);
    let op = build_gso(&case).unwrap();
    let res = interpolate(&v, &mask, &op, 1e-4, 1.0, &InterpolationConfig::default()).unwrap();
    let e = nmse(v.values(), res.series.values());
    assert!(e <= 1e-2, "nmse {e:e}");
}

#[test]
fn interpolation_on_reduced_graph() {
    let (case, v, _) = interpolation_case(2);
    let op = build_gso(&case).unwrap();
    let keep: Vec<usize> = (0..40).step_by(2).collect();
    let red = kron_reduce(&op, &keep).unwrap();
    let sub = v.select_buses(&keep);
    let mask = ObservationMask::random(sub.len(), keep.len(), 0.3, 5, 4).unwrap();
    let res = interpolate(&sub, &mask, &red, 1e-4, 1.0, &InterpolationConfig::default()).unwrap();
    assert!(nmse(sub.values(), res.series.values()) <= 1e-2);
}

#[test]
fn automatic_weights_pick_from_grid() {
    let (case, v, mask) = interpolation_case(3);
    let op = build_gso(&case).unwrap();
    let v = v.slice(0, 60).unwrap();
    let flags: Vec<bool> = mask.flags()[..60 * 40].to_vec();
    let mask = ObservationMask::from_flags(60, 40, flags).unwrap();
    let cfg = InterpolationConfig::default();
    let res = interpolate_auto(&v, &mask, &op, &cfg, 5).unwrap();
    assert!(cfg.auto_cg.contains(&res.c_g) && cfg.auto_ct.contains(&res.c_t));
    assert!(nmse(v.values(), res.series.values()) <= 1e-2);
}

fn true_trace(s: faer::MatRef<'_, c64>) -> c64 {
    (0..s.nrows()).map(|i| s[(i, i)]).sum::<c64>() / s.nrows() as f64
}

#[test]
fn noiseless_four_bus_recovery() {
    let case = ring(4);
    let s = build_gso(&case).unwrap().matrix().to_owned();
    let mut r = rng(8);
    let t = 30;
    let mut vals = Vec::new();
    let mut cur = Vec::new();
    for _ in 0..t {
        let v: Vec<c64> = random_vec(&mut r, 4).iter().map(|z| c(1.0, 0.0) + z * 0.1).collect();
        cur.extend(mat_vec(&s, &v));
        vals.extend(v);
    }
    let ids = case.bus_ids();
    let v = PhasorSeries::new(vals, ids.clone(), 30.0, PhasorKind::Voltage).unwrap();
    let i = PhasorSeries::new(cur, ids, 30.0, PhasorKind::Current).unwrap();
    let tr = true_trace(s.as_ref());
    let mut cfg = InferenceConfig::new(tr.re, tr.im);
    cfg.current_fit_weight = 1e3;
    let res = infer_gso(&v, Some(&i), &cfg).unwrap();
    let rel = linalg::frobenius((res.op.matrix() - &s).as_ref()) / linalg::frobenius(s.as_ref());
    assert!(rel <= 1e-3, "relative error {rel:e}");
}

#[test]
fn noisy_ten_bus_support() {
    let case = ring(10);
    let s = build_gso(&case).unwrap().matrix().to_owned();
    let edges: Vec<(usize, usize)> = case.branches().iter().map(|b| (b.from, b.to)).collect();
    let tr = true_trace(s.as_ref());
    let mut f1s = Vec::new();
    for seed in 0..5 {
        let (v, i) = snapshots(&case, 100, 1e-3, seed);
        let mut cfg = InferenceConfig::new(tr.re, tr.im);
        cfg.current_fit_weight = 1e3;
        let res = infer_gso(&v, Some(&i), &cfg).unwrap();
        f1s.push(support_f1(res.op.matrix(), &edges, 0.01));
    }
    assert!(f1s.iter().all(|&f| f >= 0.95), "{f1s:?}");
}

#[test]
fn zero_data_gives_trace_diagonal() {
    let v = PhasorSeries::new(vec![c(0.0, 0.0); 12], vec![1, 2, 3], 30.0, PhasorKind::Voltage).unwrap();
    let mut cfg = InferenceConfig::new(2.0, -3.0);
    cfg.gamma = 1.0;
    let res = infer_gso(&v, Some(&v.clone().with_kind(PhasorKind::Current)), &cfg).unwrap();
    let s = res.op.matrix();
    for a in 0..3 {
        for b in 0..3 {
            if a != b {
                assert!(s[(a, b)].norm() < 1e-8);
            }
        }
    }
    assert!((true_trace(s) - c(2.0, -3.0)).norm() < 1e-8);
}
