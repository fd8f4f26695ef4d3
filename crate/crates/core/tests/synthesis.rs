mod common;

use common::*;
use faer::c64;
use gridgsp::grid_model::{GridCase, PhasorSeries};
use gridgsp::rng::{complex_normal, seeded};
use gridgsp::spectral::{build_generator_gso, build_gso};
use gridgsp::synthesis::*;

/// Three generators on a triangle with no loads.
fn triangle() -> GridCase {
    let buses = vec![
        gen_bus(1, c(0.0, -5.0), 5.0),
        gen_bus(2, c(0.0, -4.0), 6.0),
        gen_bus(3, c(0.0, -6.0), 8.0),
    ];
    let branches = vec![branch(0, 1, c(0.0, -1.0)), branch(1, 2, c(0.0, -2.0)), branch(0, 2, c(0.0, -1.5))];
    GridCase::new(buses, branches, 60.0).unwrap()
}

#[test]
fn swing_recursion_matches_vertex_domain() {
    let red = build_generator_gso(&triangle()).unwrap().op;
    let chi = 0.1;
    let n = red.dim();
    let dynamics = GeneratorDynamics::swing(&red, chi, 0.01, vec![c(0.0, 0.0); n]).unwrap();
    let x0 = vec![c(0.01, 0.02), c(-0.01, 0.0), c(0.0, -0.03)];
    let x1 = vec![c(0.012, 0.01), c(-0.005, 0.01), c(0.002, -0.02)];
    let (frames, seed) = (500, 11);
    let gf = simulate_generators(&dynamics, &red, &x0, &x1, frames, seed).unwrap();

    // x_t = ((2 - chi) I - S_red) x_{t-1} + (chi - 1) x_{t-2} + U w~_t
    let s = red.matrix();
    let u = red.basis();
    let mut rng = seeded(seed);
    let mut prev2 = x0.clone();
    let mut prev1 = x1.clone();
    let mut worst: f64 = 0.0;
    for t in 2..frames {
        let w: Vec<c64> = (0..n).map(|_| complex_normal(&mut rng, 0.01)).collect();
        let next: Vec<c64> = (0..n)
            .map(|i| {
                let mut acc = c(2.0 - chi, 0.0) * prev1[i] + c(chi - 1.0, 0.0) * prev2[i];
                for j in 0..n {
                    acc -= s[(i, j)] * prev1[j];
                    acc += u[(i, j)] * w[j];
                }
                acc
            })
            .collect();
        worst = worst.max(max_abs_diff(&next, gf.frame(t)) / (1.0 + norm(&next)));
        prev2 = std::mem::replace(&mut prev1, next);
    }
    assert!(worst < 1e-10, "max relative deviation {worst:e}");
    // Per-frequency coefficients follow a1 = (2 - chi) - lambda.
    for (a, l) in dynamics.a1.iter().zip(red.eigenvalues()) {
        assert!((a - (c(2.0 - chi, 0.0) - l)).norm() < 1e-14);
    }
}

#[test]
fn planted_coefficients_recovered() {
    let red = build_generator_gso(&triangle()).unwrap().op;
    let n = red.dim();
    let planted = GeneratorDynamics::uniform(n, c(1.5, 0.0), c(-0.6, 0.0), 0.01);
    let opts = FitOptions {
        poly_degree: None,
        ..Default::default()
    };
    let mut hits = 0;
    for seed in 0..20 {
        let x = simulate_generators(&planted, &red, &vec![c(0.0, 0.0); n], &vec![c(0.0, 0.0); n], 1000, seed).unwrap();
        let fit = fit_gfar2(&x, &red, &opts).unwrap();
        let ok = (0..n).all(|k| (fit.a1[k].re - 1.5).abs() <= 0.05 && (fit.a2[k].re + 0.6).abs() <= 0.05);
        hits += ok as usize;
    }
    assert!(hits >= 19, "{hits}/20 seeds within tolerance");
}

#[test]
fn noise_free_fit_is_exact_and_poly_slope_is_minus_one() {
    let case = ring(24);
    let red = build_generator_gso(&case).unwrap().op;
    let n = red.dim();
    let chi = 0.1;
    let dynamics = GeneratorDynamics::swing(&red, chi, 0.01, vec![c(0.0, 0.0); n]).unwrap();
    let x = simulate_generators(&dynamics, &red, &vec![c(0.0, 0.0); n], &vec![c(0.0, 0.0); n], 3000, 5).unwrap();
    let fit = fit_gfar2(&x, &red, &FitOptions::default()).unwrap();
    let poly = fit.poly.expect("polynomial fit");
    assert!((poly.a1[1] + 1.0).abs() < 0.05, "slope {}", poly.a1[1]);
    assert!((poly.a1[0] - (2.0 - chi)).abs() < 0.05, "intercept {}", poly.a1[0]);

    let quiet = GeneratorDynamics {
        noise_scale: vec![0.0; n],
        ..dynamics.clone()
    };
    let x0: Vec<c64> = (0..n).map(|k| c(0.01 * k as f64, 0.02)).collect();
    let x1: Vec<c64> = (0..n).map(|k| c(0.0, 0.01 * k as f64 - 0.02)).collect();
    let xs = simulate_generators(&quiet, &red, &x0, &x1, 60, 0).unwrap();
    let exact = fit_gfar2(&xs, &red, &FitOptions::default()).unwrap();
    for k in 0..n {
        assert!((exact.a1[k] - dynamics.a1[k]).norm() < 1e-8, "a1[{k}]");
        assert!((exact.a2[k] - dynamics.a2[k]).norm() < 1e-8, "a2[{k}]");
    }
}

#[test]
fn load_autocorrelation_matches_yule_walker() {
    let dynamics = LoadDynamics::uniform(vec![c(0.5, -0.2)], c(1.5, 0.0), c(-0.6, 0.0), vec![0.01]);
    let mean = dynamics.mean_current.clone();
    let s = simulate_loads(&dynamics, &mean, &mean, 100_000, 3).unwrap();
    let d: Vec<c64> = s.column(0).iter().map(|z| z - mean[0]).collect();
    let acf = |lag: usize| -> f64 {
        let num: f64 = (lag..d.len()).map(|t| (d[t] * d[t - lag].conj()).re).sum();
        let den: f64 = d.iter().map(|z| z.norm_sqr()).sum();
        num / den
    };
    let rho1 = 1.5 / 1.6;
    let rho2 = 1.5 * rho1 - 0.6;
    assert!((acf(1) / rho1 - 1.0).abs() < 0.05, "lag 1: {}", acf(1));
    assert!((acf(2) / rho2 - 1.0).abs() < 0.05, "lag 2: {}", acf(2));

    let fit = fit_ar2_loads(&s).unwrap();
    assert!((fit.b1[0].re - 1.5).abs() < 0.02 && (fit.b2[0].re + 0.6).abs() < 0.02);
}

#[test]
fn two_bus_voltage_by_hand() {
    let case = two_bus();
    let op = build_gso(&case).unwrap();
    let e = PhasorSeries::new(vec![c(1.0, 0.0)], vec![1], 30.0, gridgsp::grid_model::PhasorKind::InternalVoltage).unwrap();
    let l = PhasorSeries::new(vec![c(0.0, 0.0)], vec![2], 30.0, gridgsp::grid_model::PhasorKind::Current).unwrap();
    // S^{-1} = (j/50) [[5, 5], [5, 15]], excitation [-j10, 0] -> v = [1, 1].
    let v = synthesize_voltages(&op, &case, &e, &l, 0.0, 0).unwrap();
    assert!(max_abs_diff(v.frame(0), &[c(1.0, 0.0), c(1.0, 0.0)]) < 1e-14);
}

#[test]
fn scenario_is_consistent_and_deterministic() {
    let case = ring(15);
    let cfg = SimulationConfig {
        frames: 40,
        meas_noise: 0.0,
        ..Default::default()
    };
    let sc = simulate_scenario(&case, &cfg, 9).unwrap();
    let again = simulate_scenario(&case, &cfg, 9).unwrap();
    assert_eq!(sc.v.values(), again.v.values());
    let gens = case.generator_indices();
    for t in 0..sc.v.len() {
        let v = sc.v.frame(t);
        let ex = excitation(&case, sc.e.frame(t), sc.loads.frame(t)).unwrap();
        let sv = mat_vec(&sc.gso.matrix().to_owned(), v);
        assert!(max_abs_diff(&sv, &ex) < 1e-9);
        // Generator current diag(y_g)(e - v_G) is the injection into the
        // network, i.e. the generator rows of (Y + shunts) v.
        let ig = generator_currents(&case, sc.e.frame(t), v);
        let yv = mat_vec(&case.network_matrix(), v);
        let yv_g: Vec<c64> = gens.iter().map(|&g| yv[g]).collect();
        assert!(max_abs_diff(&ig, &yv_g) < 1e-9);
    }
    let x_back = generator_state(&sc.e, &case.gen_mass()).unwrap();
    assert!(max_abs_diff(x_back.values(), sc.x.values()) < 1e-12);
}

#[test]
fn voltages_are_low_pass_on_community_grids() {
    for seed in 0..3 {
        let g = generate_synthetic_grid(&SyntheticGridConfig::default(), seed).unwrap();
        let sc = simulate_scenario(&g.case, &SimulationConfig::default(), seed).unwrap();
        let mut energy = vec![0.0; sc.gso.dim()];
        for f in sc.v.frames() {
            for (e, x) in energy.iter_mut().zip(sc.gso.gft(f).unwrap()) {
                *e += x.norm_sqr();
            }
        }
        let low: f64 = energy[..12].iter().sum();
        let total: f64 = energy.iter().sum();
        assert!(low / total >= 0.9, "seed {seed}: {}", low / total);
    }
}

#[test]
fn spectral_peak_at_pole_angle() {
    let red = build_generator_gso(&two_bus()).unwrap().op;
    let (r, w) = (0.995, 2.0 * std::f64::consts::PI * 0.1);
    let dynamics = GeneratorDynamics::uniform(1, c(2.0 * r * w.cos(), 0.0), c(-r * r, 0.0), 0.0);
    let t = 200;
    let x = simulate_generators(&dynamics, &red, &[c(1.0, 0.0)], &[c64::from_polar(r, w)], t, 0).unwrap();
    let spec = joint_spectrum(&x, &red).unwrap();
    let peak = (0..t).max_by(|&a, &b| spec[0][a].total_cmp(&spec[0][b])).unwrap();
    assert!((peak as f64 - 0.1 * t as f64).abs() <= 1.0, "peak bin {peak}");
}
