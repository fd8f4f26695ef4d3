mod common;

use common::*;
use faer::{c64, Mat};
use gridgsp::grid_model::{PhasorKind, PhasorSeries};
use gridgsp::sampling::*;
use gridgsp::spectral::{build_gso, SpectralOperator};
use gridgsp::synthesis::{generate_synthetic_grid, simulate_scenario, SimulationConfig, SyntheticGridConfig};
use proptest::prelude::*;

fn basis_rows(op: &SpectralOperator, k: usize, rows: &[usize]) -> Mat<c64> {
    Mat::from_fn(rows.len(), k, |i, j| op.basis()[(rows[i], j)])
}

#[test]
fn greedy_near_exhaustive_optimum() {
    for seed in 0..5 {
        let cfg = SyntheticGridConfig {
            n_buses: 12,
            communities: 3,
            ..Default::default()
        };
        let g = generate_synthetic_grid(&cfg, seed).unwrap();
        let op = build_gso(&g.case).unwrap();
        let p = greedy_placement(&op, 3, 4).unwrap();
        let best = subsets(12, 4)
            .iter()
            .map(|rows| sigma_min(&basis_rows(&op, 3, rows)))
            .fold(0.0, f64::max);
        let greedy = sigma_min(&basis_rows(&op, 3, &p.selected));
        assert!((greedy - p.sigma_min).abs() < 1e-10);
        assert!(greedy >= 0.8 * best, "seed {seed}: greedy {greedy} vs optimum {best}");
    }
}

#[test]
fn placement_spreads_over_communities() {
    let g = generate_synthetic_grid(&SyntheticGridConfig::default(), 1).unwrap();
    let op = build_gso(&g.case).unwrap();
    let p = greedy_placement(&op, 6, 6).unwrap();
    let mut hit: Vec<usize> = p.selected.iter().map(|&i| g.communities[i]).collect();
    hit.sort_unstable();
    hit.dedup();
    assert!(hit.len() >= 6, "communities hit: {hit:?}");
}

#[test]
fn optimal_placement_beats_random_median() {
    let g = generate_synthetic_grid(&SyntheticGridConfig::default(), 2).unwrap();
    let sc = simulate_scenario(&g.case, &SimulationConfig::default(), 2).unwrap();
    let k = 6;
    let p = greedy_placement(&sc.gso, k, k).unwrap();
    let opt = placement_nmse(&sc.gso, &p.band, &p.selected, &sc.v).unwrap();
    let stats = random_placement_stats(&sc.gso, &p.band, k, &sc.v, 100, 7).unwrap();
    assert_eq!(stats.nmse.len(), 100);
    assert!(opt < stats.median, "optimal {opt:e}, random median {:e}", stats.median);
}

#[test]
fn ill_conditioned_selection_rejected() {
    let g = generate_synthetic_grid(&SyntheticGridConfig::default(), 0).unwrap();
    let op = build_gso(&g.case).unwrap();
    assert!(matches!(
        Reconstructor::new(&op, &[0, 1], &[0]),
        Err(gridgsp::GspError::Invalid { .. })
    ));
}

#[test]
fn frame_periodic_tones_resample_exactly() {
    // Two buses, tones at 2 and 7 cycles per 64 decimated samples.
    let (factor, t) = (4, 64 * 4 * 3);
    let tone = |cycles: f64, n: usize| c64::from_polar(1.0, 2.0 * std::f64::consts::PI * cycles * n as f64 / (64.0 * factor as f64));
    let vals: Vec<c64> = (0..t).flat_map(|n| [tone(2.0, n), tone(7.0, n) * 0.5]).collect();
    let s = PhasorSeries::new(vals, vec![1, 2], 30.0, PhasorKind::Voltage).unwrap();
    let r = temporal_resample(&s, factor).unwrap();
    assert_eq!(r.decimated.len(), t / factor);
    assert!(r.nmse <= 1e-6, "nmse {:e}", r.nmse);
    let same = temporal_resample(&s, 1).unwrap();
    assert_eq!(same.restored.values(), s.values());
    let flat = PhasorSeries::new(vec![c64::new(0.9, 0.1); 100], vec![1], 30.0, PhasorKind::Voltage).unwrap();
    assert!(temporal_resample(&flat, 3).unwrap().nmse < 1e-20);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bandlimited_signal_recovered_exactly(seed in any::<u64>(), n in 6usize..20) {
        let mut r = rng(seed);
        let op = SpectralOperator::from_matrix(random_symmetric(&mut r, n, 2.0)).unwrap();
        let k = 1 + (seed as usize) % (n / 2);
        let p = greedy_placement(&op, k, k + 1).unwrap();
        let coef = random_vec(&mut r, k);
        let x: Vec<c64> = (0..n).map(|i| (0..k).map(|j| op.basis()[(i, j)] * coef[j]).sum()).collect();
        let samples: Vec<c64> = p.selected.iter().map(|&i| x[i]).collect();
        let est = reconstruct(&op, &p.band, &p.selected, &samples).unwrap();
        prop_assert!(max_abs_diff(&est, &x) <= 1e-9 * (1.0 + norm(&x)) / p.sigma_min.min(1.0));
    }

    #[test]
    fn sigma_min_nonincreasing_in_k(seed in any::<u64>(), n in 6usize..16) {
        let mut r = rng(seed);
        let op = SpectralOperator::from_matrix(random_symmetric(&mut r, n, 2.0)).unwrap();
        let m = n / 2 + 1;
        let rows = gridgsp::rng::sample_subset(&mut r, n, m);
        let mut prev = f64::INFINITY;
        for k in 1..=m {
            let band: Vec<usize> = (0..k).collect();
            let s = selection_sigma_min(&op, &band, &rows).unwrap();
            prop_assert!(s <= prev * (1.0 + 1e-12));
            prev = s;
        }
    }

    #[test]
    fn greedy_is_relabeling_invariant(seed in any::<u64>(), n in 5usize..12) {
        let mut r = rng(seed);
        let s = random_symmetric(&mut r, n, 2.0);
        let perm = gridgsp::rng::sample_subset(&mut r, n, n);
        let sp = Mat::from_fn(n, n, |i, j| s[(perm[i], perm[j])]);
        let a = greedy_placement(&SpectralOperator::from_matrix(s).unwrap(), 2, 3).unwrap();
        let b = greedy_placement(&SpectralOperator::from_matrix(sp).unwrap(), 2, 3).unwrap();
        let mapped: Vec<usize> = b.selected.iter().map(|&i| perm[i]).collect();
        prop_assert!((a.sigma_min - b.sigma_min).abs() <= 1e-9);
        prop_assert_eq!(mapped, a.selected);
    }
}
