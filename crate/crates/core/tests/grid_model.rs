mod common;

use common::*;
use gridgsp::grid_model::{load_case, load_phasor_csv, save_case, save_phasor_csv, GridCase, PhasorKind, PhasorSeries};
use gridgsp::GspError;
use proptest::prelude::*;

#[test]
fn case_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ring.json");
    let case = ring(7);
    save_case(&case, &path).unwrap();
    let back = load_case(&path).unwrap();
    assert_eq!(back, case);
    assert_eq!(back.generator_indices(), vec![0, 3, 6]);
    assert_eq!(back.load_indices(), vec![1, 2, 4, 5]);
}

#[test]
fn case_file_errors_name_the_field() {
    let text = r#"{"buses":[{"id":1,"type":"gen","gen":{"y_g":{"re":0,"im":-1},"mass":-2,"damping":0}}],
                  "branches":[],"f0_hz":60}"#;
    match GridCase::from_json_str(text) {
        Err(GspError::Invalid { field, .. }) => assert!(field.contains("mass"), "{field}"),
        other => panic!("unexpected {other:?}"),
    }
    let unknown = r#"{"buses":[],"branches":[],"f0_hz":60,"extra":1}"#;
    assert!(matches!(GridCase::from_json_str(unknown), Err(GspError::Parse(_))));
    let missing = std::path::Path::new("/nonexistent/case.json");
    assert!(matches!(load_case(missing), Err(GspError::Io { .. })));
}

#[test]
fn network_matrix_is_laplacian_plus_shunts() {
    let case = ring(6);
    let y = case.admittance_matrix();
    for i in 0..6 {
        let row: faer::c64 = (0..6).map(|j| y[(i, j)]).sum();
        assert!(row.norm() < 1e-12);
    }
    let net = case.network_matrix();
    assert_eq!(net, y);
}

#[test]
fn phasor_csv_rejects_bad_headers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.csv");
    std::fs::write(&path, "# rate_hz=30\nt,1_mag,2_ang\n0,1,0\n").unwrap();
    assert!(matches!(load_phasor_csv(&path, PhasorKind::Voltage), Err(GspError::Parse(_))));
    std::fs::write(&path, "t,1_mag,1_ang\n0,1,0\n").unwrap();
    assert!(matches!(load_phasor_csv(&path, PhasorKind::Voltage), Err(GspError::Parse(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn phasor_csv_roundtrip(seed in any::<u64>(), t in 1usize..20, n in 1usize..6) {
        let mut r = rng(seed);
        let values = random_vec(&mut r, t * n);
        let ids: Vec<u64> = (0..n as u64).map(|i| 10 * i + 3).collect();
        let s = PhasorSeries::new(values, ids.clone(), 30.0, PhasorKind::Voltage).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        save_phasor_csv(&s, &path).unwrap();
        let back = load_phasor_csv(&path, PhasorKind::Voltage).unwrap();
        prop_assert_eq!(back.bus_ids(), &ids[..]);
        prop_assert_eq!(back.len(), t);
        prop_assert_eq!(back.rate_hz(), 30.0);
        prop_assert!(max_abs_diff(back.values(), s.values()) < 1e-14);
    }
}
