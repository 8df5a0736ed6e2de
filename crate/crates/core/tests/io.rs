use std::path::Path;
use std::sync::Arc;

use expanderlab::io::*;
use expanderlab::pde_simulator::{OriginBc, RadialField, RadialGrid};
use proptest::prelude::*;

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("expanderlab-io-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

proptest! {
    #[test]
    fn formatted_floats_round_trip(x in proptest::num::f64::NORMAL) {
        let s = fmt_f64(x);
        prop_assert_eq!(s.parse::<f64>().unwrap(), x);
        let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
        prop_assert_eq!(mantissa.len(), 17);
    }
}

#[test]
fn manifest_round_trips() {
    let dir = scratch("manifest");
    let mut m = RunManifest::new("profile");
    m.param("d", 3).param("alpha", 0.5).constant("psi_inf", 1.0184, 1e-10);
    m.artifacts.push("profile.csv".into());
    let path = dir.join("manifest.json");
    m.write(&path).unwrap();
    let back = RunManifest::read(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.schema, SCHEMA_VERSION);
}

#[test]
fn snapshots_write_a_header_and_full_precision() {
    let dir = scratch("csv");
    let g = Arc::new(RadialGrid::uniform(1.0, 10));
    let f = RadialField::from_fn(0.5, g, OriginBc::DirichletZero, |r| (r * 3.0).sin());
    let path = dir.join("snap.csv");
    write_snapshot(&path, &f).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some("r,h"));
    let rows = read_csv(&path).unwrap();
    assert_eq!(rows.len(), 11);
    for (row, (&r, &h)) in rows.iter().zip(f.r().iter().zip(&f.values)) {
        assert_eq!(row[0], r);
        assert_eq!(row[1], h);
    }
}

#[test]
fn grid_specs_parse_and_validate() {
    let g: GridSpec = "40,400,0.002".parse().unwrap();
    assert_eq!(g, GridSpec { r_max: 40.0, cells: 400, r1: 0.002 });
    assert_eq!(g.build().unwrap().cells(), 400);
    assert!("40,400".parse::<GridSpec>().is_err());
    assert!(GridSpec { r_max: 1.0, cells: 100, r1: 0.01 }.build().is_err());
    let u = GridSpec { r_max: 2.0, cells: 4, r1: 0.0 }.build().unwrap();
    assert_eq!(u.nodes(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
}

#[test]
fn config_files_are_partial_and_validated() {
    let dir = scratch("config");
    let path = dir.join("c.json");
    std::fs::write(&path, r#"{"tol": 1e-9, "epsilon_seq": [0.04, 0.02]}"#).unwrap();
    let c = Config::from_file(&path).unwrap();
    assert_eq!(c.tol, Some(1e-9));
    assert_eq!(c.grid, None);
    std::fs::write(&path, r#"{"tol": 1e-3}"#).unwrap();
    assert!(matches!(Config::from_file(&path), Err(IoError::Invalid(_))));
    std::fs::write(&path, r#"{"epsilon_seq": [0.01, 0.02]}"#).unwrap();
    assert!(Config::from_file(&path).is_err());
    std::fs::write(&path, r#"{"tolerance": 1e-9}"#).unwrap();
    assert!(matches!(Config::from_file(&path), Err(IoError::Json { .. })));
}

#[test]
fn checked_in_constants_are_tagged() {
    let c = Constants::read(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../constants.json")).unwrap();
    assert_eq!(c.schema, SCHEMA_VERSION);
    for d in 3..=6 {
        for key in ["alpha0", "alpha_star", "ell_star", "delta_star"] {
            let k = format!("d{d}_{key}");
            let v = c.values.get(&k).unwrap_or_else(|| panic!("missing {k}"));
            assert!(v.value.is_finite() && v.tol > 0.0);
        }
    }
}
