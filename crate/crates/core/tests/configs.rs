use std::path::PathBuf;

use mbx4_core::{LineShape, RunConfig};

fn shipped(name: &str) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let cfg = RunConfig::from_path(&path).unwrap();
    cfg.validate().unwrap();
    cfg
}

#[test]
fn shipped_configs_parse_and_validate() {
    for name in ["fig2.json", "fig2_broadened.json", "roundtrip.json", "analytic.json"] {
        let cfg = shipped(name);
        cfg.retarded_grid().unwrap();
        cfg.medium_spec().unwrap();
        cfg.initial_fields().unwrap();
    }
}

#[test]
fn broadened_config_uses_gaussian_line() {
    let m = shipped("fig2_broadened.json").medium_spec().unwrap();
    assert_eq!(m.line, LineShape::Gaussian { t2_star: 5.0 });
    assert_eq!(m.n_detuning, 32);
}

#[test]
fn config_survives_json_round_trip() {
    let cfg = shipped("roundtrip.json");
    assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
}
