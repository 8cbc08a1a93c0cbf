use std::fs;

use eesm_core::calibration::load_blers;
use eesm_core::{BetaTable, ChannelProfile, CurveSet, Error, OfdmaConfig, ReferenceCurve, SinrVector};

#[test]
fn curve_set_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curves.csv");
    let mut set = CurveSet::new();
    set.insert(ReferenceCurve::synthetic(1, 3.3, 0.7).unwrap()).unwrap();
    set.insert(ReferenceCurve::synthetic(16, 9.1, 1.3).unwrap()).unwrap();
    set.save(&path).unwrap();
    let back = CurveSet::load(&path).unwrap();
    for id in [1, 16] {
        assert_eq!(back.get(id).unwrap().points(), set.get(id).unwrap().points());
    }
}

#[test]
fn curve_parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "mcs_id,snr_db,bler\n1,0,0.9\n1,1,0.5\n1,1,0.4\n").unwrap();
    match CurveSet::load(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        CurveSet::load(dir.path().join("missing.csv")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn gamma_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    let g = SinrVector::new(vec![0.125, 3.0, 1e-3, 42.0]).unwrap();
    fs::write(&path, g.to_csv()).unwrap();
    assert_eq!(SinrVector::load_csv(&path).unwrap(), g);

    fs::write(&path, "gamma\n1.0\n").unwrap();
    assert!(matches!(SinrVector::load_csv(&path), Err(Error::Parse { .. })));
    fs::write(&path, "gamma_linear\n1.0\nx\n").unwrap();
    assert!(matches!(SinrVector::load_csv(&path), Err(Error::Parse { line: 3, .. })));
    fs::write(&path, "gamma_linear\n").unwrap();
    assert!(SinrVector::load_csv(&path).is_err());
}

#[test]
fn bler_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    fs::write(&path, "bler\n0.5\n0.01\n").unwrap();
    assert_eq!(load_blers(&path).unwrap(), vec![0.5, 0.01]);
    fs::write(&path, "bler\n0.5\n1.5\n").unwrap();
    assert!(matches!(load_blers(&path), Err(Error::Parse { line: 3, .. })));
}

#[test]
fn beta_table_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("site.csv");
    fs::write(&path, BetaTable::va_60kmh().to_csv()).unwrap();
    let loaded = BetaTable::load(&path).unwrap();
    assert_eq!(
        loaded.iter().collect::<Vec<_>>(),
        BetaTable::va_60kmh().iter().collect::<Vec<_>>()
    );
}

#[test]
fn profile_and_config_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    fs::write(&path, r#"{"name": "two", "speed_kmh": 3, "taps": [{"delay_ns": 0, "power_db": 0}, {"delay_ns": 500, "power_db": 0}]}"#).unwrap();
    let p = ChannelProfile::load(&path).unwrap();
    let powers = p.linear_powers();
    assert!((powers[0] - 0.5).abs() < 1e-15 && (powers[1] - 0.5).abs() < 1e-15);

    fs::write(&path, r#"{"name": "bad", "speed_kmh": 3, "taps": []}"#).unwrap();
    assert!(matches!(ChannelProfile::load(&path), Err(Error::Config(_))));

    let cfg = dir.path().join("c.json");
    let mut text =
        eesm_core::channel::PUSC_DL_10MHZ_JSON.replace("\"data_subcarriers\": 720", "\"data_subcarriers\": 700");
    fs::write(&cfg, &text).unwrap();
    assert!(OfdmaConfig::load(&cfg).is_err());
    text = eesm_core::channel::PUSC_DL_10MHZ_JSON.replace("\"fft_size\"", "\"extra\": 1, \"fft_size\"");
    fs::write(&cfg, &text).unwrap();
    assert!(OfdmaConfig::load(&cfg).is_err());
}
