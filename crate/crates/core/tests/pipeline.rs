//! Channel generation through calibration and into the reporting protocol.

use eesm_core::calibration::{planted_set, realization_gammas};
use eesm_core::channel::{realize_batch, sinr_per_tone};
use eesm_core::protocol::{BsState, EmaAverager, FormatInfo, Message, MssEndpoint};
use eesm_core::{eesm_db, train_beta, Beta, BetaTable, ChannelProfile, OfdmaConfig, ReferenceCurve, TrainOptions};

#[test]
fn calibrated_beta_drives_the_protocol() {
    let profile = ChannelProfile::veha_like();
    let config = OfdmaConfig::pusc_dl_10mhz();
    let gammas = realization_gammas(&profile, &config, 12, 100, (5.0, 20.0));
    let set = planted_set(
        16,
        ReferenceCurve::synthetic(16, 9.5, 1.0).unwrap(),
        gammas,
        Beta::from_db(7.48).unwrap(),
        None,
        0,
    );
    let report = train_beta(&set, TrainOptions::weighted()).unwrap();
    assert!((report.beta_db - 7.48).abs() < 0.1, "{report:?}");

    let table = BetaTable::new("calibrated", [(1, 2.5), (16, report.beta_db)]).unwrap();
    let mut bs = BsState::new(table.clone());
    bs.set_format(
        1,
        FormatInfo {
            threshold_db: 0.0,
            efficiency: 1.0,
        },
    );
    bs.set_format(
        16,
        FormatInfo {
            threshold_db: 9.0,
            efficiency: 2.0,
        },
    );
    let mut mss = MssEndpoint::new(3, 1, EmaAverager::default());
    mss.receive(&bs.provision(3)).unwrap();

    let batch = realize_batch(&profile, &config, 99, 4);
    for r in &batch {
        let gamma = sinr_per_tone(r, 11.0);
        bs.handle(&mss.slow_update(&gamma).unwrap()).unwrap();
        let report = mss.fast_report(&gamma).unwrap();
        bs.handle(&report).unwrap();
        if let Message::CinrReport { cinr_db, format_id, .. } = report {
            assert_eq!(cinr_db, eesm_db(&gamma, table.lookup(format_id).unwrap()));
        }
        let decision = bs.select(3, &[1, 16], &[0.0, 3.0]).unwrap();
        mss.receive(&decision).unwrap();
    }
}
