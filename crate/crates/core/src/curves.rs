//! AWGN BLER-vs-SNR reference curves, one per MCS.
//!
//! Curves are piecewise linear in (SNR dB, log10 BLER) and clamp outside the
//! tabulated range. Small non-monotonicities in measured data are repaired
//! with a running minimum when the curve is built.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::Deserialize;

use crate::error::{Error, Result};

/// BLER at which the waterfall is considered to have started.
pub const SNR_START_BLER: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub bler: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCurve {
    mcs_id: u32,
    points: Vec<CurvePoint>,
    repaired: bool,
}

/// Result of [`ReferenceCurve::snr_start`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrStart {
    pub snr_db: f64,
    /// The curve never reaches BLER 0.99; `snr_db` is the first knot.
    pub below_threshold: bool,
}

impl ReferenceCurve {
    /// Builds a curve from points sorted by strictly increasing SNR.
    ///
    /// BLER must lie in (0, 1]. A BLER that rises with SNR is replaced by the
    /// running minimum and the curve is marked as repaired.
    pub fn new(mcs_id: u32, mut points: Vec<CurvePoint>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::domain(format!(
                "curve {mcs_id} has {} points, need at least 3",
                points.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.snr_db.is_finite() {
                return Err(Error::domain(format!("curve {mcs_id} point {i}: snr not finite")));
            }
            if !(p.bler > 0.0 && p.bler <= 1.0) {
                return Err(Error::domain(format!(
                    "curve {mcs_id} point {i}: bler {} outside (0, 1]",
                    p.bler
                )));
            }
        }
        if let Some(i) = points.windows(2).position(|w| !(w[1].snr_db > w[0].snr_db)) {
            return Err(Error::domain(format!(
                "curve {mcs_id}: snr not strictly increasing at point {}",
                i + 1
            )));
        }

        let mut repaired = false;
        let mut running = f64::INFINITY;
        for p in points.iter_mut() {
            if p.bler > running {
                p.bler = running;
                repaired = true;
            }
            running = p.bler;
        }
        if repaired {
            warn!("curve {mcs_id}: non-monotone BLER repaired with running minimum");
        }
        Ok(Self {
            mcs_id,
            points,
            repaired,
        })
    }

    /// Logistic waterfall `1 / (1 + exp((s - midpoint) / slope))` on a
    /// 0.25 dB grid spanning midpoint ± 12 dB, clipped to [1e-6, 1 - 1e-6].
    pub fn synthetic(mcs_id: u32, midpoint_db: f64, slope_db: f64) -> Result<Self> {
        if !(slope_db > 0.0 && slope_db.is_finite() && midpoint_db.is_finite()) {
            return Err(Error::domain(format!(
                "synthetic curve needs finite midpoint and slope > 0, got {midpoint_db}, {slope_db}"
            )));
        }
        let points = (0..=96)
            .map(|k| {
                let snr_db = midpoint_db - 12.0 + 0.25 * k as f64;
                let bler = logistic_bler(snr_db, midpoint_db, slope_db).clamp(1e-6, 1.0 - 1e-6);
                CurvePoint { snr_db, bler }
            })
            .collect();
        Self::new(mcs_id, points)
    }

    pub fn mcs_id(&self) -> u32 {
        self.mcs_id
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    /// Whether the running-minimum repair changed any point.
    pub fn was_repaired(&self) -> bool {
        self.repaired
    }

    pub fn min_bler(&self) -> f64 {
        self.points.last().map(|p| p.bler).unwrap_or(1.0)
    }

    pub fn max_bler(&self) -> f64 {
        self.points[0].bler
    }

    pub fn bler_at(&self, snr_db: f64) -> f64 {
        let pts = &self.points;
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if snr_db <= first.snr_db || snr_db.is_nan() {
            return first.bler;
        }
        if snr_db >= last.snr_db {
            return last.bler;
        }
        // first index with snr > snr_db; guaranteed in 1..len
        let hi = pts.partition_point(|p| p.snr_db <= snr_db);
        let (a, b) = (pts[hi - 1], pts[hi]);
        if snr_db == a.snr_db {
            return a.bler;
        }
        let t = (snr_db - a.snr_db) / (b.snr_db - a.snr_db);
        let log_bler = a.bler.log10() + t * (b.bler.log10() - a.bler.log10());
        10f64.powf(log_bler)
    }

    /// Inverse of [`bler_at`](Self::bler_at) on the strictly decreasing part.
    ///
    /// On a plateau the lowest SNR reaching the requested BLER is returned.
    pub fn snr_at(&self, bler: f64) -> Result<f64> {
        let pts = &self.points;
        let (max, min) = (self.max_bler(), self.min_bler());
        if !(bler <= max) {
            return Err(Error::Range {
                requested: bler,
                nearest: max,
            });
        }
        if !(bler >= min) {
            return Err(Error::Range {
                requested: bler,
                nearest: min,
            });
        }
        if let Some(p) = pts.iter().find(|p| p.bler == bler) {
            return Ok(p.snr_db);
        }
        // first knot strictly below the target; the previous one is above it
        let hi = pts.partition_point(|p| p.bler > bler);
        let (a, b) = (pts[hi - 1], pts[hi]);
        let (la, lb, lt) = (a.bler.log10(), b.bler.log10(), bler.log10());
        Ok(a.snr_db + (lt - la) / (lb - la) * (b.snr_db - a.snr_db))
    }

    /// SNR where the interpolated BLER first drops through 0.99.
    pub fn snr_start(&self) -> SnrStart {
        let pts = &self.points;
        if self.max_bler() < SNR_START_BLER {
            warn!(
                "curve {}: max BLER {} below {SNR_START_BLER}; using first knot as SNR start",
                self.mcs_id,
                self.max_bler()
            );
            return SnrStart {
                snr_db: pts[0].snr_db,
                below_threshold: true,
            };
        }
        // last knot still at or above the threshold
        let i = pts.partition_point(|p| p.bler >= SNR_START_BLER) - 1;
        let snr_db = if pts[i].bler == SNR_START_BLER || i + 1 == pts.len() {
            pts[i].snr_db
        } else {
            self.snr_at(SNR_START_BLER).unwrap_or(pts[i].snr_db)
        };
        SnrStart {
            snr_db,
            below_threshold: false,
        }
    }
}

pub(crate) fn logistic_bler(snr_db: f64, midpoint_db: f64, slope_db: f64) -> f64 {
    1.0 / (1.0 + ((snr_db - midpoint_db) / slope_db).exp())
}

/// Reference curves keyed by MCS id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveSet {
    curves: BTreeMap<u32, ReferenceCurve>,
}

#[derive(Debug, Deserialize)]
struct CurveRow {
    mcs_id: u32,
    snr_db: f64,
    bler: f64,
}

impl CurveSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, curve: ReferenceCurve) -> Result<()> {
        let id = curve.mcs_id();
        if self.curves.contains_key(&id) {
            return Err(Error::domain(format!("duplicate curve for mcs {id}")));
        }
        self.curves.insert(id, curve);
        Ok(())
    }

    pub fn get(&self, mcs_id: u32) -> Option<&ReferenceCurve> {
        self.curves.get(&mcs_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReferenceCurve> {
        self.curves.values()
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Reads the `mcs_id,snr_db,bler` CSV format.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file, path)
    }

    pub fn read(reader: impl std::io::Read, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["mcs_id", "snr_db", "bler"] {
            return Err(Error::parse(path, 1, "expected header `mcs_id,snr_db,bler`"));
        }

        let mut set = CurveSet::new();
        let mut current: Option<(u32, Vec<CurvePoint>, u64)> = None;
        let finish = |set: &mut CurveSet, id: u32, pts: Vec<CurvePoint>, line: u64| {
            if set.curves.contains_key(&id) {
                return Err(Error::parse(
                    path,
                    line,
                    format!("rows for mcs {id} are not contiguous"),
                ));
            }
            let curve = ReferenceCurve::new(id, pts).map_err(|e| Error::parse(path, line, e.to_string()))?;
            set.curves.insert(id, curve);
            Ok(())
        };

        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::parse(path, line, e.to_string())
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let row: CurveRow = record
                .deserialize(Some(&headers))
                .map_err(|e| Error::parse(path, line, e.to_string()))?;
            if !(row.bler > 0.0 && row.bler <= 1.0) {
                return Err(Error::parse(path, line, format!("bler {} outside (0, 1]", row.bler)));
            }
            if !row.snr_db.is_finite() {
                return Err(Error::parse(path, line, "snr_db is not finite"));
            }
            match current.as_mut() {
                Some((id, pts, _)) if *id == row.mcs_id => {
                    let prev = pts.last().map(|p| p.snr_db).unwrap_or(f64::NEG_INFINITY);
                    if row.snr_db == prev {
                        return Err(Error::parse(
                            path,
                            line,
                            format!("duplicate snr {} for mcs {id}", row.snr_db),
                        ));
                    }
                    if row.snr_db < prev {
                        return Err(Error::parse(path, line, format!("snr not increasing for mcs {id}")));
                    }
                    pts.push(CurvePoint {
                        snr_db: row.snr_db,
                        bler: row.bler,
                    });
                }
                _ => {
                    if let Some((id, pts, start)) = current.take() {
                        finish(&mut set, id, pts, start)?;
                    }
                    current = Some((
                        row.mcs_id,
                        vec![CurvePoint {
                            snr_db: row.snr_db,
                            bler: row.bler,
                        }],
                        line,
                    ));
                }
            }
        }
        if let Some((id, pts, start)) = current.take() {
            finish(&mut set, id, pts, start)?;
        }
        if set.is_empty() {
            return Err(Error::parse(path, 1, "no curve rows"));
        }
        Ok(set)
    }

    /// Writes the CSV format with 17 significant digits so loading is exact.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "mcs_id,snr_db,bler")?;
        for curve in self.curves.values() {
            for p in curve.points() {
                writeln!(out, "{},{:.16e},{:.16e}", curve.mcs_id, p.snr_db, p.bler)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<CurvePoint> {
        v.iter().map(|&(snr_db, bler)| CurvePoint { snr_db, bler }).collect()
    }

    fn simple() -> ReferenceCurve {
        ReferenceCurve::new(1, pts(&[(0.0, 1.0), (1.0, 0.99), (2.0, 0.5), (3.0, 0.01), (4.0, 1e-4)])).unwrap()
    }

    #[test]
    fn interpolation_rules() {
        let c = simple();
        assert_eq!(c.bler_at(2.0), 0.5);
        assert_eq!(c.bler_at(3.0), 0.01);
        let mid = c.bler_at(2.5);
        let expected = 10f64.powf((0.5f64.log10() + 0.01f64.log10()) / 2.0);
        assert!((mid - expected).abs() < 1e-15);
        assert_eq!(c.bler_at(100.0), 1e-4);
        assert_eq!(c.bler_at(-100.0), 1.0);
    }

    #[test]
    fn inverse_lookup() {
        let c = simple();
        assert_eq!(c.snr_at(0.5).unwrap(), 2.0);
        assert_eq!(c.snr_at(1e-4).unwrap(), 4.0);
        let s = c.snr_at(c.bler_at(2.3)).unwrap();
        assert!((s - 2.3).abs() < 1e-9);
        match c.snr_at(1e-6) {
            Err(Error::Range { nearest, .. }) => assert_eq!(nearest, 1e-4),
            other => panic!("expected range error, got {other:?}"),
        }
        assert!(c.snr_at(1.5).is_err());
    }

    #[test]
    fn snr_start_rules() {
        let c = simple();
        let s = c.snr_start();
        assert_eq!(s.snr_db, 1.0);
        assert!(!s.below_threshold);

        let low = ReferenceCurve::new(2, pts(&[(5.0, 0.5), (6.0, 0.1), (7.0, 0.01)])).unwrap();
        let s = low.snr_start();
        assert_eq!(s.snr_db, 5.0);
        assert!(s.below_threshold);
    }

    #[test]
    fn synthetic_curve_oracles() {
        let (mid, slope) = (8.0, 0.8);
        let c = ReferenceCurve::synthetic(3, mid, slope).unwrap();
        assert!((c.bler_at(mid) - 0.5).abs() < 1e-6);
        // logistic solved for bler = 0.99
        let analytic = mid - slope * 99f64.ln();
        assert!((c.snr_start().snr_db - analytic).abs() < 0.05);
        assert!((c.snr_at(0.5).unwrap() - mid).abs() < 0.01);
        assert!(c.points().windows(2).all(|w| w[1].bler <= w[0].bler));
        assert!(ReferenceCurve::synthetic(3, mid, 0.0).is_err());
    }

    #[test]
    fn repairs_non_monotone() {
        let c = ReferenceCurve::new(1, pts(&[(0.0, 0.9), (1.0, 0.5), (2.0, 0.6), (3.0, 0.1)])).unwrap();
        assert!(c.was_repaired());
        assert_eq!(c.points()[2].bler, 0.5);
        // plateau inverts to its lowest SNR
        assert_eq!(c.snr_at(0.5).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_curves() {
        assert!(ReferenceCurve::new(1, pts(&[(0.0, 1.0), (1.0, 0.5)])).is_err());
        assert!(ReferenceCurve::new(1, pts(&[(0.0, 1.0), (1.0, 0.0), (2.0, 0.1)])).is_err());
        assert!(ReferenceCurve::new(1, pts(&[(0.0, 1.0), (0.0, 0.5), (2.0, 0.1)])).is_err());
    }

    fn parse(text: &str) -> Result<CurveSet> {
        CurveSet::read(text.as_bytes(), Path::new("test.csv"))
    }

    #[test]
    fn csv_round_trip() {
        let mut set = CurveSet::new();
        set.insert(ReferenceCurve::synthetic(1, 3.0, 0.7).unwrap()).unwrap();
        set.insert(ReferenceCurve::synthetic(16, 12.3456789, 1.1).unwrap())
            .unwrap();
        let mut buf = Vec::new();
        set.write(&mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn csv_errors_carry_line() {
        let zero = "mcs_id,snr_db,bler\n1,0,1\n1,1,0\n1,2,0.1\n";
        match parse(zero) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let dup = "mcs_id,snr_db,bler\n1,0,1\n1,1,0.5\n1,1,0.4\n1,2,0.1\n";
        match parse(dup) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse("mcs_id,snr_db,bler\n1,0,1\n1,x,0.5\n").is_err());
        assert!(parse("a,b,c\n1,0,1\n").is_err());
        let split = "mcs_id,snr_db,bler\n1,0,1\n1,1,0.5\n1,2,0.1\n2,0,1\n2,1,0.5\n2,2,0.1\n1,3,0.01\n";
        assert!(parse(split).is_err());
    }

    proptest! {
        #[test]
        fn monotone_and_invertible(mid in -5.0f64..25.0, slope in 0.2f64..3.0, t in 0.0f64..1.0) {
            let c = ReferenceCurve::synthetic(1, mid, slope).unwrap();
            // well inside the unclipped waterfall
            let s = mid + slope * (6.0 * t - 3.0);
            let mut prev = 1.0;
            for k in 0..200 {
                let b = c.bler_at(mid - 15.0 + 0.15 * k as f64);
                prop_assert!(b <= prev);
                prev = b;
            }
            let back = c.snr_at(c.bler_at(s)).unwrap();
            prop_assert!((back - s).abs() < 1e-6, "{} vs {}", back, s);
            prop_assert!(c.snr_start().snr_db <= c.snr_at(0.5).unwrap());
        }
    }
}
