//! Channel-quality reporting between a mobile station (MSS) and a base
//! station (BS).
//!
//! The MSS sends two kinds of information:
//!
//! * a slow `curve_update`: a local linear fit of its EESM(beta) curve
//!   (both axes in dB) around the beta of the format it is using, and
//! * a fast `cinr_report`: the averaged effective SINR at that format's beta,
//!   corrected for implementation loss.
//!
//! Since `EESM(B*gamma, beta) = B * EESM(gamma, beta / B)`, in dB a boost of
//! `b` dB at target beta `t` reads the curve at `t - b` and adds `b`. The BS
//! therefore predicts any (boost, format) pair from the last report plus the
//! slope of the fitted curve, without ever seeing the per-tone SINRs.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::calibration::BetaTable;
use crate::curves::CurveSet;
use crate::eesm::{eesm_beta_curve, eesm_db, SinrVector};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_WIDTH_DB: f64 = 8.0;
pub const CURVE_GRID_STEP_DB: f64 = 0.5;
pub const DEFAULT_EMA_ALPHA: f64 = 0.25;
/// BLER whose AWGN SNR is used as the default per-format CINR threshold.
pub const THRESHOLD_BLER: f64 = 0.1;

/// Local linear approximation of EESM(beta), dB to dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveApprox {
    pub slope: f64,
    pub intercept_db: f64,
    pub beta_lo_db: f64,
    pub beta_hi_db: f64,
    /// Largest |fit - sample| over the fitted samples.
    pub max_residual_db: f64,
    pub sequence: u64,
}

impl CurveApprox {
    /// Evaluates the line, clamping `beta_db` into the validity range.
    /// The flag is false when clamping was needed.
    pub fn eval(&self, beta_db: f64) -> (f64, bool) {
        let clamped = beta_db.clamp(self.beta_lo_db, self.beta_hi_db);
        (self.intercept_db + self.slope * clamped, clamped == beta_db)
    }

    pub fn contains(&self, beta_db: f64) -> bool {
        beta_db >= self.beta_lo_db && beta_db <= self.beta_hi_db
    }
}

fn in_window(samples: &[(f64, f64)], window: (f64, f64)) -> Vec<(f64, f64)> {
    samples
        .iter()
        .copied()
        .filter(|(b, _)| *b >= window.0 && *b <= window.1)
        .collect()
}

fn finish_fit(pts: &[(f64, f64)], slope: f64, intercept_db: f64) -> CurveApprox {
    let max_residual_db = pts
        .iter()
        .map(|(b, e)| (intercept_db + slope * b - e).abs())
        .fold(0.0, f64::max);
    CurveApprox {
        slope,
        intercept_db,
        beta_lo_db: pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        beta_hi_db: pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
        max_residual_db,
        sequence: 0,
    }
}

/// Ordinary least-squares line through the `(beta_db, eesm_db)` samples
/// inside `window`.
pub fn fit_local_linear(samples: &[(f64, f64)], window: (f64, f64)) -> Result<CurveApprox> {
    let pts = in_window(samples, window);
    if pts.len() < 2 {
        return Err(Error::domain(format!(
            "{} samples inside window ({}, {}), need 2",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let mean_b = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_e = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_b).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_b) * (p.1 - mean_e)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("window samples share a single beta"));
    }
    let slope = sxy / sxx;
    Ok(finish_fit(&pts, slope, mean_e - slope * mean_b))
}

/// Least-squares line constrained to pass through the sample at
/// `anchor_beta_db`, so the line is exact where the fast reports are measured.
pub fn fit_anchored(samples: &[(f64, f64)], window: (f64, f64), anchor_beta_db: f64) -> Result<CurveApprox> {
    let pts = in_window(samples, window);
    let &(ab, ae) = pts
        .iter()
        .find(|p| p.0 == anchor_beta_db)
        .ok_or_else(|| Error::domain(format!("no sample at anchor beta {anchor_beta_db} dB")))?;
    if pts.len() < 2 {
        return Err(Error::domain("need an anchor and at least one other sample"));
    }
    let sxx: f64 = pts.iter().map(|p| (p.0 - ab).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - ab) * (p.1 - ae)).sum();
    let slope = sxy / sxx;
    Ok(finish_fit(&pts, slope, ae - slope * ab))
}

/// MSS-side curve for the slow update: EESM(beta) sampled every 0.5 dB over
/// `window_width_db` centred on the active format's beta, then fitted.
///
/// `sequence` is stamped on the result; the caller owns the counter.
pub fn mss_slow_update(
    gamma: &SinrVector,
    active_format: u32,
    table: &BetaTable,
    window_width_db: f64,
    sequence: u64,
) -> Result<CurveApprox> {
    let center = table.lookup_db(active_format)?;
    let half_steps = (window_width_db / (2.0 * CURVE_GRID_STEP_DB)).round() as i64;
    if half_steps < 1 {
        return Err(Error::domain(format!("window width {window_width_db} dB too narrow")));
    }
    let grid: Vec<f64> = (-half_steps..=half_steps)
        .map(|k| {
            if k == 0 {
                center
            } else {
                center + k as f64 * CURVE_GRID_STEP_DB
            }
        })
        .collect();
    let samples = eesm_beta_curve(gamma, &grid)?;
    let lo = grid[0];
    let hi = grid[grid.len() - 1];
    let mut approx = fit_anchored(&samples, (lo, hi), center)?;
    approx.sequence = sequence;
    Ok(approx)
}

/// Exponential moving average; the first value passes through unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmaAverager {
    pub alpha: f64,
    state: Option<f64>,
}

impl EmaAverager {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::domain(format!("EMA alpha must be in (0, 1], got {alpha}")));
        }
        Ok(Self { alpha, state: None })
    }

    pub fn update(&mut self, x: f64) -> f64 {
        let next = match self.state {
            None => x,
            Some(prev) => self.alpha * x + (1.0 - self.alpha) * prev,
        };
        self.state = Some(next);
        next
    }

    pub fn reset(&mut self) {
        self.state = None;
    }

    pub fn value(&self) -> Option<f64> {
        self.state
    }
}

impl Default for EmaAverager {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_EMA_ALPHA,
            state: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CinrReport {
    pub cinr_db: f64,
    pub format_id: u32,
    pub sequence: u64,
}

/// Fast report: averaged EESM at the active format's beta, less the
/// implementation loss.
pub fn mss_fast_report(
    gamma: &SinrVector,
    active_format: u32,
    table: &BetaTable,
    impl_loss_db: f64,
    averager: &mut EmaAverager,
    sequence: u64,
) -> Result<CinrReport> {
    let beta = table.lookup(active_format)?;
    let cinr_db = averager.update(eesm_db(gamma, beta) - impl_loss_db);
    Ok(CinrReport {
        cinr_db,
        format_id: active_format,
        sequence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub format_id: u32,
    pub beta_db: f64,
}

/// Messages exchanged between the endpoints, one JSON object each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    CurveUpdate {
        mss_id: u32,
        sequence: u64,
        slope: f64,
        intercept_db: f64,
        beta_lo_db: f64,
        beta_hi_db: f64,
        max_residual_db: f64,
    },
    CinrReport {
        mss_id: u32,
        sequence: u64,
        cinr_db: f64,
        format_id: u32,
    },
    Decision {
        mss_id: u32,
        format_id: u32,
        boost_db: f64,
        flags: Vec<String>,
    },
    /// Beta table, sent BS to MSS as provisioning or MSS to BS as a
    /// bootstrap after handover.
    BetaTable {
        mss_id: u32,
        channel_label: String,
        entries: Vec<TableEntry>,
    },
}

impl Message {
    pub fn curve_update(mss_id: u32, approx: &CurveApprox) -> Self {
        Message::CurveUpdate {
            mss_id,
            sequence: approx.sequence,
            slope: approx.slope,
            intercept_db: approx.intercept_db,
            beta_lo_db: approx.beta_lo_db,
            beta_hi_db: approx.beta_hi_db,
            max_residual_db: approx.max_residual_db,
        }
    }

    pub fn cinr_report(mss_id: u32, report: &CinrReport) -> Self {
        Message::CinrReport {
            mss_id,
            sequence: report.sequence,
            cinr_db: report.cinr_db,
            format_id: report.format_id,
        }
    }

    pub fn beta_table(mss_id: u32, table: &BetaTable) -> Self {
        Message::BetaTable {
            mss_id,
            channel_label: table.channel_label.clone(),
            entries: table
                .iter()
                .map(|(format_id, beta_db)| TableEntry { format_id, beta_db })
                .collect(),
        }
    }

    pub fn mss_id(&self) -> u32 {
        match self {
            Message::CurveUpdate { mss_id, .. }
            | Message::CinrReport { mss_id, .. }
            | Message::Decision { mss_id, .. }
            | Message::BetaTable { mss_id, .. } => *mss_id,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn table_from_entries(label: &str, entries: &[TableEntry]) -> Result<BetaTable> {
    BetaTable::new(label, entries.iter().map(|e| (e.format_id, e.beta_db)))
}

/// Mobile-station endpoint.
#[derive(Debug, Clone)]
pub struct MssEndpoint {
    pub mss_id: u32,
    pub active_format: u32,
    pub impl_loss_db: f64,
    pub window_width_db: f64,
    table: Option<BetaTable>,
    averager: EmaAverager,
    curve_sequence: u64,
    report_sequence: u64,
}

impl MssEndpoint {
    pub fn new(mss_id: u32, active_format: u32, averager: EmaAverager) -> Self {
        Self {
            mss_id,
            active_format,
            impl_loss_db: 0.0,
            window_width_db: DEFAULT_WINDOW_WIDTH_DB,
            table: None,
            averager,
            curve_sequence: 0,
            report_sequence: 0,
        }
    }

    /// Gives the MSS its own table, as after a handover.
    pub fn with_table(mut self, table: BetaTable) -> Self {
        self.table = Some(table);
        self
    }

    pub fn table(&self) -> Option<&BetaTable> {
        self.table.as_ref()
    }

    fn require_table(&self) -> Result<&BetaTable> {
        self.table
            .as_ref()
            .ok_or_else(|| Error::State(format!("mss {} has no beta table", self.mss_id)))
    }

    /// Table announcement for the BS (handover bootstrap).
    pub fn bootstrap(&self) -> Result<Message> {
        Ok(Message::beta_table(self.mss_id, self.require_table()?))
    }

    /// Fits and sends a new curve. The channel has changed, so the CINR
    /// average restarts from the next measurement.
    pub fn slow_update(&mut self, gamma: &SinrVector) -> Result<Message> {
        let approx = mss_slow_update(
            gamma,
            self.active_format,
            self.require_table()?,
            self.window_width_db,
            self.curve_sequence + 1,
        )?;
        self.curve_sequence += 1;
        self.averager.reset();
        Ok(Message::curve_update(self.mss_id, &approx))
    }

    pub fn fast_report(&mut self, gamma: &SinrVector) -> Result<Message> {
        let table = self
            .table
            .as_ref()
            .ok_or_else(|| Error::State("no beta table".into()))?;
        let report = mss_fast_report(
            gamma,
            self.active_format,
            table,
            self.impl_loss_db,
            &mut self.averager,
            self.report_sequence + 1,
        )?;
        self.report_sequence += 1;
        Ok(Message::cinr_report(self.mss_id, &report))
    }

    /// Applies a table provision or a decision from the BS.
    pub fn receive(&mut self, msg: &Message) -> Result<()> {
        if msg.mss_id() != self.mss_id {
            return Err(Error::State(format!(
                "message for mss {} delivered to mss {}",
                msg.mss_id(),
                self.mss_id
            )));
        }
        match msg {
            Message::BetaTable {
                channel_label, entries, ..
            } => {
                self.table = Some(table_from_entries(channel_label, entries)?);
            }
            Message::Decision { format_id, .. } => {
                if !self.require_table()?.contains(*format_id) {
                    return Err(Error::State(format!("decision names unknown format {format_id}")));
                }
                self.active_format = *format_id;
            }
            other => {
                return Err(Error::State(format!("MSS cannot handle {other:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormatInfo {
    pub threshold_db: f64,
    /// Ranking for selection; larger is more bits per symbol.
    pub efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub cinr_db: f64,
    /// `target beta - boost` fell inside the curve's validity range.
    pub in_range: bool,
    pub bler: Option<f64>,
}

#[derive(Debug, Clone, Default)]
struct MssRecord {
    table: Option<BetaTable>,
    approx: Option<CurveApprox>,
    report: Option<CinrReport>,
}

/// Base-station state: everything it knows comes from received messages.
#[derive(Debug, Clone)]
pub struct BsState {
    beta_table: BetaTable,
    formats: BTreeMap<u32, FormatInfo>,
    curves: Option<CurveSet>,
    mss: HashMap<u32, MssRecord>,
}

impl BsState {
    pub fn new(beta_table: BetaTable) -> Self {
        Self {
            beta_table,
            formats: BTreeMap::new(),
            curves: None,
            mss: HashMap::new(),
        }
    }

    /// Per-format thresholds default to the SNR at BLER 0.1 of each
    /// reference curve; efficiency defaults to the format id.
    pub fn with_curves(mut self, curves: CurveSet) -> Self {
        for curve in curves.iter() {
            if let Ok(threshold_db) = curve.snr_at(THRESHOLD_BLER) {
                self.formats.entry(curve.mcs_id()).or_insert(FormatInfo {
                    threshold_db,
                    efficiency: curve.mcs_id() as f64,
                });
            }
        }
        self.curves = Some(curves);
        self
    }

    pub fn set_format(&mut self, format_id: u32, info: FormatInfo) {
        self.formats.insert(format_id, info);
    }

    pub fn format(&self, format_id: u32) -> Option<&FormatInfo> {
        self.formats.get(&format_id)
    }

    /// Table provisioning message for a newly attached MSS.
    pub fn provision(&self, mss_id: u32) -> Message {
        Message::beta_table(mss_id, &self.beta_table)
    }

    /// The table used for `mss_id`: its bootstrap table if it sent one.
    pub fn table_for(&self, mss_id: u32) -> &BetaTable {
        self.mss
            .get(&mss_id)
            .and_then(|r| r.table.as_ref())
            .unwrap_or(&self.beta_table)
    }

    pub fn curve_approx(&self, mss_id: u32) -> Option<&CurveApprox> {
        self.mss.get(&mss_id).and_then(|r| r.approx.as_ref())
    }

    pub fn last_report(&self, mss_id: u32) -> Option<&CinrReport> {
        self.mss.get(&mss_id).and_then(|r| r.report.as_ref())
    }

    /// Stores an MSS message. Updates whose sequence does not advance are
    /// rejected as stale.
    pub fn handle(&mut self, msg: &Message) -> Result<()> {
        match msg {
            Message::CurveUpdate {
                mss_id,
                sequence,
                slope,
                intercept_db,
                beta_lo_db,
                beta_hi_db,
                max_residual_db,
            } => {
                if !(beta_lo_db < beta_hi_db) {
                    return Err(Error::State(format!(
                        "curve update with empty range ({beta_lo_db}, {beta_hi_db})"
                    )));
                }
                let rec = self.mss.entry(*mss_id).or_default();
                if let Some(prev) = rec.approx {
                    if *sequence <= prev.sequence {
                        return Err(Error::State(format!(
                            "stale curve update {sequence} for mss {mss_id} (have {})",
                            prev.sequence
                        )));
                    }
                }
                rec.approx = Some(CurveApprox {
                    slope: *slope,
                    intercept_db: *intercept_db,
                    beta_lo_db: *beta_lo_db,
                    beta_hi_db: *beta_hi_db,
                    max_residual_db: *max_residual_db,
                    sequence: *sequence,
                });
            }
            Message::CinrReport {
                mss_id,
                sequence,
                cinr_db,
                format_id,
            } => {
                if !self.table_for(*mss_id).contains(*format_id) {
                    return Err(Error::State(format!(
                        "report from mss {mss_id} uses format {format_id} unknown to the BS"
                    )));
                }
                let rec = self.mss.entry(*mss_id).or_default();
                if let Some(prev) = rec.report {
                    if *sequence <= prev.sequence {
                        return Err(Error::State(format!(
                            "stale CINR report {sequence} for mss {mss_id} (have {})",
                            prev.sequence
                        )));
                    }
                }
                rec.report = Some(CinrReport {
                    cinr_db: *cinr_db,
                    format_id: *format_id,
                    sequence: *sequence,
                });
            }
            Message::BetaTable {
                mss_id,
                channel_label,
                entries,
            } => {
                let table = table_from_entries(channel_label, entries)?;
                self.mss.entry(*mss_id).or_default().table = Some(table);
            }
            Message::Decision { .. } => {
                return Err(Error::State("BS does not accept decisions".into()));
            }
        }
        Ok(())
    }

    /// Effective SINR the MSS would see with `boost_db` on `target_format`.
    ///
    /// The report anchors the level and the fitted slope carries it to the
    /// requested point: `cinr + boost + A(beta_t - boost) - A(beta_r)`, where
    /// `A` is the clamped local line. Zero boost on the reported format gives
    /// back the report itself.
    pub fn predict(&self, mss_id: u32, boost_db: f64, target_format: u32) -> Result<Prediction> {
        let rec = self
            .mss
            .get(&mss_id)
            .ok_or_else(|| Error::State(format!("nothing received from mss {mss_id}")))?;
        let approx = rec
            .approx
            .ok_or_else(|| Error::State(format!("no curve update from mss {mss_id}")))?;
        let report = rec
            .report
            .ok_or_else(|| Error::State(format!("no CINR report from mss {mss_id}")))?;
        let table = self.table_for(mss_id);
        let target_beta = table.lookup_db(target_format)?;
        let reported_beta = table.lookup_db(report.format_id)?;

        let (at_target, in_range) = approx.eval(target_beta - boost_db);
        let (at_report, _) = approx.eval(reported_beta);
        let cinr_db = report.cinr_db + boost_db + (at_target - at_report);

        let bler = self
            .curves
            .as_ref()
            .and_then(|c| c.get(target_format))
            .map(|c| c.bler_at(cinr_db));
        Ok(Prediction {
            cinr_db,
            in_range,
            bler,
        })
    }

    /// Picks the most efficient (format, boost) whose prediction meets the
    /// format's threshold; ties go to the lower boost, then the lower format
    /// id. If nothing qualifies, the most robust format at the largest boost
    /// is returned with a `below_threshold` flag.
    pub fn select(&self, mss_id: u32, candidates: &[u32], boosts_db: &[f64]) -> Result<Message> {
        if candidates.is_empty() || boosts_db.is_empty() {
            return Err(Error::domain("empty candidate or boost set"));
        }
        let mut best: Option<(FormatInfo, u32, f64, Prediction)> = None;
        for &format in candidates {
            let info = *self
                .formats
                .get(&format)
                .ok_or_else(|| Error::Config(format!("no threshold for format {format}")))?;
            for &boost in boosts_db {
                let p = self.predict(mss_id, boost, format)?;
                if p.cinr_db < info.threshold_db {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some((bi, bf, bb, _)) => {
                        info.efficiency > bi.efficiency
                            || (info.efficiency == bi.efficiency && (boost < *bb || (boost == *bb && format < *bf)))
                    }
                };
                if better {
                    best = Some((info, format, boost, p));
                }
            }
        }

        let mut flags = Vec::new();
        let (format_id, boost_db, prediction) = match best {
            Some((_, f, b, p)) => (f, b, p),
            None => {
                let robust = candidates
                    .iter()
                    .copied()
                    .min_by(|a, b| {
                        let (ea, eb) = (self.formats[a].efficiency, self.formats[b].efficiency);
                        ea.total_cmp(&eb).then(a.cmp(b))
                    })
                    .expect("non-empty");
                let boost = boosts_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                flags.push("below_threshold".to_string());
                (robust, boost, self.predict(mss_id, boost, robust)?)
            }
        };
        if !prediction.in_range {
            flags.push("out_of_range".to_string());
        }
        Ok(Message::Decision {
            mss_id,
            format_id,
            boost_db,
            flags,
        })
    }
}
