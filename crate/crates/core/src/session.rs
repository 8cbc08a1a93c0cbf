//! Closed-loop MSS/BS session driven by a JSON scenario.
//!
//! Each step draws a channel, sends a curve update and a CINR report over
//! the text wire format, scores every (candidate format, boost) prediction
//! against a direct EESM evaluation, and feeds the BS decision back to the
//! MSS as its next active format.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::BetaTable;
use crate::channel::{
    rayleigh_flat_vector, realize_channel_stream, sinr_per_tone, substream, ChannelProfile, OfdmaConfig,
};
use crate::curves::CurveSet;
use crate::eesm::{eesm_db, SinrVector};
use crate::error::{Error, Result};
use crate::protocol::{
    BsState, EmaAverager, FormatInfo, Message, MssEndpoint, DEFAULT_EMA_ALPHA, DEFAULT_WINDOW_WIDTH_DB,
};
use crate::units::db_to_linear;

/// Slack allowed on top of `max_residual_db` for in-range predictions.
pub const PREDICTION_SLACK_DB: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSource {
    /// Every tone at `snr_db`.
    Flat { tones: usize, snr_db: f64 },
    /// Independent exponential per-tone SINRs.
    Rayleigh { tones: usize, mean_snr_db: f64 },
    /// Tapped-delay-line realizations over the config's data tones.
    Profile {
        profile: String,
        mean_snr_db: f64,
        #[serde(default)]
        config: Option<String>,
    },
    /// Literal linear SINR vectors, cycled if there are fewer than steps.
    Explicit { vectors: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormatSpec {
    pub id: u32,
    pub threshold_db: f64,
    #[serde(default)]
    pub efficiency: Option<f64>,
}

fn default_mss_id() -> u32 {
    1
}
fn default_table() -> String {
    "pb_3kmh".into()
}
fn default_alpha() -> f64 {
    DEFAULT_EMA_ALPHA
}
fn default_window() -> f64 {
    DEFAULT_WINDOW_WIDTH_DB
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub steps: usize,
    pub channel: ChannelSource,
    pub initial_format: u32,
    pub candidates: Vec<u32>,
    pub boosts_db: Vec<f64>,
    #[serde(default = "default_mss_id")]
    pub mss_id: u32,
    /// Built-in table name or CSV path.
    #[serde(default = "default_table")]
    pub table: String,
    /// Explicit thresholds; formats not listed fall back to the reference
    /// curves when `curves` is given.
    #[serde(default)]
    pub formats: Vec<FormatSpec>,
    #[serde(default)]
    pub curves: Option<String>,
    #[serde(default)]
    pub impl_loss_db: f64,
    #[serde(default = "default_alpha")]
    pub ema_alpha: f64,
    #[serde(default = "default_window")]
    pub window_width_db: f64,
    /// MSS announces its own table instead of receiving the BS's.
    #[serde(default)]
    pub bootstrap: bool,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("scenario needs at least one step".into()));
        }
        if self.candidates.is_empty() || self.boosts_db.is_empty() {
            return Err(Error::Config("candidates and boosts_db must be non-empty".into()));
        }
        if self.boosts_db.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("boosts must be finite".into()));
        }
        match &self.channel {
            ChannelSource::Flat { tones, .. } | ChannelSource::Rayleigh { tones, .. } if *tones == 0 => {
                Err(Error::Config("channel needs at least one tone".into()))
            }
            ChannelSource::Explicit { vectors } if vectors.is_empty() => {
                Err(Error::Config("explicit channel lists no vectors".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub format_id: u32,
    pub boost_db: f64,
    pub predicted_db: f64,
    pub truth_db: f64,
    pub error_db: f64,
    pub in_range: bool,
}

/// One line of the trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub active_format: u32,
    pub curve_update: Message,
    pub report: Message,
    pub predictions: Vec<PredictionRecord>,
    pub decision: Message,
    /// Zero-boost prediction on the reported format equals the report.
    pub identity_exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSummary {
    pub steps: usize,
    pub predictions: usize,
    pub in_range_predictions: usize,
    pub max_in_range_error_db: f64,
    pub max_abs_error_db: f64,
    /// Largest `|error| - (max_residual_db + slack)` over in-range predictions;
    /// positive means the bound was broken.
    pub worst_bound_margin_db: f64,
    pub bound_violations: usize,
    pub identity_failures: usize,
    pub below_threshold_decisions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionTrace {
    pub records: Vec<StepRecord>,
    pub summary: SessionSummary,
}

impl SessionTrace {
    /// JSON lines, one per step, then the summary.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.summary).expect("summary serializes"));
        out.push('\n');
        out
    }
}

fn resolve_table(name: &str) -> Result<BetaTable> {
    match BetaTable::builtin(name) {
        Some(t) => Ok(t),
        None => BetaTable::load(name),
    }
}

struct ChannelDraw {
    profile: Option<(ChannelProfile, OfdmaConfig)>,
}

impl ChannelDraw {
    fn new(source: &ChannelSource) -> Result<Self> {
        let profile = match source {
            ChannelSource::Profile { profile, config, .. } => {
                let p = match ChannelProfile::builtin(profile) {
                    Some(p) => p,
                    None => ChannelProfile::load(profile)?,
                };
                let cfg = match config {
                    Some(path) => OfdmaConfig::load(path)?,
                    None => OfdmaConfig::pusc_dl_10mhz(),
                };
                Some((p, cfg))
            }
            _ => None,
        };
        Ok(Self { profile })
    }

    fn draw(&self, source: &ChannelSource, seed: u64, step: usize) -> Result<SinrVector> {
        let k = step as u64;
        match source {
            ChannelSource::Flat { tones, snr_db } => SinrVector::flat(db_to_linear(*snr_db), *tones),
            ChannelSource::Rayleigh { tones, mean_snr_db } => {
                let step_seed: u64 = substream(seed, k).random();
                rayleigh_flat_vector(*tones, *mean_snr_db, step_seed)
            }
            ChannelSource::Profile { mean_snr_db, .. } => {
                let (p, cfg) = self.profile.as_ref().expect("profile resolved in new");
                Ok(sinr_per_tone(&realize_channel_stream(p, cfg, seed, k), *mean_snr_db))
            }
            ChannelSource::Explicit { vectors } => SinrVector::new(vectors[step % vectors.len()].clone()),
        }
    }
}

/// Passes a message through the text wire format, as the transport would.
fn transmit(msg: &Message) -> Result<Message> {
    Message::from_json(&msg.to_json())
}

pub fn run_session(scenario: &Scenario, seed: u64) -> Result<SessionTrace> {
    scenario.validate()?;
    let table = resolve_table(&scenario.table)?;
    let mut bs = BsState::new(table.clone());
    if let Some(path) = &scenario.curves {
        bs = bs.with_curves(CurveSet::load(path)?);
    }
    for f in &scenario.formats {
        bs.set_format(
            f.id,
            FormatInfo {
                threshold_db: f.threshold_db,
                efficiency: f.efficiency.unwrap_or(f.id as f64),
            },
        );
    }
    for &c in &scenario.candidates {
        if !table.contains(c) {
            return Err(Error::Config(format!("candidate format {c} not in table")));
        }
        if bs.format(c).is_none() {
            return Err(Error::Config(format!("no threshold for candidate format {c}")));
        }
    }

    let mut mss = MssEndpoint::new(
        scenario.mss_id,
        scenario.initial_format,
        EmaAverager::new(scenario.ema_alpha)?,
    );
    mss.impl_loss_db = scenario.impl_loss_db;
    mss.window_width_db = scenario.window_width_db;
    if scenario.bootstrap {
        mss = mss.with_table(table.clone());
        bs.handle(&transmit(&mss.bootstrap()?)?)?;
    } else {
        mss.receive(&transmit(&bs.provision(scenario.mss_id))?)?;
    }
    if !table.contains(scenario.initial_format) {
        return Err(Error::Config(format!(
            "initial format {} not in table",
            scenario.initial_format
        )));
    }

    let draw = ChannelDraw::new(&scenario.channel)?;
    let mut records = Vec::with_capacity(scenario.steps);
    let mut summary = SessionSummary {
        steps: scenario.steps,
        predictions: 0,
        in_range_predictions: 0,
        max_in_range_error_db: 0.0,
        max_abs_error_db: 0.0,
        worst_bound_margin_db: f64::NEG_INFINITY,
        bound_violations: 0,
        identity_failures: 0,
        below_threshold_decisions: 0,
    };

    for step in 0..scenario.steps {
        let gamma = draw.draw(&scenario.channel, seed, step)?;
        let active_format = mss.active_format;

        let curve_update = transmit(&mss.slow_update(&gamma)?)?;
        bs.handle(&curve_update)?;
        let report = transmit(&mss.fast_report(&gamma)?)?;
        bs.handle(&report)?;

        let approx = *bs.curve_approx(scenario.mss_id).expect("just received");
        let reported = bs.last_report(scenario.mss_id).expect("just received").cinr_db;
        let identity_exact = bs.predict(scenario.mss_id, 0.0, active_format)?.cinr_db == reported;
        if !identity_exact {
            summary.identity_failures += 1;
        }

        let bound = approx.max_residual_db + PREDICTION_SLACK_DB;
        let mut predictions = Vec::new();
        for &format_id in &scenario.candidates {
            let beta = bs.table_for(scenario.mss_id).lookup(format_id)?;
            for &boost_db in &scenario.boosts_db {
                let p = bs.predict(scenario.mss_id, boost_db, format_id)?;
                let boosted = gamma.scaled(db_to_linear(boost_db))?;
                let truth_db = eesm_db(&boosted, beta) - scenario.impl_loss_db;
                let error_db = p.cinr_db - truth_db;
                summary.predictions += 1;
                summary.max_abs_error_db = summary.max_abs_error_db.max(error_db.abs());
                if p.in_range {
                    summary.in_range_predictions += 1;
                    summary.max_in_range_error_db = summary.max_in_range_error_db.max(error_db.abs());
                    let margin = error_db.abs() - bound;
                    summary.worst_bound_margin_db = summary.worst_bound_margin_db.max(margin);
                    if margin > 0.0 {
                        summary.bound_violations += 1;
                    }
                }
                predictions.push(PredictionRecord {
                    format_id,
                    boost_db,
                    predicted_db: p.cinr_db,
                    truth_db,
                    error_db,
                    in_range: p.in_range,
                });
            }
        }

        let decision = transmit(&bs.select(scenario.mss_id, &scenario.candidates, &scenario.boosts_db)?)?;
        if let Message::Decision { flags, .. } = &decision {
            if flags.iter().any(|f| f == "below_threshold") {
                summary.below_threshold_decisions += 1;
            }
        }
        mss.receive(&decision)?;

        records.push(StepRecord {
            step,
            active_format,
            curve_update,
            report,
            predictions,
            decision,
            identity_exact,
        });
    }
    if summary.in_range_predictions == 0 {
        summary.worst_bound_margin_db = 0.0;
    }
    Ok(SessionTrace { records, summary })
}
