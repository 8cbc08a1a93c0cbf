//! Per-MCS beta training against AWGN-equivalent SNR targets.
//!
//! Each sample pairs a per-tone SINR vector with the BLER measured on it.
//! The BLER is mapped back through the MCS reference curve to the SNR an
//! AWGN channel would need for the same BLER; beta is then chosen so the
//! mapped effective SINRs match those targets in the least-squares sense,
//! optionally weighting each residual by how far its target sits above the
//! start of the BLER waterfall. All residuals and weights are in dB.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{realize_channel_stream, sinr_per_tone, substream, ChannelProfile, OfdmaConfig};
use crate::curves::ReferenceCurve;
use crate::eesm::{eesm_db, Beta, SinrVector};
use crate::error::{Error, Result};
use crate::minimize::{minimize_bracketed, BracketPass, BracketedMinimum, DEFAULT_TOLERANCE};

pub const DEFAULT_BRACKET_DB: (f64, f64) = (-5.0, 20.0);
pub const MIN_SAMPLES: usize = 2;

pub const BETAS_PB_3KMH_CSV: &str = include_str!("../data/betas_pb_3kmh.csv");
pub const BETAS_VA_60KMH_CSV: &str = include_str!("../data/betas_va_60kmh.csv");

/// Offset added to the realization index for the stream that draws each
/// realization's mean SNR, keeping it apart from the tap draws.
const SNR_STREAM_OFFSET: u64 = 1 << 40;
const NOISE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSample {
    pub gamma: SinrVector,
    pub bler: f64,
}

#[derive(Debug, Clone)]
pub struct CalibrationSet {
    pub mcs_id: u32,
    pub samples: Vec<CalibrationSample>,
    pub curve: ReferenceCurve,
}

/// BLER range over which measured samples are trusted for inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlerWindow {
    pub lo: f64,
    pub hi: f64,
}

impl Default for BlerWindow {
    fn default() -> Self {
        Self { lo: 0.001, hi: 0.9 }
    }
}

impl BlerWindow {
    pub fn contains(&self, bler: f64) -> bool {
        bler >= self.lo && bler <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ExclusionReason {
    OutsideWindow,
    /// The BLER is beyond the reference curve; `nearest` is the curve endpoint.
    NotInvertible {
        nearest: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exclusion {
    pub index: usize,
    pub bler: f64,
    #[serde(flatten)]
    pub reason: ExclusionReason,
}

/// Maps a measured BLER to the AWGN SNR giving the same BLER.
pub fn awgn_equivalent_snr(bler: f64, curve: &ReferenceCurve) -> Result<f64, ExclusionReason> {
    curve.snr_at(bler).map_err(|e| match e {
        Error::Range { nearest, .. } => ExclusionReason::NotInvertible { nearest },
        _ => ExclusionReason::NotInvertible { nearest: f64::NAN },
    })
}

/// Samples that survived windowing, with their AWGN-equivalent SNR targets.
#[derive(Debug, Clone)]
pub struct PreparedSet<'a> {
    pub targets: Vec<(&'a SinrVector, f64)>,
    pub exclusions: Vec<Exclusion>,
}

impl CalibrationSet {
    /// Filters samples to `window` and inverts their BLER.
    ///
    /// Unusable samples are listed rather than clamped. Fails when fewer than
    /// two samples remain.
    pub fn prepare(&self, window: BlerWindow) -> Result<PreparedSet<'_>> {
        let mut targets = Vec::new();
        let mut exclusions = Vec::new();
        for (index, s) in self.samples.iter().enumerate() {
            let outcome = if window.contains(s.bler) {
                awgn_equivalent_snr(s.bler, &self.curve)
            } else {
                Err(ExclusionReason::OutsideWindow)
            };
            match outcome {
                Ok(snr) => targets.push((&s.gamma, snr)),
                Err(reason) => exclusions.push(Exclusion {
                    index,
                    bler: s.bler,
                    reason,
                }),
            }
        }
        if targets.len() < MIN_SAMPLES {
            return Err(Error::InsufficientData {
                usable: targets.len(),
                required: MIN_SAMPLES,
                summary: summarize_exclusions(&exclusions),
            });
        }
        Ok(PreparedSet { targets, exclusions })
    }
}

pub fn summarize_exclusions(exclusions: &[Exclusion]) -> String {
    let outside = exclusions
        .iter()
        .filter(|e| e.reason == ExclusionReason::OutsideWindow)
        .count();
    format!(
        "{} excluded ({} outside BLER window, {} not invertible on the reference curve)",
        exclusions.len(),
        outside,
        exclusions.len() - outside
    )
}

/// Sum of squared dB residuals between targets and mapped effective SINR.
pub fn unweighted_cost(beta: Beta, set: &PreparedSet<'_>) -> f64 {
    set.targets
        .iter()
        .map(|(gamma, target)| (target - eesm_db(gamma, beta)).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector(pub Vec<f64>);

/// Weights `((target - snr_start) / snr_start)^2`, all in dB.
pub fn weight_vector(set: &PreparedSet<'_>, snr_start_db: f64) -> Result<WeightVector> {
    if snr_start_db == 0.0 || !snr_start_db.is_finite() {
        return Err(Error::Config(format!(
            "SNR start of {snr_start_db} dB cannot normalize the weights"
        )));
    }
    Ok(WeightVector(
        set.targets
            .iter()
            .map(|(_, t)| ((t - snr_start_db) / snr_start_db).powi(2))
            .collect(),
    ))
}

pub fn weighted_cost(beta: Beta, set: &PreparedSet<'_>, weights: &WeightVector) -> Result<f64> {
    if weights.0.len() != set.targets.len() {
        return Err(Error::domain(format!(
            "{} weights for {} samples",
            weights.0.len(),
            set.targets.len()
        )));
    }
    if weights.0.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::domain("weights must be finite and non-negative"));
    }
    Ok(set
        .targets
        .iter()
        .zip(&weights.0)
        .map(|((gamma, target), w)| w * (target - eesm_db(gamma, beta)).powi(2))
        .sum())
}

/// Minimizes a cost over beta in dB, expanding the bracket off its edges.
pub fn minimize_beta<F>(mut cost: F, bracket_db: (f64, f64)) -> Result<BracketedMinimum>
where
    F: FnMut(Beta) -> f64,
{
    minimize_bracketed(
        |db| match Beta::from_db(db) {
            Ok(beta) => cost(beta),
            Err(_) => f64::NAN,
        },
        bracket_db,
        DEFAULT_TOLERANCE,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainOptions {
    pub weighted: bool,
    pub window: BlerWindow,
    pub bracket_db: (f64, f64),
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            weighted: false,
            window: BlerWindow::default(),
            bracket_db: DEFAULT_BRACKET_DB,
        }
    }
}

impl TrainOptions {
    pub fn weighted() -> Self {
        Self {
            weighted: true,
            ..Self::default()
        }
    }
}

/// Outcome of [`train_beta`]; serializes as the calibration report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub mcs_id: u32,
    pub beta_db: f64,
    pub cost: f64,
    pub cost_function: &'static str,
    pub sample_count: usize,
    pub used_samples: usize,
    pub exclusions: Vec<Exclusion>,
    pub window: BlerWindow,
    pub snr_start_db: Option<f64>,
    pub bracket_trace: Vec<BracketPass>,
    /// The minimizer stopped on a bracket edge after all expansions.
    pub at_bracket_edge: bool,
    /// The cost does not depend on beta (e.g. every channel is flat).
    pub degenerate: bool,
}

/// Trains beta for one MCS.
pub fn train_beta(set: &CalibrationSet, options: TrainOptions) -> Result<CalibrationReport> {
    let prepared = set.prepare(options.window)?;

    let (result, snr_start_db) = if options.weighted {
        let start = set.curve.snr_start();
        let weights = weight_vector(&prepared, start.snr_db)?;
        let result = minimize_beta(
            |b| weighted_cost(b, &prepared, &weights).unwrap_or(f64::NAN),
            options.bracket_db,
        )?;
        (result, Some(start.snr_db))
    } else {
        (
            minimize_beta(|b| unweighted_cost(b, &prepared), options.bracket_db)?,
            None,
        )
    };

    let degenerate = is_degenerate(&prepared, &result);
    if degenerate {
        log::warn!("mcs {}: cost does not depend on beta; fit is degenerate", set.mcs_id);
    }

    Ok(CalibrationReport {
        mcs_id: set.mcs_id,
        beta_db: result.x,
        cost: result.value,
        cost_function: if options.weighted { "weighted" } else { "unweighted" },
        sample_count: set.samples.len(),
        used_samples: prepared.targets.len(),
        exclusions: prepared.exclusions,
        window: options.window,
        snr_start_db,
        bracket_trace: result.trace,
        at_bracket_edge: result.at_edge,
        degenerate,
    })
}

/// True when the mapped SINR of every sample is the same at both ends of the
/// searched range, i.e. beta has no influence on the fit.
fn is_degenerate(set: &PreparedSet<'_>, result: &BracketedMinimum) -> bool {
    let last = result.trace.last().expect("at least one pass");
    let (lo, hi) = match (Beta::from_db(last.lo), Beta::from_db(last.hi)) {
        (Ok(lo), Ok(hi)) => (lo, hi),
        _ => return false,
    };
    set.targets.iter().all(|(gamma, _)| {
        let a = eesm_db(gamma, lo);
        let b = eesm_db(gamma, hi);
        (a - b).abs() <= 1e-12 * a.abs().max(1.0)
    })
}

/// Reads measured BLERs from a `bler` CSV, one per realization.
pub fn load_blers(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let blers = crate::column::read_column(path, "bler")?;
    if let Some(i) = blers.iter().position(|b| !(*b >= 0.0 && *b <= 1.0)) {
        return Err(Error::parse(
            path,
            i as u64 + 2,
            format!("bler {} outside [0, 1]", blers[i]),
        ));
    }
    Ok(blers)
}

/// Heteroscedastic Gaussian noise on planted targets: `sigma_low_db` below
/// `split_db`, `sigma_high_db` at or above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedNoise {
    pub sigma_low_db: f64,
    pub sigma_high_db: f64,
    pub split_db: f64,
}

/// Builds a calibration set whose BLERs are what the reference curve gives
/// at `eesm_db(gamma, planted)` (plus optional noise), so `planted` is the
/// exact minimizer when there is no noise.
pub fn planted_set(
    mcs_id: u32,
    curve: ReferenceCurve,
    gammas: Vec<SinrVector>,
    planted: Beta,
    noise: Option<PlantedNoise>,
    seed: u64,
) -> CalibrationSet {
    let mut rng = substream(seed, NOISE_STREAM);
    let samples = gammas
        .into_iter()
        .map(|gamma| {
            let mut target = eesm_db(&gamma, planted);
            if let Some(n) = noise {
                let sigma = if target < n.split_db {
                    n.sigma_low_db
                } else {
                    n.sigma_high_db
                };
                let z: f64 = rng.sample(StandardNormal);
                target += sigma * z;
            }
            let bler = curve.bler_at(target);
            CalibrationSample { gamma, bler }
        })
        .collect();
    CalibrationSet { mcs_id, samples, curve }
}

/// Per-tone SINR vectors for `count` realizations, each scaled to a mean SNR
/// drawn uniformly from `snr_range_db`.
pub fn realization_gammas(
    profile: &ChannelProfile,
    config: &OfdmaConfig,
    seed: u64,
    count: usize,
    snr_range_db: (f64, f64),
) -> Vec<SinrVector> {
    use rayon::prelude::*;
    (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let r = realize_channel_stream(profile, config, seed, k);
            let u: f64 = substream(seed, SNR_STREAM_OFFSET + k).random();
            sinr_per_tone(&r, snr_range_db.0 + u * (snr_range_db.1 - snr_range_db.0))
        })
        .collect()
}

/// Format-indexed beta values in dB for one channel type.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaTable {
    pub channel_label: String,
    entries: BTreeMap<u32, f64>,
}

impl BetaTable {
    pub fn new(channel_label: impl Into<String>, entries: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (format, beta_db) in entries {
            if !beta_db.is_finite() {
                return Err(Error::domain(format!("format {format}: beta is not finite")));
            }
            if map.insert(format, beta_db).is_some() {
                return Err(Error::domain(format!("duplicate format {format}")));
            }
        }
        Ok(Self {
            channel_label: channel_label.into(),
            entries: map,
        })
    }

    /// Pedestrian B, 3 km/h.
    pub fn pb_3kmh() -> Self {
        Self::parse("PB", BETAS_PB_3KMH_CSV, Path::new("betas_pb_3kmh.csv")).expect("shipped table parses")
    }

    /// Vehicular A, 60 km/h.
    pub fn va_60kmh() -> Self {
        Self::parse("VA", BETAS_VA_60KMH_CSV, Path::new("betas_va_60kmh.csv")).expect("shipped table parses")
    }

    /// The shipped table with this file name, if any.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "betas_pb_3kmh.csv" | "pb_3kmh" | "pb" | "PB" => Some(Self::pb_3kmh()),
            "betas_va_60kmh.csv" | "va_60kmh" | "va" | "VA" => Some(Self::va_60kmh()),
            _ => None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(label, &text, path)
    }

    /// Parses the `format,beta_db` CSV format.
    pub fn parse(channel_label: impl Into<String>, text: &str, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["format", "beta_db"] {
            return Err(Error::parse(path, 1, "expected header `format,beta_db`"));
        }
        let mut entries = BTreeMap::new();
        for record in rdr.records() {
            let record =
                record.map_err(|e| Error::parse(path, e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let format: u32 = record[0]
                .parse()
                .map_err(|_| Error::parse(path, line, format!("format `{}` is not an integer", &record[0])))?;
            let beta: f64 = record[1]
                .parse()
                .map_err(|_| Error::parse(path, line, format!("beta `{}` is not numeric", &record[1])))?;
            if !beta.is_finite() {
                return Err(Error::parse(path, line, "beta is not finite"));
            }
            if entries.insert(format, beta).is_some() {
                return Err(Error::parse(path, line, format!("duplicate format {format}")));
            }
        }
        Ok(Self {
            channel_label: channel_label.into(),
            entries,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("format,beta_db\n");
        for (f, b) in &self.entries {
            out.push_str(&format!("{f},{b}\n"));
        }
        out
    }

    pub fn lookup(&self, format_id: u32) -> Result<Beta> {
        let db = self
            .entries
            .get(&format_id)
            .ok_or_else(|| Error::domain(format!("format {format_id} not in beta table {}", self.channel_label)))?;
        Beta::from_db(*db)
    }

    pub fn lookup_db(&self, format_id: u32) -> Result<f64> {
        self.lookup(format_id).map(|b| b.db())
    }

    pub fn contains(&self, format_id: u32) -> bool {
        self.entries.contains_key(&format_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().map(|(f, b)| (*f, *b))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
