//! Seeded frequency-selective channel realizations on an OFDMA tone layout.
//!
//! Randomness comes from ChaCha20 seeded with `seed_from_u64(seed)`; the
//! realization with index `k` of a batch reads ChaCha stream `k`, so any
//! realization can be regenerated on its own and batches can be produced in
//! parallel without changing their values.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eesm::SinrVector;
use crate::error::{Error, Result};
use crate::units::db_to_linear;

/// Downlink PUSC layout for a 10 MHz channel.
pub const PUSC_DL_10MHZ_JSON: &str = include_str!("../data/pusc_dl_10mhz.json");
pub const PEDB_LIKE_JSON: &str = include_str!("../data/pedb-like.json");
pub const VEHA_LIKE_JSON: &str = include_str!("../data/veha-like.json");

/// OFDMA symbol layout. Field names follow the usual parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmaConfig {
    pub bandwidth_mhz: f64,
    pub sampling_freq_mhz: f64,
    pub subcarrier_spacing_khz: f64,
    pub fft_size: usize,
    pub null_subcarriers: usize,
    pub pilot_subcarriers: usize,
    pub data_subcarriers: usize,
    pub subchannels: usize,
    pub useful_symbol_time_us: f64,
    pub guard_time_us: f64,
}

impl OfdmaConfig {
    pub fn pusc_dl_10mhz() -> Self {
        serde_json::from_str(PUSC_DL_10MHZ_JSON).expect("shipped PUSC config parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn data_per_subchannel(&self) -> usize {
        self.data_subcarriers / self.subchannels.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let used = self.null_subcarriers + self.pilot_subcarriers + self.data_subcarriers;
        if used != self.fft_size {
            return Err(Error::Config(format!(
                "null + pilot + data = {} + {} + {} = {used}, expected fft_size {}",
                self.null_subcarriers, self.pilot_subcarriers, self.data_subcarriers, self.fft_size
            )));
        }
        if self.data_subcarriers == 0 {
            return Err(Error::Config("no data subcarriers".into()));
        }
        if self.subchannels == 0 || !self.data_subcarriers.is_multiple_of(self.subchannels) {
            return Err(Error::Config(format!(
                "{} data subcarriers do not split evenly into {} subchannels",
                self.data_subcarriers, self.subchannels
            )));
        }
        if !(self.sampling_freq_mhz > 0.0) {
            return Err(Error::Config("sampling frequency must be positive".into()));
        }
        let expected_guard = self.useful_symbol_time_us / 8.0;
        if !(self.useful_symbol_time_us > 0.0) || ((self.guard_time_us - expected_guard) / expected_guard).abs() > 0.01
        {
            return Err(Error::Config(format!(
                "guard time {} us is not useful time / 8 = {expected_guard:.3} us within 1%",
                self.guard_time_us
            )));
        }
        Ok(())
    }

    /// FFT bin indices carrying data: the lowest contiguous block after
    /// splitting the null tones evenly between the two band edges.
    pub fn data_tone_indices(&self) -> std::ops::Range<usize> {
        let start = self.null_subcarriers / 2;
        start..start + self.data_subcarriers
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay_ns: f64,
    pub power_db: f64,
}

/// Tapped-delay-line profile. Tap powers are renormalized to unit total power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub name: String,
    #[serde(default)]
    pub speed_kmh: f64,
    pub taps: Vec<Tap>,
}

impl ChannelProfile {
    pub fn new(name: impl Into<String>, speed_kmh: f64, taps: Vec<Tap>) -> Result<Self> {
        let mut profile = Self {
            name: name.into(),
            speed_kmh,
            taps,
        };
        profile.normalize()?;
        Ok(profile)
    }

    /// One tap at zero delay: a frequency-flat channel.
    pub fn single_tap() -> Self {
        Self::new(
            "single-tap",
            0.0,
            vec![Tap {
                delay_ns: 0.0,
                power_db: 0.0,
            }],
        )
        .expect("valid")
    }

    pub fn pedb_like() -> Self {
        Self::from_json(PEDB_LIKE_JSON).expect("shipped profile parses")
    }

    pub fn veha_like() -> Self {
        Self::from_json(VEHA_LIKE_JSON).expect("shipped profile parses")
    }

    /// Looks up a shipped profile by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "pedb-like" => Some(Self::pedb_like()),
            "veha-like" => Some(Self::veha_like()),
            "single-tap" | "flat" => Some(Self::single_tap()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut profile: Self = serde_json::from_str(text)?;
        profile.normalize()?;
        Ok(profile)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn normalize(&mut self) -> Result<()> {
        if self.taps.is_empty() {
            return Err(Error::Config(format!("profile {} has no taps", self.name)));
        }
        for w in self.taps.windows(2) {
            if !(w[1].delay_ns > w[0].delay_ns) {
                return Err(Error::Config(format!(
                    "profile {}: tap delays must be strictly increasing",
                    self.name
                )));
            }
        }
        if self
            .taps
            .iter()
            .any(|t| !(t.delay_ns >= 0.0) || !t.power_db.is_finite())
        {
            return Err(Error::Config(format!(
                "profile {}: delays must be >= 0 and powers finite",
                self.name
            )));
        }
        let total: f64 = self.taps.iter().map(|t| db_to_linear(t.power_db)).sum();
        let offset = 10.0 * total.log10();
        for tap in &mut self.taps {
            tap.power_db -= offset;
        }
        Ok(())
    }

    pub fn linear_powers(&self) -> Vec<f64> {
        self.taps.iter().map(|t| db_to_linear(t.power_db)).collect()
    }
}

/// Complex gains on the data tones for one draw of the tap coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub tone_gains: Vec<Complex64>,
    pub seed: u64,
    pub stream: u64,
    pub profile_name: String,
}

impl ChannelRealization {
    pub fn power_gains(&self) -> impl Iterator<Item = f64> + '_ {
        self.tone_gains.iter().map(|g| g.norm_sqr())
    }
}

/// Random generator for realization `stream` of the batch keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// Draws one realization (stream 0 of `seed`).
pub fn realize_channel(profile: &ChannelProfile, config: &OfdmaConfig, seed: u64) -> ChannelRealization {
    realize_channel_stream(profile, config, seed, 0)
}

/// Draws realization number `stream` of the batch keyed by `seed`.
///
/// Tap delays are rounded to the sampling period, taps are zero-mean
/// complex Gaussian with their normalized mean power as variance, and the
/// response at FFT bin `k` is `sum_l h_l exp(-j 2 pi (k - N/2) n_l / N)`.
pub fn realize_channel_stream(
    profile: &ChannelProfile,
    config: &OfdmaConfig,
    seed: u64,
    stream: u64,
) -> ChannelRealization {
    let mut rng = substream(seed, stream);
    let sample_period_ns = 1e3 / config.sampling_freq_mhz;
    let taps: Vec<(f64, Complex64)> = profile
        .taps
        .iter()
        .map(|t| {
            let lag = (t.delay_ns / sample_period_ns).round();
            (lag, complex_gaussian(&mut rng, db_to_linear(t.power_db)))
        })
        .collect();

    let n = config.fft_size as f64;
    let half = (config.fft_size / 2) as f64;
    let response: Vec<Complex64> = (0..config.fft_size)
        .map(|k| {
            let f = k as f64 - half;
            taps.iter()
                .map(|&(lag, h)| h * Complex64::from_polar(1.0, -2.0 * PI * f * lag / n))
                .sum()
        })
        .collect();

    ChannelRealization {
        tone_gains: response[config.data_tone_indices()].to_vec(),
        seed,
        stream,
        profile_name: profile.name.clone(),
    }
}

/// Realizations `0..count` of `seed`, generated in parallel.
pub fn realize_batch(
    profile: &ChannelProfile,
    config: &OfdmaConfig,
    seed: u64,
    count: usize,
) -> Vec<ChannelRealization> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| realize_channel_stream(profile, config, seed, k))
        .collect()
}

/// Per-tone SINR: `|gain|^2` scaled to the given mean SNR.
///
/// Tones in an exact spectral null are floored at the smallest positive
/// double so the vector stays valid.
pub fn sinr_per_tone(realization: &ChannelRealization, mean_snr_db: f64) -> SinrVector {
    let scale = db_to_linear(mean_snr_db);
    let values = realization
        .power_gains()
        .map(|p| (p * scale).max(f64::MIN_POSITIVE))
        .collect();
    SinrVector::new(values).expect("power gains are finite and positive")
}

/// `n` independent exponential SINRs (Rayleigh amplitude) with the given mean.
pub fn rayleigh_flat_vector(n: usize, mean_snr_db: f64, seed: u64) -> Result<SinrVector> {
    if n == 0 {
        return Err(Error::domain("need at least one tone"));
    }
    let mean = db_to_linear(mean_snr_db);
    let mut rng = substream(seed, 0);
    let values = (0..n)
        .map(|_| {
            let e: f64 = rng.sample(Exp1);
            (e * mean).max(f64::MIN_POSITIVE)
        })
        .collect();
    SinrVector::new(values)
}
