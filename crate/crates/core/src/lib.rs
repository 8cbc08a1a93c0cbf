//! EESM link-to-system toolkit.
//!
//! Per-tone SINR generation for OFDMA channels, exponential effective SINR
//! mapping, AWGN reference curves, beta calibration and the CINR reporting
//! protocol between a mobile and a base station.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod channel;
mod column;
pub mod curves;
pub mod eesm;
mod error;
pub mod minimize;
pub mod protocol;
pub mod session;
pub mod units;

pub use calibration::{
    train_beta, BetaTable, BlerWindow, CalibrationReport, CalibrationSample, CalibrationSet, TrainOptions,
};
pub use channel::{ChannelProfile, ChannelRealization, OfdmaConfig};
pub use curves::{CurvePoint, CurveSet, ReferenceCurve};
pub use eesm::{eesm_db, eesm_effective_sinr, Beta, BoostRatio, EffectiveSinr, SinrVector};
pub use error::{Error, Result};
pub use protocol::{BsState, CinrReport, CurveApprox, Message, MssEndpoint};
pub use units::{db_to_linear, linear_to_db};
