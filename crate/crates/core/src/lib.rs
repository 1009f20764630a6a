//! Waveform-level simulator and analytic rate engine for frequency-division-
//! multiplexed continuous-variable QKD links.
//!
//! The crate is organized around the life of a CV-QKD transmission:
//!
//! - [`model`] — physical and security parameters in shot-noise units (SNU),
//!   fiber transmittance, and the transmitted-LO total-noise budget.
//! - [`dsp_chain`] — Gaussian symbol generation, Bessel low-pass shaping,
//!   IF up/down-conversion, FDM mux/demux, symbol sampling, and analytic
//!   crosstalk integrals.
//! - [`channel_detector`] — fiber loss plus Monte Carlo homodyne detection
//!   with calibrated shot noise, frequency-shaped electronic noise, and
//!   carrier-proximity noise.
//! - [`estimation`] — transmittance/excess-noise estimators and worst-case
//!   confidence bounds for finite-size security.
//! - [`security_rates`] — mutual information, Holevo bound (closed form and
//!   covariance-matrix oracle), finite-size correction, key rates, distance
//!   and modulation-variance optimization.
//! - [`sweep`] / [`report`] / [`config`] — experiment drivers, CSV reports,
//!   and the text configuration format shared with the CLI.
//!
//! All variances are expressed in shot-noise units with the vacuum quadrature
//! variance equal to 1 SNU; this normalization is global.

pub mod channel_detector;
pub mod config;
pub mod dsp_chain;
pub mod error;
pub mod estimation;
pub mod model;
pub mod report;
pub mod security_rates;
pub mod sweep;

pub use channel_detector::{
    apply_channel, homodyne_detect, simulate_link, simulate_link_both_bases, DetectionConfig,
};
pub use error::Error;
pub use model::{
    fiber_transmittance, total_noise, Basis, ChannelPlan, ChannelSettings, FiniteSizeParams,
    LinkParams, NoiseProfile, PiecewiseLinear, SymbolRecord,
};
pub use report::{ChannelRate, RateReport};
