//! Physical and security parameters in shot-noise units.
//!
//! Everything downstream — DSP, detection, estimation, rates — consumes the
//! types defined here. Conventions, fixed once for the whole crate:
//!
//! - **Shot-noise units (SNU):** vacuum quadrature variance = 1. All
//!   variances (modulation, excess noise, electronic noise) are SNU.
//! - **Channel-input referral:** excess noise ε is quoted at the channel
//!   input. A noise source of variance ε at the input appears as η·T·ε at
//!   the detector output.
//! - **Transmitted local oscillator:** the LO travels through the same fiber
//!   as the signal, so the shot-noise reference shrinks with transmittance
//!   and the *relative* electronic noise grows as ν/T. `nu_det_snu` values
//!   are always the back-to-back (T=1) ratio; the ν/T referral happens
//!   inside [`total_noise`] and the detection model.

use crate::error::Error;

/// Quadrature basis carried by a channel block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Amplitude,
    Phase,
}

impl Basis {
    pub fn as_str(self) -> &'static str {
        match self {
            Basis::Amplitude => "amplitude",
            Basis::Phase => "phase",
        }
    }
}

impl std::str::FromStr for Basis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "amplitude" => Ok(Basis::Amplitude),
            "phase" => Ok(Basis::Phase),
            other => Err(Error::Config(format!(
                "basis must be \"amplitude\" or \"phase\", got \"{other}\""
            ))),
        }
    }
}

/// One FDM subcarrier: baseband symbol rate, IF placement, modulation
/// variance and basis assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSettings {
    pub index: usize,
    pub symbol_rate_hz: f64,
    pub if_freq_hz: f64,
    pub mod_variance_snu: f64,
    pub basis: Basis,
}

/// Optional narrowband tone near DC (clock/pilot leakage studies).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotTone {
    pub freq_hz: f64,
    /// Amplitude in the same SNU-referenced units as the modulated signal.
    pub relative_amplitude: f64,
}

/// One paired Alice-sent / Bob-measured quadrature value, in SNU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolRecord {
    pub channel: usize,
    pub basis: Basis,
    pub index: u64,
    pub alice_snu: f64,
    pub bob_snu: f64,
}

/// The FDM layout: an ordered set of channels plus optional pilot tones.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPlan {
    pub channels: Vec<ChannelSettings>,
    /// Uniform IF spacing, when the plan is uniform (single-channel plans
    /// have no spacing).
    pub spacing_hz: Option<f64>,
    pub pilot_tones: Vec<PilotTone>,
}

impl ChannelPlan {
    /// Validates invariants and derives the uniform spacing when present.
    pub fn new(channels: Vec<ChannelSettings>, pilot_tones: Vec<PilotTone>) -> Result<Self, Error> {
        if channels.is_empty() {
            return Err(Error::domain("channel plan needs at least one channel"));
        }
        for ch in &channels {
            if ch.symbol_rate_hz <= 0.0 {
                return Err(Error::domain(format!(
                    "channel {}: symbol_rate_hz must be > 0",
                    ch.index
                )));
            }
            if ch.if_freq_hz <= 0.0 {
                return Err(Error::domain(format!("channel {}: if_freq_hz must be > 0", ch.index)));
            }
            if ch.mod_variance_snu <= 0.0 {
                return Err(Error::domain(format!(
                    "channel {}: mod_variance_snu must be > 0",
                    ch.index
                )));
            }
        }
        for pair in channels.windows(2) {
            if pair[1].if_freq_hz <= pair[0].if_freq_hz {
                return Err(Error::domain("channel IF frequencies must be strictly increasing"));
            }
        }
        let spacing_hz = derive_uniform_spacing(&channels);
        Ok(ChannelPlan { channels, spacing_hz, pilot_tones })
    }

    /// Channels carrying the given basis, in plan order.
    pub fn channels_in_basis(&self, basis: Basis) -> impl Iterator<Item = &ChannelSettings> {
        self.channels.iter().filter(move |c| c.basis == basis)
    }
}

fn derive_uniform_spacing(channels: &[ChannelSettings]) -> Option<f64> {
    if channels.len() < 2 {
        return None;
    }
    let d0 = channels[1].if_freq_hz - channels[0].if_freq_hz;
    let uniform = channels
        .windows(2)
        .all(|p| ((p[1].if_freq_hz - p[0].if_freq_hz) - d0).abs() <= 1e-6 * d0.abs());
    uniform.then_some(d0)
}

/// Fiber link and protocol-level parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub fiber_length_km: f64,
    pub fiber_loss_db_per_km: f64,
    /// Detector quantum efficiency η in (0, 1].
    pub eta_det: f64,
    /// Reconciliation efficiency β in (0, 1].
    pub beta: f64,
    /// Calibrated-device scenario: detector inefficiency and electronic
    /// noise are treated as known rather than adversarial.
    pub trusted_devices: bool,
    /// Symbol rate entering the bits-per-second conversion.
    pub f_sym_hz: f64,
}

impl LinkParams {
    /// Channel transmittance derived from length and loss.
    pub fn t_ch(&self) -> f64 {
        fiber_transmittance(self.fiber_length_km, self.fiber_loss_db_per_km)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.fiber_length_km < 0.0 || self.fiber_loss_db_per_km < 0.0 {
            return Err(Error::domain("fiber length and loss must be non-negative"));
        }
        if !(self.eta_det > 0.0 && self.eta_det <= 1.0) {
            return Err(Error::domain("eta_det must be in (0, 1]"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::domain("beta must be in (0, 1]"));
        }
        if self.f_sym_hz <= 0.0 {
            return Err(Error::domain("f_sym_hz must be > 0"));
        }
        Ok(())
    }
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            fiber_length_km: 0.0,
            fiber_loss_db_per_km: 0.2,
            eta_det: 0.83,
            beta: 0.9,
            trusted_devices: true,
            f_sym_hz: 10e6,
        }
    }
}

/// Block-size bookkeeping for finite-size security.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteSizeParams {
    /// Total symbols N in the block.
    pub n_total: u64,
    /// Symbols m spent on parameter estimation.
    pub m_pe: u64,
    /// Privacy-amplification failure probability ε̄.
    pub eps_bar: f64,
    /// Parameter-estimation failure probability.
    pub eps_pe: f64,
}

impl FiniteSizeParams {
    pub fn new(n_total: u64, m_pe: u64, eps_bar: f64, eps_pe: f64) -> Result<Self, Error> {
        if n_total == 0 || m_pe == 0 || m_pe >= n_total {
            return Err(Error::domain("need 0 < m_pe < n_total"));
        }
        for (name, p) in [("eps_bar", eps_bar), ("eps_pe", eps_pe)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::domain(format!("{name} must be in (0, 1)")));
            }
        }
        Ok(FiniteSizeParams { n_total, m_pe, eps_bar, eps_pe })
    }

    /// Key symbols n = N − m.
    pub fn n_key(&self) -> u64 {
        self.n_total - self.m_pe
    }
}

impl Default for FiniteSizeParams {
    fn default() -> Self {
        FiniteSizeParams {
            n_total: 10_000_000,
            m_pe: 1_250_000,
            eps_bar: 1e-10,
            eps_pe: 1e-10,
        }
    }
}

/// Piecewise-linear map frequency → value, flat beyond its end points.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    /// Points must be strictly increasing in frequency with non-negative values.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, Error> {
        if points.is_empty() {
            return Err(Error::domain("piecewise-linear map needs at least one point"));
        }
        for pair in points.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::domain("piecewise-linear breakpoints must be strictly increasing"));
            }
        }
        if points.iter().any(|&(_, y)| y < 0.0 || !y.is_finite()) {
            return Err(Error::domain("piecewise-linear values must be finite and >= 0"));
        }
        Ok(PiecewiseLinear { points })
    }

    pub fn constant(value: f64) -> Self {
        PiecewiseLinear::new(vec![(0.0, value)]).expect("constant map is always valid")
    }

    pub fn eval(&self, f_hz: f64) -> f64 {
        let pts = &self.points;
        if f_hz <= pts[0].0 {
            return pts[0].1;
        }
        if f_hz >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let i = pts.partition_point(|&(x, _)| x <= f_hz);
        let (x0, y0) = pts[i - 1];
        let (x1, y1) = pts[i];
        y0 + (y1 - y0) * (f_hz - x0) / (x1 - x0)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Frequency-dependent detector and environment noise description.
///
/// The bundled default is **synthetic**: measured tables for a given
/// receiver are calibration inputs, so the default only reproduces the
/// qualitative shape (electronic-to-shot ratio degrading above ~250 MHz, a
/// strong carrier-proximity noise hump that decays into its flat tail by
/// ~20 MHz).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    /// Electronic-noise-to-shot-noise ratio vs frequency (back-to-back).
    pub detector_ratio: PiecewiseLinear,
    /// Carrier-proximity noise variance vs frequency, channel-referred SNU.
    pub carrier_noise: PiecewiseLinear,
    /// Channel-referred excess noise not produced by the simulation itself.
    pub excess_noise_floor_snu: f64,
    /// Global multiplier on `detector_ratio` set by calibration.
    pub nu_scale: f64,
}

impl NoiseProfile {
    /// Electronic-to-shot ratio at a channel's IF, including the calibration
    /// scale (back-to-back; divide by T for the in-link value).
    pub fn nu_det_at(&self, f_if_hz: f64) -> f64 {
        self.detector_ratio.eval(f_if_hz) * self.nu_scale
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.excess_noise_floor_snu < 0.0 {
            return Err(Error::domain("excess_noise_floor_snu must be >= 0"));
        }
        if self.nu_scale < 0.0 {
            return Err(Error::domain("nu_scale must be >= 0"));
        }
        Ok(())
    }
}

impl Default for NoiseProfile {
    fn default() -> Self {
        NoiseProfile {
            detector_ratio: PiecewiseLinear::new(vec![
                (0.0, 0.074),
                (100e6, 0.076),
                (200e6, 0.082),
                (300e6, 0.100),
                (450e6, 0.170),
                (700e6, 0.450),
                (1.2e9, 1.400),
            ])
            .expect("default detector map is valid"),
            carrier_noise: PiecewiseLinear::new(vec![
                (0.0, 830.0),
                (4e6, 620.0),
                (8e6, 235.0),
                (12e6, 36.0),
                (15e6, 2.9),
                (18e6, 0.16),
                (22e6, 0.015),
                (40e6, 0.012),
                (1.2e9, 0.012),
            ])
            .expect("default carrier map is valid"),
            excess_noise_floor_snu: 0.0125,
            nu_scale: 1.0,
        }
    }
}

/// Fiber transmittance 10^(−loss·L/10).
pub fn fiber_transmittance(length_km: f64, loss_db_per_km: f64) -> f64 {
    10f64.powf(-loss_db_per_km * length_km / 10.0)
}

/// Total channel-referred noise budget of a transmitted-LO link:
///
/// Ξ_tot = (1−T)/T + ε + (1/T)·((1−η)/η + (ν/T)/η)
///
/// where T is the channel transmittance, ε the channel-referred excess
/// noise, η the detector efficiency and ν the back-to-back electronic noise.
/// The inner ν/T is the LO-attenuation referral; the outer 1/T refers the
/// whole detector contribution to the channel input. Equivalent output-plane
/// form (unit-tested): Bob's noise variance = 1 + ηTε + ν/T.
pub fn total_noise(link: &LinkParams, epsilon_snu: f64, nu_det_snu: f64) -> Result<f64, Error> {
    let t = link.t_ch();
    let eta = link.eta_det;
    if t <= 0.0 {
        return Err(Error::domain("total_noise: transmittance must be > 0"));
    }
    if eta <= 0.0 {
        return Err(Error::domain("total_noise: eta_det must be > 0"));
    }
    if epsilon_snu < 0.0 || nu_det_snu < 0.0 {
        return Err(Error::domain("total_noise: noise terms must be >= 0"));
    }
    Ok((1.0 - t) / t + epsilon_snu + ((1.0 - eta) / eta + (nu_det_snu / t) / eta) / t)
}

/// Same budget with the transmittance given directly (no LinkParams).
pub fn total_noise_at(t: f64, epsilon_snu: f64, eta: f64, nu_det_snu: f64) -> Result<f64, Error> {
    if t <= 0.0 || t > 1.0 {
        return Err(Error::domain("total_noise: transmittance must be in (0, 1]"));
    }
    if eta <= 0.0 || eta > 1.0 {
        return Err(Error::domain("total_noise: eta_det must be in (0, 1]"));
    }
    if epsilon_snu < 0.0 || nu_det_snu < 0.0 {
        return Err(Error::domain("total_noise: noise terms must be >= 0"));
    }
    Ok((1.0 - t) / t + epsilon_snu + ((1.0 - eta) / eta + (nu_det_snu / t) / eta) / t)
}
