//! Channel-parameter recovery from paired symbol records, and worst-case
//! confidence bounds for finite-size security.
//!
//! ## Referral conventions (frozen)
//!
//! Bob's measured quadrature for one channel is modeled as
//! `b = √(η·t)·a + n` with `Var(n) = 1 + ν/t + η·t·ξ` in SNU: unit shot
//! noise, calibrated electronics at `ν/t` (the local oscillator rides the
//! same fiber, so its back-to-back shot-normalized ratio ν grows as 1/t),
//! and channel-input excess noise ξ seen through η·t. This is the same
//! grouping [`crate::model::total_noise`] uses.
//!
//! Estimators are least squares through the origin:
//!
//! ```text
//! ŝ = Σ a·b / Σ a²        t̂ = ŝ²/η
//! ξ̂ = (Var_resid − 1 − ν/t̂) / (η·t̂)
//! ```
//!
//! ## Worst-case bounds (frozen normal-approximation formulas)
//!
//! ```text
//! σ_B²    = 1 + ν/t̂ + η·t̂·ξ̂           residual variance at Bob
//! σ_√t    = √(σ_B² / (m·v_mod·η))       std. dev. of √t̂
//! t_low   = (max(√t̂ − z·σ_√t, 0))²
//! ξ_high  = ξ̂ + z·√(2/m)·σ_B²/(η·t̂)
//! ```
//!
//! with z the quantile at which a standard normal is exceeded with
//! probability eps_pe/2. These expressions are unit-tested against the
//! Monte Carlo spread of the estimators themselves.

use crate::error::Error;
use crate::model::SymbolRecord;
use crate::report::RateReport;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use statrs::function::erf::erfc;

/// Channel estimates plus the quality flags the finite-size pipeline needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEstimate {
    pub t_hat: f64,
    pub xi_hat_snu: f64,
    /// Raw least-squares slope √(η·t̂).
    pub s_hat: f64,
    /// Residual variance at Bob in SNU.
    pub var_resid: f64,
    pub m_used: usize,
    /// The raw excess-noise estimate was negative (statistical fluctuation)
    /// and was clamped to zero.
    pub xi_clamped: bool,
    /// t̂ fell outside (0, 1.05]; estimates are still reported.
    pub t_out_of_range: bool,
}

/// Confidence bounds for the parameter-estimation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseBounds {
    pub t_low: f64,
    pub xi_high: f64,
    /// The normal quantile used, P(Z > z) = eps_pe/2.
    pub z: f64,
}

/// Normal quantile z with P(Z > z) = eps_pe/2, i.e. erfc(z/√2) = eps_pe,
/// found by bisection on the complementary error function (well-conditioned
/// far into the tail, unlike 1 − Φ(z) round-trips).
pub fn pe_quantile(eps_pe: f64) -> Result<f64, Error> {
    if !(eps_pe > 0.0 && eps_pe < 1.0) {
        return Err(Error::domain("pe_quantile: eps_pe must be in (0, 1)"));
    }
    let f = |z: f64| erfc(z / std::f64::consts::SQRT_2) - eps_pe;
    let (mut lo, mut hi) = (0.0_f64, 60.0_f64);
    if f(lo) < 0.0 {
        return Ok(0.0);
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Recover (t̂, ξ̂) from a seeded random subset of `m` paired records.
///
/// The subset is random rather than a prefix so that transient filter
/// settling at the start of a simulated burst cannot bias the estimate;
/// `seed` makes the draw reproducible. `m == records.len()` uses every
/// record in order.
pub fn estimate_channel(
    records: &[SymbolRecord],
    v_mod_snu: f64,
    eta_det: f64,
    nu_det_snu: f64,
    m: usize,
    seed: u64,
) -> Result<ChannelEstimate, Error> {
    if v_mod_snu <= 0.0 {
        return Err(Error::domain("estimate_channel: v_mod_snu must be > 0"));
    }
    if !(eta_det > 0.0 && eta_det <= 1.0) {
        return Err(Error::domain("estimate_channel: eta_det must be in (0, 1]"));
    }
    if nu_det_snu < 0.0 {
        return Err(Error::domain("estimate_channel: nu_det_snu must be >= 0"));
    }
    if m < 2 || m > records.len() {
        return Err(Error::domain(format!(
            "estimate_channel: m = {m} must be in [2, {}]",
            records.len()
        )));
    }

    let mut s_ab = 0.0;
    let mut s_aa = 0.0;
    let mut accumulate = |r: &SymbolRecord| {
        s_ab += r.alice_snu * r.bob_snu;
        s_aa += r.alice_snu * r.alice_snu;
    };
    let subset: Option<Vec<usize>> = if m == records.len() {
        records.iter().for_each(&mut accumulate);
        None
    } else {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let idx = rand::seq::index::sample(&mut rng, records.len(), m).into_vec();
        idx.iter().for_each(|&i| accumulate(&records[i]));
        Some(idx)
    };
    if s_aa <= 0.0 {
        return Err(Error::numerical("estimate_channel: degenerate Alice variance"));
    }

    let s_hat = s_ab / s_aa;
    let t_hat = s_hat * s_hat / eta_det;
    let t_out_of_range = !(t_hat > 0.0 && t_hat <= 1.05);

    let mut rss = 0.0;
    let mut add_resid = |r: &SymbolRecord| {
        let e = r.bob_snu - s_hat * r.alice_snu;
        rss += e * e;
    };
    match &subset {
        None => records.iter().for_each(&mut add_resid),
        Some(idx) => idx.iter().for_each(|&i| add_resid(&records[i])),
    }
    let var_resid = rss / (m - 1) as f64;

    if t_hat <= 0.0 {
        return Err(Error::numerical("estimate_channel: non-positive transmittance estimate"));
    }
    let xi_raw = (var_resid - 1.0 - nu_det_snu / t_hat) / (eta_det * t_hat);
    let xi_clamped = xi_raw < 0.0;
    Ok(ChannelEstimate {
        t_hat,
        xi_hat_snu: xi_raw.max(0.0),
        s_hat,
        var_resid,
        m_used: m,
        xi_clamped,
        t_out_of_range,
    })
}

/// Worst-case (t_low, ξ_high) from point estimates, per the frozen
/// normal-approximation formulas in the module docs. η and ν enter through
/// the residual-variance term σ_B².
pub fn worst_case_bounds(
    t_hat: f64,
    xi_hat: f64,
    m: u64,
    v_mod: f64,
    eps_pe: f64,
    eta_det: f64,
    nu_det_snu: f64,
) -> Result<WorstCaseBounds, Error> {
    if m == 0 {
        return Err(Error::domain("worst_case_bounds: m must be > 0"));
    }
    if !(t_hat > 0.0) || v_mod <= 0.0 || xi_hat < 0.0 || nu_det_snu < 0.0 {
        return Err(Error::domain("worst_case_bounds: invalid point estimates"));
    }
    if !(eta_det > 0.0 && eta_det <= 1.0) {
        return Err(Error::domain("worst_case_bounds: eta_det must be in (0, 1]"));
    }
    let z = pe_quantile(eps_pe)?;
    let m_f = m as f64;
    let sigma_b2 = 1.0 + nu_det_snu / t_hat + eta_det * t_hat * xi_hat;
    let sigma_sqrt_t = (sigma_b2 / (m_f * v_mod * eta_det)).sqrt();
    let t_low = (t_hat.sqrt() - z * sigma_sqrt_t).max(0.0).powi(2);
    let xi_high = xi_hat + z * (2.0 / m_f).sqrt() * sigma_b2 / (eta_det * t_hat);
    Ok(WorstCaseBounds { t_low, xi_high, z })
}

/// Worst-case basis selection: of the two per-basis reports, return the one
/// whose headline total rate is lower (ties keep the first).
pub fn worst_basis<'a>(first: &'a RateReport, second: &'a RateReport) -> &'a RateReport {
    if second.headline_total_bits_per_s() < first.headline_total_bits_per_s() {
        second
    } else {
        first
    }
}
