//! Secret-key-rate engine: mutual information, Holevo bound, finite-size
//! correction, per-channel and total rates, reach and modulation-variance
//! optimization.
//!
//! Two independent routes to Eve's information bound exist on purpose:
//! closed-form expressions here, and the covariance-matrix construction in
//! [`covariance`]. They are held equal to 1e-8 by tests; do not "simplify"
//! one in terms of the other.
//!
//! Device handling: in the trusted (calibrated-device) mode the detector
//! beamsplitter and its electronic noise stay out of Eve's purification but
//! *do* enter Bob's measurement conditioning — detector noise degrades what
//! Bob learns, and thereby also what Eve holds about Bob's outcomes. In the
//! untrusted mode the detector is handed to Eve: transmittance and excess
//! noise are remapped to an effective channel (T → ηT, ε → ε + ν_el/(ηT))
//! with ideal conditioning.

pub mod covariance;

use crate::error::Error;
use crate::model::{fiber_transmittance, total_noise_at, Basis, FiniteSizeParams};

/// Entropy contribution g(x) = (x+1)·log2(x+1) − x·log2(x) of a thermal
/// mode with symplectic eigenvalue 2x+1; g(0) = 0 by continuity.
pub fn entropy_term_bits(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (x + 1.0) * (x + 1.0).log2() - x * x.log2()
}

/// Everything the rate formulas need for one channel at one link setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SecurityInputs {
    pub v_mod_snu: f64,
    pub t_ch: f64,
    /// Channel-referred excess noise ε in SNU.
    pub xi_snu: f64,
    pub eta_det: f64,
    /// Back-to-back electronic-to-shot ratio at this channel's IF.
    pub nu_det_snu: f64,
    pub beta: f64,
    pub trusted: bool,
    pub f_sym_hz: f64,
    /// Present for finite-size rates, absent for asymptotic ones.
    pub finite: Option<FiniteSizeParams>,
}

impl SecurityInputs {
    fn validate(&self) -> Result<(), Error> {
        if self.v_mod_snu < 0.0 {
            return Err(Error::domain("v_mod_snu must be >= 0"));
        }
        if !(self.t_ch > 0.0 && self.t_ch <= 1.0) {
            return Err(Error::domain("t_ch must be in (0, 1]"));
        }
        if !(self.eta_det > 0.0 && self.eta_det <= 1.0) {
            return Err(Error::domain("eta_det must be in (0, 1]"));
        }
        if self.xi_snu < 0.0 || self.nu_det_snu < 0.0 {
            return Err(Error::domain("noise terms must be >= 0"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::domain("beta must be in (0, 1]"));
        }
        Ok(())
    }

    fn with_channel(&self, t_ch: f64, xi_snu: f64) -> SecurityInputs {
        SecurityInputs { t_ch, xi_snu, ..self.clone() }
    }
}

/// Mutual information I_AB = ½·log2(1 + v_mod/(1 + Ξ_tot)) in bits/symbol,
/// with Ξ_tot the channel-referred total-noise budget.
pub fn mutual_information(si: &SecurityInputs) -> Result<f64, Error> {
    si.validate()?;
    let xi_tot = total_noise_at(si.t_ch, si.xi_snu, si.eta_det, si.nu_det_snu)?;
    Ok(0.5 * (1.0 + si.v_mod_snu / (1.0 + xi_tot)).log2())
}

/// Closed-form Holevo bound χ_BE in bits/symbol.
///
/// With V = v_mod+1, χ_line = 1/T − 1 + ε and χ_hom = ((1−η) + ν_el)/η
/// (ν_el = ν/T for the transmitted-LO referral):
///
/// ```text
/// A = V²(1−2T) + 2T + T²(V+χ_line)²      B = T²(V·χ_line + 1)²
/// λ₁,₂² = (A ± √(A²−4B))/2
/// C = (A·χ_hom + V·√B + T(V+χ_line)) / (T(V+χ_tot))
/// D = √B·(V + √B·χ_hom) / (T(V+χ_tot)),   χ_tot = χ_line + χ_hom/T
/// λ₃,₄² = (C ± √(C²−4D))/2
/// χ_BE = g((λ₁−1)/2) + g((λ₂−1)/2) − g((λ₃−1)/2) − g((λ₄−1)/2)
/// ```
///
/// Trusted mode uses these expressions as written (λ₁,₂ exclude the detector
/// from Eve's purification; λ₃,₄ retain χ_hom because Bob's conditioning
/// happens through the physical, noisy detector). Untrusted mode instead
/// evaluates the same algebra on the effective channel T→ηT,
/// ε→ε+ν_el/(ηT) with χ_hom=0.
pub fn holevo_bound(si: &SecurityInputs) -> Result<f64, Error> {
    si.validate()?;
    if si.v_mod_snu <= 0.0 {
        return Err(Error::domain("holevo_bound: v_mod_snu must be > 0"));
    }
    let v = si.v_mod_snu + 1.0;
    let nu_el = si.nu_det_snu / si.t_ch;
    let (t, chi_line, chi_hom) = if si.trusted {
        let chi_line = 1.0 / si.t_ch - 1.0 + si.xi_snu;
        let chi_hom = ((1.0 - si.eta_det) + nu_el) / si.eta_det;
        (si.t_ch, chi_line, chi_hom)
    } else {
        let t_eff = si.eta_det * si.t_ch;
        let eps_eff = si.xi_snu + nu_el / (si.eta_det * si.t_ch);
        (t_eff, 1.0 / t_eff - 1.0 + eps_eff, 0.0)
    };

    let a = v * v * (1.0 - 2.0 * t) + 2.0 * t + (t * (v + chi_line)).powi(2);
    let b = (t * (v * chi_line + 1.0)).powi(2);
    let (l1, l2) = eigen_pair(a, b)?;
    let sqrt_b = b.sqrt();
    let chi_tot = chi_line + chi_hom / t;
    let c = (a * chi_hom + v * sqrt_b + t * (v + chi_line)) / (t * (v + chi_tot));
    let d = sqrt_b * (v + sqrt_b * chi_hom) / (t * (v + chi_tot));
    let (l3, l4) = eigen_pair(c, d)?;

    Ok(entropy_term_bits((l1 - 1.0) / 2.0) + entropy_term_bits((l2 - 1.0) / 2.0)
        - entropy_term_bits((l3 - 1.0) / 2.0)
        - entropy_term_bits((l4 - 1.0) / 2.0))
}

/// Solve λ±² from λ₊²+λ₋² = s, λ₊²·λ₋² = p and enforce physicality
/// λ ≥ 1 − 1e-9 (values inside the tolerance band clamp to exactly 1).
///
/// Two guards keep double roots (e.g. λ₃ = λ₄ = 1 for a perfect channel)
/// from tripping the physicality check through round-off: a discriminant
/// below the noise floor of its own evaluation collapses to an exact
/// double root, and the smaller root comes from the product rule p/λ₊²
/// rather than the cancelling branch of the quadratic formula.
fn eigen_pair(s: f64, p: f64) -> Result<(f64, f64), Error> {
    let raw = s * s - 4.0 * p;
    let noise_floor = 8.0 * f64::EPSILON * (s * s + 4.0 * p.abs());
    let disc = if raw <= noise_floor { 0.0 } else { raw.sqrt() };
    let hi_sq = (s + disc) / 2.0;
    let lo_sq = if hi_sq > 0.0 { p / hi_sq } else { 0.0 };
    let mut out = [0.0_f64; 2];
    for (slot, sq) in out.iter_mut().zip([hi_sq, lo_sq]) {
        let lambda = sq.max(0.0).sqrt();
        if lambda < 1.0 - 1e-9 {
            return Err(Error::numerical(format!(
                "symplectic eigenvalue {lambda} < 1 beyond tolerance"
            )));
        }
        *slot = lambda.max(1.0);
    }
    Ok((out[0], out[1]))
}

/// Finite-size privacy-amplification correction Δ = 7·√(log2(2/ε̄)/n) in
/// bits/symbol.
pub fn finite_size_delta(n_key: u64, eps_bar: f64) -> Result<f64, Error> {
    if n_key == 0 {
        return Err(Error::domain("finite_size_delta: n_key must be > 0"));
    }
    if !(eps_bar > 0.0 && eps_bar < 1.0) {
        return Err(Error::domain("finite_size_delta: eps_bar must be in (0, 1)"));
    }
    Ok(7.0 * ((2.0 / eps_bar).log2() / n_key as f64).sqrt())
}

/// A key rate with its clamp flag: `no_key` records that the raw value was
/// non-positive and the reported rate was clamped to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRate {
    pub bits_per_second: f64,
    pub no_key: bool,
}

/// Finite-size net key fraction (bits/symbol, *unclamped*):
/// (n/N)·(β·I_AB − χ_BE(worst) − Δ). I_AB uses the point estimates in `si`;
/// χ_BE uses the worst-case pair.
pub fn net_key_fraction_finite(
    si: &SecurityInputs,
    t_low: f64,
    xi_high: f64,
) -> Result<f64, Error> {
    let fin = si
        .finite
        .as_ref()
        .ok_or_else(|| Error::domain("finite-size parameters required for finite rate"))?;
    let i_ab = mutual_information(si)?;
    let chi = holevo_bound(&si.with_channel(t_low, xi_high))?;
    let delta = finite_size_delta(fin.n_key(), fin.eps_bar)?;
    let frac = fin.n_key() as f64 / fin.n_total as f64;
    Ok(frac * (si.beta * i_ab - chi - delta))
}

/// Finite-size secret key rate in bits/second (Eq.-style clamp-at-zero).
pub fn skr_finite(si: &SecurityInputs, t_low: f64, xi_high: f64) -> Result<KeyRate, Error> {
    let net = net_key_fraction_finite(si, t_low, xi_high)?;
    Ok(KeyRate { bits_per_second: si.f_sym_hz * net.max(0.0), no_key: net <= 0.0 })
}

/// Asymptotic net key fraction β·I_AB − χ_BE in bits/symbol (unclamped).
pub fn net_key_fraction_asymptotic(si: &SecurityInputs) -> Result<f64, Error> {
    Ok(si.beta * mutual_information(si)? - holevo_bound(si)?)
}

/// Asymptotic secret key rate in bits/second (clamped at zero).
pub fn skr_asymptotic(si: &SecurityInputs) -> Result<KeyRate, Error> {
    let net = net_key_fraction_asymptotic(si)?;
    Ok(KeyRate { bits_per_second: si.f_sym_hz * net.max(0.0), no_key: net <= 0.0 })
}

/// Total rate over the channel block carrying `basis`.
pub fn total_skr(per_channel: &[(Basis, f64)], basis: Basis) -> f64 {
    per_channel.iter().filter(|(b, _)| *b == basis).map(|(_, r)| r).sum()
}

/// One channel's link-level description for reach searches: everything in
/// [`SecurityInputs`] except the transmittance, which is derived per
/// distance, plus the fiber loss slope.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachInputs {
    pub v_mod_snu: f64,
    /// Back-to-back calibrated channel-referred excess noise (point value).
    pub xi_bb_snu: f64,
    pub eta_det: f64,
    pub nu_det_snu: f64,
    pub beta: f64,
    pub trusted: bool,
    pub f_sym_hz: f64,
    pub loss_db_per_km: f64,
    pub finite: Option<FiniteSizeParams>,
}

impl ReachInputs {
    pub fn security_inputs_at(&self, km: f64) -> SecurityInputs {
        SecurityInputs {
            v_mod_snu: self.v_mod_snu,
            t_ch: fiber_transmittance(km, self.loss_db_per_km),
            xi_snu: self.xi_bb_snu,
            eta_det: self.eta_det,
            nu_det_snu: self.nu_det_snu,
            beta: self.beta,
            trusted: self.trusted,
            f_sym_hz: self.f_sym_hz,
            finite: self.finite,
        }
    }

    /// Net key fraction at a distance (unclamped bits/symbol).
    ///
    /// Finite-size evaluation composes the worst-case pair the way a
    /// deployed system does: the excess-noise bound ξ_high comes from the
    /// back-to-back calibration (where the parameter-estimation penalty is
    /// smallest), while the transmittance bound t_low is re-derived at each
    /// distance.
    pub fn net_key_fraction_at(&self, km: f64) -> Result<f64, Error> {
        let si = self.security_inputs_at(km);
        match &self.finite {
            None => net_key_fraction_asymptotic(&si),
            Some(fin) => {
                let bb = crate::estimation::worst_case_bounds(
                    1.0,
                    self.xi_bb_snu,
                    fin.m_pe,
                    self.v_mod_snu,
                    fin.eps_pe,
                    self.eta_det,
                    self.nu_det_snu,
                )?;
                let here = crate::estimation::worst_case_bounds(
                    si.t_ch,
                    self.xi_bb_snu,
                    fin.m_pe,
                    self.v_mod_snu,
                    fin.eps_pe,
                    self.eta_det,
                    self.nu_det_snu,
                )?;
                net_key_fraction_finite(&si, here.t_low, bb.xi_high)
            }
        }
    }

    /// Clamped rate in bits/second at a distance.
    pub fn skr_at(&self, km: f64) -> Result<KeyRate, Error> {
        let net = self.net_key_fraction_at(km)?;
        Ok(KeyRate { bits_per_second: self.f_sym_hz * net.max(0.0), no_key: net <= 0.0 })
    }
}

/// Longest fiber length with positive key rate, found by bisection to
/// `resolution_km`. Returns 0 when no distance (including 0 km) yields a
/// positive rate.
pub fn max_distance(reach: &ReachInputs, resolution_km: f64) -> Result<f64, Error> {
    let resolution = if resolution_km > 0.0 { resolution_km } else { 0.1 };
    if reach.net_key_fraction_at(0.0)? <= 0.0 {
        return Ok(0.0);
    }
    // Bracket the zero crossing by doubling; the cap guards pathological
    // parameter sets whose trusted-noise bookkeeping never goes negative.
    const KM_CAP: f64 = 20_000.0;
    let mut lo = 0.0;
    let mut hi = 8.0;
    while reach.net_key_fraction_at(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi >= KM_CAP {
            return Ok(KM_CAP);
        }
    }
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if reach.net_key_fraction_at(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Result of the modulation-variance search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmodOptimum {
    pub v_mod_snu: f64,
    /// Set when the objective was flat over the whole search range; the
    /// returned point is then the lower search bound.
    pub degenerate: bool,
}

/// Modulation variance maximizing the *asymptotic* rate at `target_km`.
///
/// A coarse grid over [0.1, 50] SNU brackets the maximum of the unclamped
/// objective first (golden-section alone can drift on the clamped-zero
/// plateau), then golden-section refinement narrows to 0.01 SNU.
pub fn optimize_vmod(reach: &ReachInputs, target_km: f64) -> Result<VmodOptimum, Error> {
    const LO: f64 = 0.1;
    const HI: f64 = 50.0;
    const TOL: f64 = 0.01;
    let objective = |v: f64| -> Result<f64, Error> {
        let mut r = reach.clone();
        r.v_mod_snu = v;
        r.finite = None;
        let si = r.security_inputs_at(target_km);
        net_key_fraction_asymptotic(&si)
    };

    let n_grid = 120;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    let mut worst = f64::INFINITY;
    let grid_v = |i: usize| LO + (HI - LO) * i as f64 / n_grid as f64;
    for i in 0..=n_grid {
        let y = objective(grid_v(i))?;
        if y > best {
            best = y;
            best_i = i;
        }
        worst = worst.min(y);
    }
    if best - worst < 1e-12 {
        return Ok(VmodOptimum { v_mod_snu: LO, degenerate: true });
    }

    let mut a = grid_v(best_i.saturating_sub(1));
    let mut b = grid_v((best_i + 1).min(n_grid));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - phi * (b - a), a + phi * (b - a));
    let (mut fc, mut fd) = (objective(c)?, objective(d)?);
    while b - a > TOL {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = objective(d)?;
        }
    }
    Ok(VmodOptimum { v_mod_snu: 0.5 * (a + b), degenerate: false })
}
