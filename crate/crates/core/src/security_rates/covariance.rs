//! Covariance-matrix route to the Holevo bound.
//!
//! This module computes Eve's information bound *numerically* from Gaussian
//! covariance matrices: build the two-mode entangled-state covariance matrix
//! of the effective channel, model the detector as a beamsplitter with an
//! EPR-thermalized ancilla, apply homodyne conditioning by a Schur
//! complement, and read von Neumann entropies off the symplectic spectrum
//! of γ (the moduli of the eigenvalues of iΩγ).
//!
//! It intentionally shares no algebra with the closed-form expressions in the
//! parent module: the closed forms are validated against this routine over a
//! random parameter grid (see the oracle-equivalence tests). Keep it slow and
//! obvious; it is a cross-check, not a hot path.
//!
//! Quadrature ordering is (x₁, p₁, x₂, p₂, …).

use nalgebra::DMatrix;

use crate::error::Error;
use crate::security_rates::entropy_term_bits;

/// Symplectic form Ω for `n_modes` modes in xpxp ordering.
fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        w[(2 * k, 2 * k + 1)] = 1.0;
        w[(2 * k + 1, 2 * k)] = -1.0;
    }
    w
}

/// Symplectic eigenvalues of a positive-definite covariance matrix.
///
/// The eigenvalues of Ωγ are ±iλₖ, so the λₖ² are the ordinary eigenvalues
/// of −(Ωγ)² = (ΩγΩᵀ)γ, which is similar to the *symmetric* positive
/// matrix γ^{1/2}·(ΩγΩᵀ)·γ^{1/2}. Solving that symmetric problem avoids
/// the non-symmetric QR iteration, whose shift strategy can stall exactly
/// on the purely-imaginary spectra these matrices have.
pub fn symplectic_eigenvalues(cm: &DMatrix<f64>) -> Result<Vec<f64>, Error> {
    let n = cm.nrows() / 2;
    if cm.nrows() != cm.ncols() || cm.nrows() % 2 != 0 {
        return Err(Error::domain("covariance matrix must be square and even-dimensional"));
    }
    // γ^{1/2} from the symmetric eigendecomposition of γ itself.
    let gamma_eig = cm.clone().symmetric_eigen();
    let mut root_vals = gamma_eig.eigenvalues.clone();
    for v in root_vals.iter_mut() {
        if *v < -1e-9 {
            return Err(Error::numerical(format!(
                "covariance matrix has negative eigenvalue {v}"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let u = &gamma_eig.eigenvectors;
    let sqrt_cm = u * DMatrix::from_diagonal(&root_vals) * u.transpose();

    let omega = symplectic_form(n);
    let rotated = &omega * cm * omega.transpose();
    let sym = &sqrt_cm * rotated * &sqrt_cm;
    // enforce exact symmetry against round-off before the symmetric solver
    let sym = (&sym + sym.transpose()) * 0.5;
    let mut sq: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    sq.sort_by(|a, b| a.partial_cmp(b).expect("symplectic eigenvalues must be comparable"));
    // eigenvalues of the symmetric problem are the λₖ², each doubled
    Ok(sq.into_iter().step_by(2).map(|x| x.max(0.0).sqrt()).collect())
}

/// Von Neumann entropy in bits of a Gaussian state with covariance matrix `cm`.
pub fn von_neumann_entropy_bits(cm: &DMatrix<f64>) -> Result<f64, Error> {
    let mut s = 0.0;
    for lambda in symplectic_eigenvalues(cm)? {
        if lambda < 1.0 - 1e-9 {
            return Err(Error::numerical(format!(
                "symplectic eigenvalue {lambda} below 1 beyond tolerance"
            )));
        }
        s += entropy_term_bits((lambda - 1.0) / 2.0);
    }
    Ok(s)
}

/// Two-mode covariance matrix of the entangled-state picture after a channel
/// of transmittance `t` with channel-referred excess noise `eps` (SNU), for
/// modulation variance `v_mod` (so the thermal-state variance is V = v_mod+1).
pub fn two_mode_cm(v_mod: f64, t: f64, eps: f64) -> DMatrix<f64> {
    let v = v_mod + 1.0;
    let chi_line = 1.0 / t - 1.0 + eps;
    let c = (t * (v * v - 1.0)).sqrt();
    let b = t * (v + chi_line);
    let mut cm = DMatrix::zeros(4, 4);
    cm[(0, 0)] = v;
    cm[(1, 1)] = v;
    cm[(2, 2)] = b;
    cm[(3, 3)] = b;
    cm[(0, 2)] = c;
    cm[(2, 0)] = c;
    cm[(1, 3)] = -c;
    cm[(3, 1)] = -c;
    cm
}

/// Condition a Gaussian state on an x-quadrature homodyne measurement of
/// `mode`, returning the covariance matrix of the remaining modes.
///
/// Uses the Schur complement with the homodyne pseudo-inverse
/// (XBX)⁺ = diag(1/B₀₀, 0).
pub fn condition_on_x_homodyne(cm: &DMatrix<f64>, mode: usize) -> DMatrix<f64> {
    let dim = cm.nrows();
    let (ix, ip) = (2 * mode, 2 * mode + 1);
    let keep: Vec<usize> = (0..dim).filter(|&i| i != ix && i != ip).collect();
    let a = DMatrix::from_fn(keep.len(), keep.len(), |r, c| cm[(keep[r], keep[c])]);
    let cmat = DMatrix::from_fn(keep.len(), 2, |r, c| cm[(keep[r], if c == 0 { ix } else { ip })]);
    let mut pinv = DMatrix::zeros(2, 2);
    pinv[(0, 0)] = 1.0 / cm[(ix, ix)];
    &a - &cmat * pinv * cmat.transpose()
}

/// Holevo bound computed entirely through covariance matrices.
///
/// `nu_el` is the electronic noise at the detector in SNU (for a transmitted
/// LO this is the back-to-back value divided by the transmittance; the caller
/// performs that referral). In trusted mode the detector is modeled
/// explicitly: a beamsplitter of transmittance `eta` mixes Bob's mode with
/// one half of an EPR pair whose variance reproduces `nu_el`, Eve purifies
/// only the channel, and Bob's homodyne conditioning happens on the noisy
/// post-detector mode. In untrusted mode the detector is absorbed into the
/// channel (Eve holds its purification) and the conditioning is ideal.
pub fn holevo_oracle(
    v_mod: f64,
    t: f64,
    eps: f64,
    eta: f64,
    nu_el: f64,
    trusted: bool,
) -> Result<f64, Error> {
    if !(t > 0.0 && t <= 1.0) || !(eta > 0.0 && eta <= 1.0) || v_mod <= 0.0 {
        return Err(Error::domain("holevo_oracle: t, eta in (0,1], v_mod > 0 required"));
    }
    if !trusted {
        let t_eff = eta * t;
        let eps_eff = eps + nu_el / (eta * t);
        let cm = two_mode_cm(v_mod, t_eff, eps_eff);
        let s_e = von_neumann_entropy_bits(&cm)?;
        let cond = condition_on_x_homodyne(&cm, 1);
        return Ok(s_e - von_neumann_entropy_bits(&cond)?);
    }

    let cm_ab = two_mode_cm(v_mod, t, eps);
    let s_e = von_neumann_entropy_bits(&cm_ab)?;
    if eta >= 1.0 {
        if nu_el > 0.0 {
            return Err(Error::domain(
                "trusted-detector oracle needs eta < 1 to host electronic noise",
            ));
        }
        let cond = condition_on_x_homodyne(&cm_ab, 1);
        return Ok(s_e - von_neumann_entropy_bits(&cond)?);
    }

    // Modes: A(0), B(1), F(2), G(3); (F,G) is an EPR pair of variance v_f
    // chosen so the beamsplitter injects exactly nu_el of excess detector
    // noise: (1-eta)(v_f - 1) = nu_el.
    let v_f = 1.0 + nu_el / (1.0 - eta);
    let mut cm = DMatrix::zeros(8, 8);
    cm.view_mut((0, 0), (4, 4)).copy_from(&cm_ab);
    let c = (v_f * v_f - 1.0).sqrt();
    for (i, j, val) in [
        (4, 4, v_f),
        (5, 5, v_f),
        (6, 6, v_f),
        (7, 7, v_f),
        (4, 6, c),
        (6, 4, c),
        (5, 7, -c),
        (7, 5, -c),
    ] {
        cm[(i, j)] = val;
    }
    let mut s = DMatrix::identity(8, 8);
    let (se, sf) = (eta.sqrt(), (1.0 - eta).sqrt());
    for q in 0..2 {
        s[(2 + q, 2 + q)] = se;
        s[(2 + q, 4 + q)] = sf;
        s[(4 + q, 2 + q)] = -sf;
        s[(4 + q, 4 + q)] = se;
    }
    let mixed = &s * cm * s.transpose();
    let cond = condition_on_x_homodyne(&mixed, 1);
    Ok(s_e - von_neumann_entropy_bits(&cond)?)
}
