//! Acceptance gate for the workspace: nine criteria (A1..A9) covering IF
//! knee placement, spacing threshold, reach calibration, analytic unit
//! values, shot-noise normalization, estimator coverage, the Holevo oracle
//! and the modulation-variance optimizer.
//!
//! Each test prints one verdict line per criterion plus measurement
//! sub-lines (run with `--nocapture` to see them) and asserts that every
//! measured outcome equals its recorded expectation. Two targets are
//! recorded as honest failures rather than papered over: the stated
//! I_AB(5.8, 0) value in A5 is arithmetically inconsistent with the formula
//! it belongs to, and A4's asymptotic-reach bands cannot hold together with
//! A3's finite-size bands (its own escape clause then applies, so A4 as a
//! whole still passes). If either ever flips, the corresponding assert
//! fails and the expectation must be re-examined.

use fdmqkd_core::channel_detector::{
    homodyne_detect, link_filter, shot_unit_scale, simulate_link_with_rate, DetectionConfig,
};
use fdmqkd_core::config::SimConfig;
use fdmqkd_core::dsp_chain::{fdm_demux, sample_symbols, Quadrature, Waveform};
use fdmqkd_core::estimation::{estimate_channel, worst_case_bounds};
use fdmqkd_core::model::{
    fiber_transmittance, Basis, ChannelPlan, ChannelSettings, LinkParams, NoiseProfile,
    PiecewiseLinear,
};
use fdmqkd_core::security_rates::covariance::{
    condition_on_x_homodyne, holevo_oracle, symplectic_eigenvalues, two_mode_cm,
};
use fdmqkd_core::security_rates::{
    entropy_term_bits, finite_size_delta, holevo_bound, mutual_information, optimize_vmod,
    ReachInputs, SecurityInputs,
};
use fdmqkd_core::sweep::calibrate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

/// Prints one verdict line and pins the outcome to its recorded
/// expectation. An expected failure prints as such; an expected failure
/// that starts passing also trips the assert so the record gets updated.
fn verdict(id: &str, pass: bool, expect_pass: bool, detail: &str) {
    let tag = match (pass, expect_pass) {
        (true, _) => "PASS",
        (false, false) => "FAIL (expected, recorded)",
        (false, true) => "FAIL",
    };
    println!("{id} {tag} — {detail}");
    assert_eq!(
        pass, expect_pass,
        "{id}: outcome changed against its recorded expectation — {detail}"
    );
}

fn run_binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fdmqkd"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).expect("config should write");
    path.to_str().expect("utf-8 path").to_owned()
}

const ONE_CHANNEL_BB: &str = "\
[channels.1]
symbol_rate_hz = 10000000
if_freq_hz = 64000000
mod_variance_snu = 5.8
";

const TWO_CHANNELS_BB: &str = "\
[channels.1]
symbol_rate_hz = 10000000
if_freq_hz = 64000000
mod_variance_snu = 5.8

[channels.2]
symbol_rate_hz = 10000000
if_freq_hz = 104000000
mod_variance_snu = 5.8
";

/// A1: Monte Carlo excess noise vs IF for 10/15/20 Mbaud; each rate's knee
/// (first IF within 10% of the high-IF plateau) must land between 5.5 and
/// 7.5 symbol rates, inside a 10-minute budget.
#[test]
fn a1_if_knee_to_symbol_rate_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a1.ini", ONE_CHANNEL_BB);
    let csv_path = dir.path().join("a1.csv");

    let t0 = Instant::now();
    let out = run_binary(&[
        "sweep-if", "--config", &cfg, "--rates", "10,15,20",
        "--if-min", "40", "--if-max", "160", "--step", "8",
        "--symbols", "200000", "--seed", "1",
        "--out", csv_path.to_str().unwrap(),
    ]);
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(out.status.success(), "sweep-if failed: {}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(&csv_path).unwrap();
    let mut all_in_band = true;
    let mut knees = 0;
    for line in csv.lines().filter(|l| l.starts_with("# knee symbol_rate_hz=")) {
        let field = |key: &str| -> Option<f64> {
            line.split_whitespace()
                .find_map(|tok| tok.strip_prefix(key))
                .and_then(|v| v.parse().ok())
        };
        let rate = field("symbol_rate_hz=").expect("rate field");
        let ratio = field("knee_to_rate_ratio=");
        knees += 1;
        let in_band = matches!(ratio, Some(r) if (5.5..=7.5).contains(&r));
        all_in_band &= in_band;
        verdict(
            &format!("A1.{knees}"),
            in_band,
            true,
            &match ratio {
                Some(r) => format!(
                    "{} Mbaud: knee at {:.2} symbol rates (band [5.5, 7.5])",
                    rate / 1e6,
                    r
                ),
                None => format!("{} Mbaud: no knee detected in the swept grid", rate / 1e6),
            },
        );
    }
    assert_eq!(knees, 3, "one knee summary per requested rate");
    verdict(
        "A1.4",
        elapsed <= 600.0,
        true,
        &format!("runtime {elapsed:.0} s within the 600 s budget"),
    );
    verdict(
        "A1",
        all_in_band && elapsed <= 600.0,
        true,
        "excess-noise knee lands between 5.5 and 7.5 symbol rates for 10/15/20 Mbaud",
    );
}

/// A2: two-channel spacing sweep anchored at 64 MHz. The neighbor-induced
/// excess must drop below 10% of the single-channel floor somewhere in
/// [32, 44] MHz and be below that threshold at 40 MHz, within 5 minutes.
#[test]
fn a2_spacing_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a2.ini", TWO_CHANNELS_BB);
    let csv_path = dir.path().join("a2.csv");

    let t0 = Instant::now();
    let out = run_binary(&[
        "sweep-spacing", "--config", &cfg,
        "--spacing-min", "20", "--spacing-max", "60", "--step", "4",
        "--symbols", "200000", "--seed", "1",
        "--out", csv_path.to_str().unwrap(),
    ]);
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(out.status.success(), "sweep-spacing failed: {}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(&csv_path).unwrap();
    let floor: f64 = csv
        .lines()
        .find(|l| l.starts_with("# single_channel_floor_xi_snu="))
        .and_then(|l| {
            l.trim_start_matches("# single_channel_floor_xi_snu=")
                .split_whitespace()
                .next()
        })
        .expect("floor comment")
        .parse()
        .expect("floor value");
    let crossing: Option<f64> = csv
        .lines()
        .find(|l| l.starts_with("# excess_below_10pct_of_floor_at_spacing_hz="))
        .map(|l| {
            l.trim_start_matches("# excess_below_10pct_of_floor_at_spacing_hz=")
                .parse()
                .expect("crossing value")
        });
    let excess_at_40: f64 = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("spacing_hz"))
        .find_map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            let spacing: f64 = cols[0].parse().ok()?;
            (spacing == 40e6).then(|| cols[5].parse().expect("excess column"))
        })
        .expect("40 MHz row");

    let crossing_in_band =
        matches!(crossing, Some(f) if (32e6..=44e6).contains(&f));
    verdict(
        "A2.1",
        crossing_in_band,
        true,
        &format!(
            "excess first drops below 10% of the {floor:.4}-SNU floor at {:?} MHz (band [32, 44])",
            crossing.map(|f| f / 1e6)
        ),
    );
    verdict(
        "A2.2",
        excess_at_40 < 0.1 * floor,
        true,
        &format!(
            "excess at 40 MHz spacing = {excess_at_40:.5} SNU vs threshold {:.5} SNU",
            0.1 * floor
        ),
    );
    verdict(
        "A2.3",
        elapsed <= 300.0,
        true,
        &format!("runtime {elapsed:.0} s within the 300 s budget"),
    );
    verdict(
        "A2",
        crossing_in_band && excess_at_40 < 0.1 * floor && elapsed <= 300.0,
        true,
        "neighbor crosstalk is attenuated below 10% of the single-channel floor by 40 MHz spacing",
    );
}

/// A3: the two-parameter noise-budget fit hits 45.6 km single-channel
/// finite-size reach, and the fitted budget scaled by the multi-channel
/// excess factors reproduces the published four-channel reach and the
/// back-to-back rate gains.
#[test]
fn a3_finite_size_reach_calibration() {
    let cfg = SimConfig::default();
    let t0 = Instant::now();
    let fit = calibrate(&cfg, &[("reach_finite".into(), 45.6)]).expect("calibration runs");
    let elapsed = t0.elapsed().as_secs_f64();

    let achieved = fit.residuals[0].achieved_km;
    let reach_ok = (achieved - 45.6).abs() <= 1.0;
    verdict(
        "A3.1",
        reach_ok,
        true,
        &format!(
            "single-channel finite reach {achieved:.2} km vs 45.6 ± 1 km \
             (fit: floor {:.5} SNU, detector scale {:.4})",
            fit.excess_noise_floor_snu, fit.nu_scale
        ),
    );

    let fin4 = fit.diagnostics[3].reach_finite_km;
    let fin4_ok = (40.0..=45.0).contains(&fin4);
    verdict(
        "A3.2",
        fin4_ok,
        true,
        &format!("four-channel finite reach {fin4:.2} km vs 42.5 ± 2.5 km"),
    );

    let mut gains_ok = true;
    for (d, target) in fit.diagnostics[1..=3].iter().zip([1.9, 2.8, 3.7]) {
        let ok = (d.bb_gain_finite - target).abs() <= 0.3;
        gains_ok &= ok;
        verdict(
            &format!("A3.{}", d.n_channels + 1),
            ok,
            true,
            &format!(
                "{}-channel back-to-back rate gain {:.2} vs {target} ± 0.3",
                d.n_channels, d.bb_gain_finite
            ),
        );
    }

    let fast = elapsed <= 60.0;
    verdict(
        "A3.6",
        fast,
        true,
        &format!("analytic fit finished in {elapsed:.2} s"),
    );
    verdict(
        "A3",
        reach_ok && fin4_ok && gains_ok && fast,
        true,
        "calibrated budget reproduces single- and four-channel finite-size reach and rate gains",
    );
}

/// A4: asymptotic-reach diagnostic. The bands cannot hold together with
/// A3's finite-size bands, which its own escape clause anticipates: the
/// calibration report must quantify the residuals and the finite-size
/// calibration takes precedence. The band measurements are recorded
/// honestly as expected failures.
#[test]
fn a4_asymptotic_reach_consistency() {
    let cfg = SimConfig::default();
    let fit = calibrate(&cfg, &[("reach_finite".into(), 45.6)]).expect("calibration runs");
    let asy1 = fit.diagnostics[0].reach_asympt_km;
    let asy4 = fit.diagnostics[3].reach_asympt_km;

    verdict(
        "A4.1",
        (asy1 - 119.0).abs() <= 12.0,
        false,
        &format!("single-channel asymptotic reach {asy1:.1} km vs 119 ± 12 km under the finite-size calibration"),
    );
    verdict(
        "A4.2",
        (75.0..=92.0).contains(&asy4),
        false,
        &format!("four-channel asymptotic reach {asy4:.1} km vs [75, 92] km under the finite-size calibration"),
    );

    // Escape-clause demonstration: hitting both reach targets at once is
    // possible (both residuals within 10%), but that joint fit pushes the
    // four-channel finite-size reach out of A3's band, so the two criteria
    // are incompatible at these tolerances.
    let joint = calibrate(
        &cfg,
        &[("reach_finite".into(), 45.6), ("reach_asympt".into(), 119.0)],
    )
    .expect("joint calibration runs");
    let joint_fin4 = joint.diagnostics[3].reach_finite_km;
    let incompatible = !(40.0..=45.0).contains(&joint_fin4);
    verdict(
        "A4.3",
        incompatible,
        true,
        &format!(
            "joint fit (floor {:.4} SNU, scale {:.4}) moves four-channel finite reach to \
             {joint_fin4:.1} km, outside [40, 45] km — bands incompatible",
            joint.excess_noise_floor_snu, joint.nu_scale
        ),
    );

    let report = joint.report_text();
    let quantified = report.contains("reach_asympt")
        && report.contains("residual")
        && joint
            .residuals
            .iter()
            .all(|r| r.achieved_km.is_finite() && r.residual_km.is_finite());
    verdict(
        "A4.4",
        quantified,
        true,
        "calibration report quantifies every target's achieved reach and residual",
    );

    verdict(
        "A4",
        incompatible && quantified,
        true,
        &format!(
            "asymptotic bands unreachable together with the finite-size bands; residuals are \
             quantified ({:.1} km vs 119 km single-channel) and the finite-size calibration \
             takes precedence",
            asy1
        ),
    );
}

/// A5: pinned analytic values of the rate engine's building blocks.
#[test]
fn a5_analytic_unit_values() {
    let delta = finite_size_delta(8_750_000, 1e-10).expect("penalty evaluates");
    let delta_ok = (delta - 0.013846).abs() <= 1e-5;
    verdict(
        "A5.1",
        delta_ok,
        true,
        &format!("finite-size penalty at n = 8.75e6: {delta:.9} bits vs 0.013846 ± 1e-5"),
    );

    let g0 = entropy_term_bits(0.0);
    verdict("A5.2", g0 == 0.0, true, &format!("g(0) = {g0}"));

    let ideal = SecurityInputs {
        v_mod_snu: 5.8,
        t_ch: 1.0,
        xi_snu: 0.0,
        eta_det: 1.0,
        nu_det_snu: 0.0,
        beta: 0.9,
        trusted: true,
        f_sym_hz: 10e6,
        finite: None,
    };
    let i_ab = mutual_information(&ideal).expect("mutual information evaluates");
    let exact = 0.5 * (1.0_f64 + 5.8).log2();
    verdict(
        "A5.3",
        (i_ab - 1.38248).abs() <= 1e-4,
        false,
        &format!(
            "I_AB(v = 5.8, noise-free) = {i_ab:.7} bits vs stated 1.38248 ± 1e-4; \
             0.5·log2(1 + 5.8) = {exact:.7}, so the stated value cannot come from the \
             formula it belongs to — engine value kept, discrepancy recorded"
        ),
    );

    let t50 = fiber_transmittance(50.0, 0.2);
    let t_ok = (t50 - 0.1).abs() <= 1e-12;
    verdict(
        "A5.4",
        t_ok,
        true,
        &format!("fiber transmittance at 50 km, 0.2 dB/km = {t50:.15}"),
    );

    verdict(
        "A5",
        delta_ok && g0 == 0.0 && t_ok && (i_ab - 1.38248).abs() <= 1e-4,
        false,
        "3 of 4 analytic values match; the I_AB target is internally inconsistent (recorded)",
    );
}

/// A6: shot-noise normalization. Vacuum input with electronic noise off
/// must demultiplex to a variance of 1 SNU (±1%) on every channel in both
/// bases, 10⁶ symbols per channel/basis.
#[test]
fn a6_vacuum_demux_variance_is_one_snu() {
    let plan = SimConfig::default().plan;
    let sr = 10e6;
    let fs = 640e6;
    let spec = link_filter(sr).expect("filter designs");
    let scale = shot_unit_scale(&spec, fs).expect("shot unit calibrates");
    let chunk_symbols = 100_000;
    let n_chunks = 10u64;
    let len = chunk_symbols * (fs / sr) as usize;

    let mut worst = 0.0_f64;
    let mut details = Vec::new();
    for (b, basis) in [Basis::Amplitude, Basis::Phase].into_iter().enumerate() {
        let quad = match basis {
            Basis::Amplitude => Quadrature::InPhase,
            Basis::Phase => Quadrature::QuadraturePhase,
        };
        let mut sums = vec![(0.0_f64, 0.0_f64, 0usize); plan.channels.len()];
        for chunk in 0..n_chunks {
            let vacuum = Waveform::new(vec![0.0; len], fs, 0.0).expect("waveform builds");
            let det = DetectionConfig {
                basis,
                noise: NoiseProfile::default(),
                shot_noise_on: true,
                electronic_noise_on: false,
                seed: 9_000 + 100 * b as u64 + chunk,
                shot_scale: scale,
            };
            let detected = homodyne_detect(&vacuum, &det, 1.0, 1.0).expect("detection runs");
            for (k, ch) in plan.channels.iter().enumerate() {
                let down = fdm_demux(&detected, ch.if_freq_hz, quad, &spec).expect("demux runs");
                let rec = sample_symbols(&down, sr, 0.0).expect("sampling runs");
                let (s, s2, n) = &mut sums[k];
                for v in &rec {
                    *s += v;
                    *s2 += v * v;
                }
                *n += rec.len();
            }
        }
        for (k, (s, s2, n)) in sums.iter().enumerate() {
            let nf = *n as f64;
            let var = s2 / nf - (s / nf).powi(2);
            worst = worst.max((var - 1.0).abs());
            details.push(format!(
                "ch{} {}: {:.4} SNU over {} symbols",
                k + 1,
                basis.as_str(),
                var,
                n
            ));
        }
    }
    verdict(
        "A6",
        worst <= 0.01,
        true,
        &format!(
            "worst |vacuum variance − 1| = {worst:.4} SNU across 4 channels × 2 bases ({})",
            details.join("; ")
        ),
    );
}

/// A7: estimator coverage. With a known link (T = 0.5, ξ = 0.05 SNU), the
/// estimates must fall within 3 standard errors of the truth in at least
/// 95 of 100 independent runs.
#[test]
fn a7_estimator_recovers_known_channel() {
    let plan = ChannelPlan::new(
        vec![ChannelSettings {
            index: 1,
            symbol_rate_hz: 10e6,
            if_freq_hz: 64e6,
            mod_variance_snu: 5.8,
            basis: Basis::Amplitude,
        }],
        vec![],
    )
    .expect("plan builds");
    // T = 10^(−0.2·L/10) = 0.5 at L = 50·log10(2) km.
    let link = LinkParams {
        fiber_length_km: 50.0 * 2.0_f64.log10(),
        ..LinkParams::default()
    };
    let t_true = link.t_ch();
    let xi_true = 0.05;
    let noise = NoiseProfile {
        detector_ratio: NoiseProfile::default().detector_ratio,
        carrier_noise: PiecewiseLinear::constant(0.0),
        excess_noise_floor_snu: xi_true,
        nu_scale: 1.0,
    };
    let nu = noise.nu_det_at(64e6);

    let reps = 100;
    let mut hits = 0;
    let mut mean_t = 0.0;
    let mut mean_xi = 0.0;
    for i in 0..reps {
        let records =
            simulate_link_with_rate(&plan, &link, &noise, 100_000, 40_000 + i, 640e6)
                .expect("simulation runs")
                .swap_remove(0);
        let est = estimate_channel(&records, 5.8, link.eta_det, nu, records.len(), 0)
            .expect("estimation runs");
        let bounds = worst_case_bounds(
            est.t_hat,
            est.xi_hat_snu,
            est.m_used as u64,
            5.8,
            1e-10,
            link.eta_det,
            nu,
        )
        .expect("bounds evaluate");
        let sigma_t = (est.t_hat - bounds.t_low) / bounds.z;
        let sigma_xi = (bounds.xi_high - est.xi_hat_snu) / bounds.z;
        let hit_t = (est.t_hat - t_true).abs() <= 3.0 * sigma_t;
        let hit_xi = (est.xi_hat_snu - xi_true).abs() <= 3.0 * sigma_xi;
        if hit_t && hit_xi {
            hits += 1;
        }
        mean_t += est.t_hat / reps as f64;
        mean_xi += est.xi_hat_snu / reps as f64;
    }
    verdict(
        "A7",
        hits >= 95,
        true,
        &format!(
            "{hits}/100 runs recover (T = {t_true:.3}, ξ = {xi_true}) within 3σ \
             (mean t̂ = {mean_t:.4}, mean ξ̂ = {mean_xi:.4})"
        ),
    );
}

/// A8: the closed-form Holevo bound must match the covariance-matrix
/// oracle to 1e-8 on a 1000-point random grid, and every symplectic
/// eigenvalue involved must be physical (≥ 1 − 1e-9).
#[test]
fn a8_holevo_oracle_equivalence() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xACCE);
    let mut worst_gap = 0.0_f64;
    let mut min_eig = f64::INFINITY;
    for i in 0..1000 {
        let v = rng.gen_range(0.5..20.0);
        let t = rng.gen_range(0.02..1.0);
        let eps = rng.gen_range(0.0..0.5);
        let eta = rng.gen_range(0.51..0.99);
        let nu_el = rng.gen_range(0.0..0.3);
        let trusted = i % 2 == 0;
        let si = SecurityInputs {
            v_mod_snu: v,
            t_ch: t,
            xi_snu: eps,
            eta_det: eta,
            nu_det_snu: nu_el * t,
            beta: 0.9,
            trusted,
            f_sym_hz: 10e6,
            finite: None,
        };
        let closed = holevo_bound(&si).expect("closed form evaluates");
        let oracle = holevo_oracle(v, t, eps, eta, nu_el, trusted).expect("oracle evaluates");
        worst_gap = worst_gap.max((closed - oracle).abs());

        let cm = two_mode_cm(v, t, eps);
        for lam in symplectic_eigenvalues(&cm).expect("spectrum computes") {
            min_eig = min_eig.min(lam);
        }
        let cond = condition_on_x_homodyne(&cm, 1);
        for lam in symplectic_eigenvalues(&cond).expect("conditioned spectrum computes") {
            min_eig = min_eig.min(lam);
        }
    }
    let gap_ok = worst_gap < 1e-8;
    let eig_ok = min_eig >= 1.0 - 1e-9;
    verdict(
        "A8",
        gap_ok && eig_ok,
        true,
        &format!(
            "worst closed-form/oracle gap {worst_gap:.2e} over 1000 points; \
             smallest symplectic eigenvalue {min_eig:.12}"
        ),
    );
}

/// A9: the modulation-variance optimizer at 20 km with the calibrated
/// budget must return a value in [4.3, 7.3] SNU.
#[test]
fn a9_vmod_optimum_at_20_km() {
    let cfg = SimConfig::default();
    let fit = calibrate(&cfg, &[("reach_finite".into(), 45.6)]).expect("calibration runs");
    let noise = NoiseProfile {
        nu_scale: fit.nu_scale,
        excess_noise_floor_snu: fit.excess_noise_floor_snu,
        ..NoiseProfile::default()
    };
    let reach = ReachInputs {
        v_mod_snu: 5.8,
        xi_bb_snu: fit.excess_noise_floor_snu,
        eta_det: cfg.link.eta_det,
        nu_det_snu: noise.nu_det_at(64e6),
        beta: cfg.link.beta,
        trusted: cfg.link.trusted_devices,
        f_sym_hz: 10e6,
        loss_db_per_km: cfg.link.fiber_loss_db_per_km,
        finite: None,
    };
    let opt = optimize_vmod(&reach, 20.0).expect("optimizer runs");
    let in_band = (4.3..=7.3).contains(&opt.v_mod_snu) && !opt.degenerate;
    verdict(
        "A9",
        in_band,
        true,
        &format!(
            "optimal modulation variance at 20 km = {:.3} SNU (band [4.3, 7.3], degenerate: {})",
            opt.v_mod_snu, opt.degenerate
        ),
    );
}
