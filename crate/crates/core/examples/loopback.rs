//! Noiseless four-channel loopback: shape, multiplex, demultiplex and
//! resample Gaussian symbols at the published channel layout, then print
//! per-channel recovery error, the planner's crosstalk figures, and a
//! noisy single-channel link with its recovered channel estimate.

use fdmqkd_core::dsp_chain::*;
use fdmqkd_core::estimation::estimate_channel;
use fdmqkd_core::model::{Basis, ChannelPlan, ChannelSettings, LinkParams, NoiseProfile};

fn main() {
    let spec = design_bessel_lpf(4, 10e6).expect("valid filter");
    println!("group delay at DC: {:.2} ns", group_delay_dc(&spec) * 1e9);

    let sr = 10e6;
    let ifs = [64e6, 104e6, 144e6, 184e6];
    let mut ups = Vec::new();
    let mut sent = Vec::new();
    for (k, f) in ifs.iter().enumerate() {
        let sym = generate_gaussian_symbols(2000, 5.8, 42 + k as u64).expect("symbols");
        let z = zero_order_hold(&sym, 128, sr, 0.0).expect("zoh");
        let b = apply_filter(&spec, &z).expect("filter");
        ups.push(upconvert(&b, *f, Quadrature::InPhase).expect("upconvert"));
        sent.push(sym);
    }
    let comp = fdm_mux(&ups).expect("mux");
    println!(
        "composite: {} samples at {} GHz, power {:.3}",
        comp.len(),
        comp.sample_rate_hz / 1e9,
        comp.power()
    );

    let off = 2.0 * group_delay_dc(&spec) + 0.5 / sr;
    for (k, f) in ifs.iter().enumerate() {
        let d = fdm_demux(&comp, *f, Quadrature::InPhase, &spec).expect("demux");
        let rec = sample_symbols(&d, sr, off).expect("sample");
        let n = rec.len().min(sent[k].len());
        let (mut e, mut s) = (0.0, 0.0);
        for i in 4..n - 4 {
            e += (rec[i] - sent[k][i]).powi(2);
            s += sent[k][i].powi(2);
        }
        println!("ch{k} at {} MHz: {} symbols, NMSE {:.5}", f / 1e6, n, e / s);
    }

    for df in [20e6, 30e6, 36e6, 40e6, 50e6] {
        let c = crosstalk_ratio(&spec, &spec, df).expect("quadrature");
        println!("crosstalk at {} MHz spacing: {:.2} dB", df / 1e6, 10.0 * c.log10());
    }

    // a noisy 20-km single-channel run, estimated back
    let plan = ChannelPlan::new(
        vec![ChannelSettings {
            index: 0,
            symbol_rate_hz: sr,
            if_freq_hz: 64e6,
            mod_variance_snu: 5.8,
            basis: Basis::Amplitude,
        }],
        vec![],
    )
    .expect("plan");
    let link = LinkParams {
        fiber_length_km: 20.0,
        fiber_loss_db_per_km: 0.2,
        eta_det: 0.83,
        beta: 0.95,
        trusted_devices: true,
        f_sym_hz: sr,
    };
    let noise = NoiseProfile::default();
    let records = fdmqkd_core::channel_detector::simulate_link(&plan, &link, &noise, 100_000, 7)
        .expect("link run")
        .remove(0);
    let est = estimate_channel(&records, 5.8, link.eta_det, noise.nu_det_at(64e6), records.len(), 1)
        .expect("estimate");
    println!(
        "20 km run: t_hat {:.4} (true {:.4}), xi_hat {:.4} SNU over {} symbols",
        est.t_hat,
        link.t_ch(),
        est.xi_hat_snu,
        est.m_used
    );
}
