//! Waveform-level transmit/receive DSP: Gaussian symbol generation, Bessel
//! low-pass shaping, IF up-conversion and FDM multiplexing, receiver
//! demultiplexing, symbol sampling, and analytic crosstalk evaluation.
//!
//! Signals are kept in the real passband representation (explicit cos/sin
//! carriers, not complex baseband) so that image folding across DC at low
//! IFs is physical rather than modeled. Mixing halves signal power; the
//! demultiplexer compensates the ×½ explicitly, making the end-to-end
//! symbol gain unity.

pub mod bessel;
pub mod io;
mod quad;
pub mod spectrum;

pub use bessel::{design_bessel_lpf, filter_magnitude, group_delay_dc, FilterSpec, IirFilter};

use crate::error::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

/// A uniformly sampled real-valued signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub t0_s: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, t0_s: f64) -> Result<Waveform, Error> {
        if samples.is_empty() {
            return Err(Error::domain("waveform must contain at least one sample"));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::domain("waveform sample rate must be > 0"));
        }
        Ok(Waveform { samples, sample_rate_hz, t0_s })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean square of the samples (power in the same units²).
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }
}

/// Which carrier phase a channel modulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    InPhase,
    QuadraturePhase,
}

impl Quadrature {
    #[inline]
    fn carrier(self, phase_rad: f64) -> f64 {
        match self {
            Quadrature::InPhase => phase_rad.cos(),
            Quadrature::QuadraturePhase => phase_rad.sin(),
        }
    }
}

/// Zero-mean Gaussian symbols with variance `v_mod_snu`, deterministic for
/// a fixed seed.
pub fn generate_gaussian_symbols(
    count: usize,
    v_mod_snu: f64,
    seed: u64,
) -> Result<Vec<f64>, Error> {
    if count == 0 {
        return Err(Error::domain("generate_gaussian_symbols: count must be > 0"));
    }
    if !(v_mod_snu > 0.0) {
        return Err(Error::domain("generate_gaussian_symbols: v_mod must be > 0"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, v_mod_snu.sqrt()).expect("positive std dev");
    Ok((0..count).map(|_| dist.sample(&mut rng)).collect())
}

/// Hold each symbol for `samples_per_symbol` samples (zero-order hold),
/// producing a waveform at `symbol_rate · samples_per_symbol`.
pub fn zero_order_hold(
    symbols: &[f64],
    samples_per_symbol: usize,
    symbol_rate_hz: f64,
    t0_s: f64,
) -> Result<Waveform, Error> {
    if samples_per_symbol == 0 || symbols.is_empty() {
        return Err(Error::domain("zero_order_hold: need symbols and spp > 0"));
    }
    let mut samples = Vec::with_capacity(symbols.len() * samples_per_symbol);
    for &s in symbols {
        samples.extend(std::iter::repeat(s).take(samples_per_symbol));
    }
    Waveform::new(samples, symbol_rate_hz * samples_per_symbol as f64, t0_s)
}

/// Filter a waveform through the discrete-time realization of `spec`.
pub fn apply_filter(spec: &FilterSpec, w: &Waveform) -> Result<Waveform, Error> {
    let mut filt = IirFilter::new(spec, w.sample_rate_hz)?;
    let mut out = w.clone();
    filt.process(&mut out.samples);
    Ok(out)
}

/// Multiply by the IF carrier. Mixing halves signal power; that factor is
/// compensated in [`fdm_demux`], not here.
pub fn upconvert(baseband: &Waveform, f_if_hz: f64, quad: Quadrature) -> Result<Waveform, Error> {
    if !(f_if_hz >= 0.0) || f_if_hz >= baseband.sample_rate_hz / 2.0 {
        return Err(Error::domain(format!(
            "upconvert: f_IF {f_if_hz} Hz must sit below Nyquist {}",
            baseband.sample_rate_hz / 2.0
        )));
    }
    let mut out = baseband.clone();
    let w = 2.0 * std::f64::consts::PI * f_if_hz;
    let dt = 1.0 / baseband.sample_rate_hz;
    for (n, v) in out.samples.iter_mut().enumerate() {
        *v *= quad.carrier(w * (baseband.t0_s + n as f64 * dt));
    }
    Ok(out)
}

/// Sample-wise sum of equally formatted waveforms.
pub fn fdm_mux(channel_waveforms: &[Waveform]) -> Result<Waveform, Error> {
    let first = channel_waveforms
        .first()
        .ok_or_else(|| Error::domain("fdm_mux: need at least one waveform"))?;
    let mut out = first.clone();
    for w in &channel_waveforms[1..] {
        if w.sample_rate_hz != first.sample_rate_hz
            || w.len() != first.len()
            || w.t0_s != first.t0_s
        {
            return Err(Error::domain("fdm_mux: sample rate, length and t0 must match"));
        }
        for (o, v) in out.samples.iter_mut().zip(&w.samples) {
            *o += v;
        }
    }
    Ok(out)
}

/// Mix down with the matching carrier, low-pass with `rx_filter`, and
/// compensate the ×½ mixing factor.
pub fn fdm_demux(
    composite: &Waveform,
    f_if_hz: f64,
    quad: Quadrature,
    rx_filter: &FilterSpec,
) -> Result<Waveform, Error> {
    if !(f_if_hz >= 0.0) || f_if_hz >= composite.sample_rate_hz / 2.0 {
        return Err(Error::domain(format!(
            "fdm_demux: f_IF {f_if_hz} Hz must sit below Nyquist {}",
            composite.sample_rate_hz / 2.0
        )));
    }
    let mut mixed = composite.clone();
    let w = 2.0 * std::f64::consts::PI * f_if_hz;
    let dt = 1.0 / composite.sample_rate_hz;
    for (n, v) in mixed.samples.iter_mut().enumerate() {
        *v *= 2.0 * quad.carrier(w * (composite.t0_s + n as f64 * dt));
    }
    apply_filter(rx_filter, &mixed)
}

/// Pick one value per symbol at delay-compensated instants.
///
/// The k-th symbol is read at `timing_offset_s + k/symbol_rate` past the
/// waveform start; callers pass the cascaded filter group delay (plus the
/// half-symbol hold delay of the zero-order transmitter) as the offset.
pub fn sample_symbols(
    baseband: &Waveform,
    symbol_rate_hz: f64,
    timing_offset_s: f64,
) -> Result<Vec<f64>, Error> {
    if !(symbol_rate_hz > 0.0) {
        return Err(Error::domain("sample_symbols: symbol rate must be > 0"));
    }
    let spp = baseband.sample_rate_hz / symbol_rate_hz;
    if (spp - spp.round()).abs() > 1e-6 * spp {
        return Err(Error::domain(format!(
            "sample_symbols: samples per symbol {spp} must be an integer"
        )));
    }
    if spp.round() < 8.0 {
        return Err(Error::domain(format!(
            "sample_symbols: samples per symbol {spp} must be at least 8"
        )));
    }
    let fs = baseband.sample_rate_hz;
    let first = (timing_offset_s * fs).round();
    if first < 0.0 {
        return Err(Error::domain("sample_symbols: timing offset before waveform start"));
    }
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let idx = ((timing_offset_s + k as f64 / symbol_rate_hz) * fs).round();
        if idx >= baseband.len() as f64 {
            break;
        }
        out.push(baseband.samples[idx as usize]);
        k += 1;
    }
    Ok(out)
}

/// Leaked-power ratio of an interferer offset by `delta_f_hz`:
/// ∫|H_tx(f−Δf)|²·|H_rx(f)|² df over ∫|H_tx(f)|²·|H_rx(f)|² df,
/// by adaptive quadrature with relative error ≤ 1e-6.
pub fn crosstalk_ratio(
    tx_filter: &FilterSpec,
    rx_filter: &FilterSpec,
    delta_f_hz: f64,
) -> Result<f64, Error> {
    if !(delta_f_hz >= 0.0) {
        return Err(Error::domain("crosstalk_ratio: delta_f must be >= 0"));
    }
    let span = 80.0 * tx_filter.f3db_hz.max(rx_filter.f3db_hz);
    let overlap = |shift: f64| -> f64 {
        let integrand = |f: f64| {
            let tx = filter_magnitude(tx_filter, f - shift);
            let rx = filter_magnitude(rx_filter, f);
            tx * tx * rx * rx
        };
        // Split at the two response centers so the adaptive rule starts
        // with the peaks resolved.
        let lo = -span;
        let hi = shift + span;
        let mid = 0.5 * shift;
        quad::adaptive_simpson(&integrand, lo, mid, 1e-7)
            + quad::adaptive_simpson(&integrand, mid, hi, 1e-7)
    };
    let denom = overlap(0.0);
    if !(denom > 0.0) {
        return Err(Error::numerical("crosstalk_ratio: degenerate co-channel overlap"));
    }
    Ok(overlap(delta_f_hz) / denom)
}

/// Planner rule for the lowest usable IF at a symbol rate: 6.4 × rate.
pub fn min_if_for_rate(symbol_rate_hz: f64) -> Result<f64, Error> {
    if !(symbol_rate_hz > 0.0) {
        return Err(Error::domain("min_if_for_rate: symbol rate must be > 0"));
    }
    Ok(6.4 * symbol_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().min(b.len()) as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.iter().zip(b) {
            cov += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        cov / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn gaussian_symbols_have_target_variance_and_mean() {
        let n = 1_000_000;
        let v = 5.8;
        let s = generate_gaussian_symbols(n, v, 1).expect("valid");
        let mean = s.iter().sum::<f64>() / n as f64;
        let var = s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let sigma_hat = (2.0 / n as f64).sqrt();
        assert!(
            var > v * (1.0 - 4.0 * sigma_hat) && var < v * (1.0 + 4.0 * sigma_hat),
            "sample variance {var} outside 4-sigma band around {v}"
        );
        assert!(
            mean.abs() < 4.0 * (v / n as f64).sqrt(),
            "sample mean {mean} outside CLT bound"
        );
    }

    #[test]
    fn gaussian_symbols_are_deterministic_per_seed() {
        let a = generate_gaussian_symbols(10_000, 1.0, 2).expect("valid");
        let b = generate_gaussian_symbols(10_000, 1.0, 2).expect("valid");
        assert_eq!(a, b, "same seed must give identical sequences");
        let c = generate_gaussian_symbols(10_000, 1.0, 3).expect("valid");
        assert_ne!(a, c, "different seeds must differ");
    }

    #[test]
    fn filtered_sine_magnitudes_track_the_analog_response() {
        let spec = design_bessel_lpf(4, 10e6).expect("valid");
        let fs = 640e6_f64;
        for f in [2.5e6_f64, 10e6, 25e6, 50e6, 80e6] {
            // settle, then lock-in detect over whole periods
            let periods = 400.0;
            let n = (periods * fs / f).round() as usize;
            let w = Waveform::new(
                (0..n)
                    .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin())
                    .collect(),
                fs,
                0.0,
            )
            .expect("valid");
            let y = apply_filter(&spec, &w).expect("valid");
            let skip = n / 2;
            let (mut re, mut im) = (0.0, 0.0);
            for i in skip..n {
                let ph = 2.0 * std::f64::consts::PI * f * i as f64 / fs;
                re += y.samples[i] * ph.cos();
                im += y.samples[i] * ph.sin();
            }
            let meas = 2.0 * (re * re + im * im).sqrt() / (n - skip) as f64;
            let expected = filter_magnitude(&spec, f);
            assert!(
                (meas - expected).abs() <= 0.02 * expected,
                "f = {f}: measured {meas}, analog {expected}"
            );
        }
    }

    #[test]
    fn filtered_sine_at_f3db_is_3db_down() {
        let spec = design_bessel_lpf(4, 10e6).expect("valid");
        let fs = 1.28e9;
        let f = 10e6;
        let n = 128_000;
        let w = Waveform::new(
            (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin())
                .collect(),
            fs,
            0.0,
        )
        .expect("valid");
        let y = apply_filter(&spec, &w).expect("valid");
        let tail_peak = y.samples[n - 12_800..].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(
            (tail_peak - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.02,
            "amplitude at f3db was {tail_peak}"
        );
    }

    #[test]
    fn white_noise_through_filter_reshapes_spectrum_as_h_squared() {
        let spec = design_bessel_lpf(4, 10e6).expect("valid");
        let fs = 320e6;
        let noise = generate_gaussian_symbols(1 << 18, 1.0, 77).expect("valid");
        let w = Waveform::new(noise, fs, 0.0).expect("valid");
        let y = apply_filter(&spec, &w).expect("valid");
        let (freqs, psd) = spectrum::welch_psd(&y.samples, fs, 2048);
        // compare band-integrated power against the analog prediction
        let band_power = |lo: f64, hi: f64, weights: &dyn Fn(f64) -> f64| -> (f64, f64) {
            let mut meas = 0.0;
            let mut pred = 0.0;
            for (f, p) in freqs.iter().zip(&psd) {
                if *f >= lo && *f < hi {
                    meas += p;
                    pred += weights(*f);
                }
            }
            (meas, pred)
        };
        let h2 = |f: f64| filter_magnitude(&spec, f).powi(2);
        let (m1, p1) = band_power(0.0, 8e6, &h2);
        let (m2, p2) = band_power(12e6, 30e6, &h2);
        let measured_ratio = m1 / m2;
        let predicted_ratio = p1 / p2;
        assert!(
            (measured_ratio / predicted_ratio - 1.0).abs() < 0.15,
            "band ratio {measured_ratio} vs predicted {predicted_ratio}"
        );
    }

    #[test]
    fn upconvert_of_zero_is_zero_and_rejects_aliasing() {
        let w = Waveform::new(vec![0.0; 256], 1.28e9, 0.0).expect("valid");
        let up = upconvert(&w, 100e6, Quadrature::InPhase).expect("valid");
        assert!(up.samples.iter().all(|v| *v == 0.0));
        assert!(upconvert(&w, 0.7e9, Quadrature::InPhase).is_err(), "above Nyquist must fail");
    }

    #[test]
    fn upconverted_constant_is_a_pure_tone_at_the_if() {
        let fs = 1.28e9;
        let w = Waveform::new(vec![1.0; 1 << 15], fs, 0.0).expect("valid");
        let up = upconvert(&w, 100e6, Quadrature::InPhase).expect("valid");
        let (freqs, psd) = spectrum::welch_psd(&up.samples, fs, 4096);
        let peak = psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
            .expect("non-empty")
            .0;
        assert!(
            (freqs[peak] - 100e6).abs() <= fs / 4096.0,
            "tone peak at {} Hz",
            freqs[peak]
        );
    }

    #[test]
    fn up_down_conversion_recovers_the_baseband() {
        let spec = design_bessel_lpf(4, 10e6).expect("valid");
        let fs = 640e6;
        let symbols = generate_gaussian_symbols(600, 5.8, 5).expect("valid");
        let zoh = zero_order_hold(&symbols, 64, 10e6, 0.0).expect("valid");
        let base = apply_filter(&spec, &zoh).expect("valid");
        let up = upconvert(&base, 64e6, Quadrature::InPhase).expect("valid");
        let down = fdm_demux(&up, 64e6, Quadrature::InPhase, &spec).expect("valid");
        // compensate the rx filter delay before correlating
        let shift = (group_delay_dc(&spec) * fs).round() as usize;
        let a = &base.samples[..base.len() - shift];
        let b = &down.samples[shift..];
        assert!(
            pearson(a, b) >= 0.99,
            "loopback correlation {} below 0.99",
            pearson(a, b)
        );
    }

    #[test]
    fn mux_is_identity_for_one_channel_and_cancels_opposites() {
        let w = Waveform::new(generate_gaussian_symbols(4096, 1.0, 9).expect("valid"), 1e9, 0.0)
            .expect("valid");
        let same = fdm_mux(std::slice::from_ref(&w)).expect("valid");
        assert_eq!(same, w);
        let mut neg = w.clone();
        for v in neg.samples.iter_mut() {
            *v = -*v;
        }
        let sum = fdm_mux(&[w, neg]).expect("valid");
        assert!(sum.samples.iter().all(|v| *v == 0.0), "w + (-w) must vanish");
    }

    #[test]
    fn mux_rejects_mismatched_formats() {
        let a = Waveform::new(vec![1.0; 64], 1e9, 0.0).expect("valid");
        let b = Waveform::new(vec![1.0; 32], 1e9, 0.0).expect("valid");
        assert!(fdm_mux(&[a.clone(), b]).is_err(), "length mismatch must fail");
        let c = Waveform::new(vec![1.0; 64], 2e9, 0.0).expect("valid");
        assert!(fdm_mux(&[a, c]).is_err(), "rate mismatch must fail");
    }

    #[test]
    fn disjoint_band_powers_add_in_the_composite() {
        let spec = design_bessel_lpf(4, 10e6).expect("valid");
        let fs = 640e6;
        let mk = |seed: u64, f_if: f64| {
            let sym = generate_gaussian_symbols(2_000, 5.8, seed).expect("valid");
            let zoh = zero_order_hold(&sym, 64, 10e6, 0.0).expect("valid");
            let base = apply_filter(&spec, &zoh).expect("valid");
            upconvert(&base, f_if, Quadrature::InPhase).expect("valid")
        };
        let a = mk(11, 64e6);
        let b = mk(12, 104e6);
        let composite = fdm_mux(&[a.clone(), b.clone()]).expect("valid");
        let sum_power = a.power() + b.power();
        assert!(
            (composite.power() / sum_power - 1.0).abs() < 0.02,
            "disjoint-band powers must add: {} vs {}",
            composite.power(),
            sum_power
        );
        let _ = fs;
    }

    #[test]
    fn single_channel_demux_loopback_has_small_nmse() {
        // the contracted layout: 128 samples/symbol, 64 MHz IF, 10 Mbaud
        let spec = design_bessel_lpf(4, 10e6).expect("valid");
        let fs = 1.28e9;
        let symbols = generate_gaussian_symbols(400, 5.8, 21).expect("valid");
        let zoh = zero_order_hold(&symbols, 128, 10e6, 0.0).expect("valid");
        let base = apply_filter(&spec, &zoh).expect("valid");
        let up = upconvert(&base, 64e6, Quadrature::InPhase).expect("valid");
        let down = fdm_demux(&up, 64e6, Quadrature::InPhase, &spec).expect("valid");
        let offset = 2.0 * group_delay_dc(&spec) + 0.5 / 10e6;
        let rec = sample_symbols(&down, 10e6, offset).expect("valid");
        let n = rec.len().min(symbols.len()) - 4;
        let mut err = 0.0;
        let mut sig = 0.0;
        for k in 4..n {
            err += (rec[k] - symbols[k]).powi(2);
            sig += symbols[k].powi(2);
        }
        let nmse = err / sig;
        assert!(nmse < 0.01, "loopback NMSE {nmse} must stay below 0.01");
        let _ = fs;
    }

    #[test]
    fn demux_away_from_any_channel_is_strongly_isolated() {
        // A 4th-order Bessel at 10 MHz attenuates an interferer band
        // centred 3.6 bandwidths away by ~32 dB (integrated over the
        // interferer's own 10-MHz shaping); the integrated leakage only
        // crosses -40 dB once the separation passes ~5 bandwidths.
        let spec = design_bessel_lpf(4, 10e6).expect("valid");
        let symbols = generate_gaussian_symbols(2_000, 5.8, 31).expect("valid");
        let zoh = zero_order_hold(&symbols, 64, 10e6, 0.0).expect("valid");
        let base = apply_filter(&spec, &zoh).expect("valid");
        let up = upconvert(&base, 64e6, Quadrature::InPhase).expect("valid");
        let on_channel = fdm_demux(&up, 64e6, Quadrature::InPhase, &spec).expect("valid");
        let near = fdm_demux(&up, 100e6, Quadrature::InPhase, &spec).expect("valid");
        let far = fdm_demux(&up, 120e6, Quadrature::InPhase, &spec).expect("valid");
        let near_ratio = near.power() / on_channel.power();
        let far_ratio = far.power() / on_channel.power();
        assert!(
            near_ratio < 1e-3,
            "36 MHz away the leaked power ratio {near_ratio} must sit below -30 dB"
        );
        assert!(
            far_ratio < 1e-4,
            "56 MHz away the leaked power ratio {far_ratio} must sit below -40 dB"
        );
    }

    #[test]
    fn demux_of_zero_is_zero() {
        let spec = design_bessel_lpf(4, 10e6).expect("valid");
        let w = Waveform::new(vec![0.0; 1024], 640e6, 0.0).expect("valid");
        let out = fdm_demux(&w, 64e6, Quadrature::QuadraturePhase, &spec).expect("valid");
        assert!(out.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_waveform_samples_to_constant_symbols() {
        let w = Waveform::new(vec![2.5; 1280], 1.6e8, 0.0).expect("valid");
        let s = sample_symbols(&w, 1e7, 0.0).expect("valid");
        assert_eq!(s.len(), 80);
        assert!(s.iter().all(|v| *v == 2.5));
    }

    #[test]
    fn offset_by_one_symbol_shifts_the_sequence() {
        let symbols = generate_gaussian_symbols(64, 1.0, 13).expect("valid");
        let w = zero_order_hold(&symbols, 16, 1e7, 0.0).expect("valid");
        let a = sample_symbols(&w, 1e7, 0.0).expect("valid");
        let b = sample_symbols(&w, 1e7, 1e-7).expect("valid");
        assert_eq!(b.len(), a.len() - 1);
        assert_eq!(&a[1..], &b[..], "one-symbol offset must shift by one index");
    }

    #[test]
    fn sample_symbols_rejects_low_oversampling() {
        let w = Waveform::new(vec![0.0; 1024], 4e7, 0.0).expect("valid");
        assert!(sample_symbols(&w, 1e7, 0.0).is_err(), "4 samples/symbol must fail");
    }

    #[test]
    fn co_channel_crosstalk_is_unity_and_decays_monotonically() {
        let tx = design_bessel_lpf(4, 10e6).expect("valid");
        let rx = design_bessel_lpf(4, 10e6).expect("valid");
        let co = crosstalk_ratio(&tx, &rx, 0.0).expect("valid");
        assert_abs_diff_eq!(co, 1.0, epsilon = 1e-9);
        let mut last = f64::INFINITY;
        for df in [0.0, 10e6, 20e6, 30e6, 40e6, 60e6, 80e6] {
            let r = crosstalk_ratio(&tx, &rx, df).expect("valid");
            assert!(r <= last + 1e-12, "crosstalk must not grow with spacing ({df} Hz)");
            last = r;
        }
    }

    #[test]
    fn doubling_the_spacing_strongly_suppresses_crosstalk() {
        // Frozen leaked-power integrals for the 4th-order/10-MHz pair,
        // cross-checked against the dense-grid oracle below: the band
        // overlap drops from -6.5 dB at 20 MHz to -24.0 dB at 40 MHz,
        // a 17.5 dB gain for doubling the spacing. (Point-wise the
        // stopband magnitude falls 21 dB over the same step; the band
        // integral gives back a couple of dB.)
        let tx = design_bessel_lpf(4, 10e6).expect("valid");
        let rx = design_bessel_lpf(4, 10e6).expect("valid");
        let at20 = crosstalk_ratio(&tx, &rx, 20e6).expect("valid");
        let at40 = crosstalk_ratio(&tx, &rx, 40e6).expect("valid");
        assert_abs_diff_eq!(at20, 0.2227394122, epsilon = 1e-5);
        assert_abs_diff_eq!(at40, 0.0039658117, epsilon = 1e-6);
        assert!(
            at40 < at20 * 0.02,
            "40 MHz ({at40}) must sit >= 17 dB below 20 MHz ({at20})"
        );
    }

    #[test]
    fn crosstalk_matches_fixed_grid_oracle() {
        let tx = design_bessel_lpf(4, 10e6).expect("valid");
        let rx = design_bessel_lpf(4, 12e6).expect("valid");
        let df = 40e6;
        // plain Simpson on a dense uniform grid as an independent oracle
        let grid_integral = |shift: f64| -> f64 {
            let (lo, hi) = (-1.0e9_f64, 1.0e9_f64);
            let n = 200_000usize; // even
            let h = (hi - lo) / n as f64;
            let g = |f: f64| {
                (filter_magnitude(&tx, f - shift) * filter_magnitude(&rx, f)).powi(2)
            };
            let mut acc = g(lo) + g(hi);
            for k in 1..n {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * g(lo + k as f64 * h);
            }
            acc * h / 3.0
        };
        let oracle = grid_integral(df) / grid_integral(0.0);
        let fast = crosstalk_ratio(&tx, &rx, df).expect("valid");
        assert!(
            ((fast - oracle) / oracle).abs() < 1e-5,
            "adaptive {fast} vs grid oracle {oracle}"
        );
    }

    #[test]
    fn minimum_if_rule_matches_published_design_points() {
        assert_abs_diff_eq!(min_if_for_rate(10e6).expect("valid"), 64e6, epsilon = 1e-3);
        assert_abs_diff_eq!(min_if_for_rate(15e6).expect("valid"), 96e6, epsilon = 1e-3);
        assert_abs_diff_eq!(min_if_for_rate(20e6).expect("valid"), 128e6, epsilon = 1e-3);
        assert!(min_if_for_rate(0.0).is_err());
    }

    #[test]
    fn chain_operators_are_linear() {
        let spec = design_bessel_lpf(4, 10e6).expect("valid");
        let fs = 640e6;
        let x = Waveform::new(generate_gaussian_symbols(8_192, 1.0, 41).expect("valid"), fs, 0.0)
            .expect("valid");
        let y = Waveform::new(generate_gaussian_symbols(8_192, 1.0, 42).expect("valid"), fs, 0.0)
            .expect("valid");
        let (a, b) = (1.7_f64, -0.6_f64);
        let mut combo = x.clone();
        for (c, (xv, yv)) in combo.samples.iter_mut().zip(x.samples.iter().zip(&y.samples)) {
            *c = a * xv + b * yv;
        }
        let ops: Vec<Box<dyn Fn(&Waveform) -> Waveform>> = vec![
            Box::new(|w| apply_filter(&spec, w).expect("valid")),
            Box::new(|w| upconvert(w, 64e6, Quadrature::InPhase).expect("valid")),
            Box::new(|w| fdm_demux(w, 64e6, Quadrature::QuadraturePhase, &spec).expect("valid")),
        ];
        for op in &ops {
            let lhs = op(&combo);
            let fx = op(&x);
            let fy = op(&y);
            let scale = lhs.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
            for ((l, xv), yv) in lhs.samples.iter().zip(&fx.samples).zip(&fy.samples) {
                let rhs = a * xv + b * yv;
                assert!(
                    (l - rhs).abs() <= 1e-9 * scale,
                    "operator must be linear: {l} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn four_channel_loopback_recovers_every_channel() {
        // published layout: first IF 64 MHz, 40 MHz spacing, 10 Mbaud
        let spec = design_bessel_lpf(4, 10e6).expect("valid");
        let spp = 64usize;
        let sr = 10e6;
        let n_sym = 400usize;
        let ifs = [64e6, 104e6, 144e6, 184e6];
        let mut sent = Vec::new();
        let mut ups = Vec::new();
        for (k, f_if) in ifs.iter().enumerate() {
            let sym = generate_gaussian_symbols(n_sym, 5.8, 100 + k as u64).expect("valid");
            let zoh = zero_order_hold(&sym, spp, sr, 0.0).expect("valid");
            let base = apply_filter(&spec, &zoh).expect("valid");
            ups.push(upconvert(&base, *f_if, Quadrature::InPhase).expect("valid"));
            sent.push(sym);
        }
        let composite = fdm_mux(&ups).expect("valid");
        let offset = 2.0 * group_delay_dc(&spec) + 0.5 / sr;
        for (k, f_if) in ifs.iter().enumerate() {
            let down =
                fdm_demux(&composite, *f_if, Quadrature::InPhase, &spec).expect("valid");
            let rec = sample_symbols(&down, sr, offset).expect("valid");
            let n = rec.len().min(n_sym) - 4;
            let mut err = 0.0;
            let mut sig = 0.0;
            for i in 4..n {
                err += (rec[i] - sent[k][i]).powi(2);
                sig += sent[k][i].powi(2);
            }
            assert!(
                err / sig < 0.01,
                "channel {k} at {f_if} Hz: loopback NMSE {} out of contract",
                err / sig
            );
        }
    }
}
