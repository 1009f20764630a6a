//! Welch power-spectral-density estimation (Hann window, 50% overlap),
//! used by tests and the IF-placement sweep to localize spectral features.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// One-sided Welch PSD of `samples` at rate `fs`, with segments of
/// `nfft` points. Returns (frequencies in Hz, PSD in power/Hz). The PSD is
/// normalized so that the sum of psd·Δf over the one-sided grid equals the
/// signal's mean square (Parseval within estimator error).
pub fn welch_psd(samples: &[f64], fs: f64, nfft: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(nfft >= 8 && nfft % 2 == 0, "nfft must be even and at least 8");
    assert!(samples.len() >= nfft, "need at least one full segment");
    let hop = nfft / 2;
    let window: Vec<f64> = (0..nfft)
        .map(|n| {
            let x = std::f64::consts::PI * n as f64 / nfft as f64;
            x.sin() * x.sin()
        })
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum::<f64>() / nfft as f64;

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nfft);
    let half = nfft / 2;
    let mut psd = vec![0.0_f64; half + 1];
    let mut count = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    let mut start = 0;
    while start + nfft <= samples.len() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in psd.iter_mut().enumerate() {
            let mag2 = buf[k].norm_sqr();
            // one-sided: double everything except DC and Nyquist
            let fold = if k == 0 || k == half { 1.0 } else { 2.0 };
            *p += fold * mag2;
        }
        count += 1;
        start += hop;
    }
    let norm = 1.0 / (count as f64 * fs * nfft as f64 * win_power);
    for p in psd.iter_mut() {
        *p *= norm;
    }
    let freqs = (0..=half).map(|k| k as f64 * fs / nfft as f64).collect();
    (freqs, psd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn tone_peaks_in_its_own_bin() {
        let fs = 1.0e9;
        let f0 = 100e6;
        let n = 1 << 16;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f0 * i as f64 / fs).cos())
            .collect();
        let (freqs, psd) = welch_psd(&x, fs, 4096);
        let peak = psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
            .expect("non-empty")
            .0;
        let df = fs / 4096.0;
        assert!(
            (freqs[peak] - f0).abs() <= df,
            "peak at {} Hz, expected {f0} Hz within one bin",
            freqs[peak]
        );
    }

    #[test]
    fn white_noise_psd_integrates_to_variance() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let n = 1 << 18;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let var = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let fs = 2.0e8;
        let (freqs, psd) = welch_psd(&x, fs, 1024);
        let df = freqs[1] - freqs[0];
        let integral: f64 = psd.iter().sum::<f64>() * df;
        assert!(
            ((integral - var) / var).abs() < 0.05,
            "PSD integral {integral} vs variance {var}"
        );
    }

    #[test]
    fn white_noise_psd_is_flat_across_bands() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let n = 1 << 19;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0_f64..1.0)).collect();
        let (_, psd) = welch_psd(&x, 1.0e9, 512);
        let band = psd.len() / 4;
        let low: f64 = psd[1..band].iter().sum::<f64>() / (band - 1) as f64;
        let high: f64 = psd[3 * band..].iter().sum::<f64>() / (psd.len() - 3 * band) as f64;
        assert!(
            (low / high - 1.0).abs() < 0.1,
            "white spectrum should be flat: low {low} vs high {high}"
        );
    }
}
