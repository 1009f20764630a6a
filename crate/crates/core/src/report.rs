//! Per-channel rate summaries, their aggregate report, and CSV export.

use crate::model::Basis;

/// Everything the rate pipeline produced for one (channel, basis) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRate {
    pub channel: usize,
    pub basis: Basis,
    pub t_hat: f64,
    pub xi_hat_snu: f64,
    pub t_low: f64,
    pub xi_high_snu: f64,
    pub i_ab_bits: f64,
    pub chi_be_bits: f64,
    /// Finite-size correction Δ in bits/symbol (0 in asymptotic-only runs).
    pub delta_bits: f64,
    pub skr_finite_bits_per_s: f64,
    pub skr_asympt_bits_per_s: f64,
}

/// Aggregate rate report over an FDM plan.
///
/// Totals follow the worst-case basis selection: when entries for both
/// bases are present, the selected basis is the one with the lower headline
/// total, and `total_finite`/`total_asympt` are the sums over that basis's
/// entries. `worst_basis_total` always equals the selected basis's headline
/// total (the minimum over bases).
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub per_channel: Vec<ChannelRate>,
    /// Whether the headline totals are finite-size (true) or asymptotic.
    pub finite_mode: bool,
    pub total_finite_bits_per_s: f64,
    pub total_asympt_bits_per_s: f64,
    pub worst_basis_total_bits_per_s: f64,
}

impl RateReport {
    /// Build the aggregate from per-channel rows, selecting the worst basis.
    pub fn from_channels(per_channel: Vec<ChannelRate>, finite_mode: bool) -> RateReport {
        let headline = |c: &ChannelRate| {
            if finite_mode {
                c.skr_finite_bits_per_s
            } else {
                c.skr_asympt_bits_per_s
            }
        };
        let sum_for = |basis: Basis, f: &dyn Fn(&ChannelRate) -> f64| -> f64 {
            per_channel.iter().filter(|c| c.basis == basis).map(|c| f(c)).sum()
        };
        let bases: Vec<Basis> = {
            let mut b = Vec::new();
            for c in &per_channel {
                if !b.contains(&c.basis) {
                    b.push(c.basis);
                }
            }
            b
        };
        let selected = bases
            .iter()
            .copied()
            .min_by(|&x, &y| {
                sum_for(x, &headline)
                    .partial_cmp(&sum_for(y, &headline))
                    .expect("rates are finite")
            })
            .unwrap_or(Basis::Amplitude);
        RateReport {
            total_finite_bits_per_s: sum_for(selected, &|c| c.skr_finite_bits_per_s),
            total_asympt_bits_per_s: sum_for(selected, &|c| c.skr_asympt_bits_per_s),
            worst_basis_total_bits_per_s: sum_for(selected, &headline),
            per_channel,
            finite_mode,
        }
    }

    /// The headline total in bits/second: finite-size when the report was
    /// built in finite mode, asymptotic otherwise.
    pub fn headline_total_bits_per_s(&self) -> f64 {
        if self.finite_mode {
            self.total_finite_bits_per_s
        } else {
            self.total_asympt_bits_per_s
        }
    }

    /// Render as CSV. Lines in `comments` become leading `# `-prefixed
    /// lines (configuration hash, seed, and similar provenance).
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(
            "channel,basis,t_hat,xi_hat_snu,t_low,xi_high_snu,i_ab_bits,chi_be_bits,delta_bits,skr_finite_bits_per_s,skr_asympt_bits_per_s\n",
        );
        for c in &self.per_channel {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                c.channel,
                c.basis.as_str(),
                c.t_hat,
                c.xi_hat_snu,
                c.t_low,
                c.xi_high_snu,
                c.i_ab_bits,
                c.chi_be_bits,
                c.delta_bits,
                c.skr_finite_bits_per_s,
                c.skr_asympt_bits_per_s
            ));
        }
        out.push_str(&format!(
            "# total_finite_bits_per_s={} total_asympt_bits_per_s={} worst_basis_total_bits_per_s={}\n",
            self.total_finite_bits_per_s,
            self.total_asympt_bits_per_s,
            self.worst_basis_total_bits_per_s
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn row(channel: usize, basis: Basis, fin: f64, asy: f64) -> ChannelRate {
        ChannelRate {
            channel,
            basis,
            t_hat: 0.4,
            xi_hat_snu: 0.02,
            t_low: 0.39,
            xi_high_snu: 0.03,
            i_ab_bits: 0.75,
            chi_be_bits: 0.55,
            delta_bits: 0.014,
            skr_finite_bits_per_s: fin,
            skr_asympt_bits_per_s: asy,
        }
    }

    #[test]
    fn totals_sum_selected_basis_and_pick_minimum() {
        let report = RateReport::from_channels(
            vec![
                row(0, Basis::Amplitude, 1.0e6, 2.0e6),
                row(1, Basis::Amplitude, 0.9e6, 1.9e6),
                row(0, Basis::Phase, 0.8e6, 2.1e6),
                row(1, Basis::Phase, 0.7e6, 2.2e6),
            ],
            true,
        );
        // Phase block is lower on the finite headline: 1.5e6 < 1.9e6.
        assert_abs_diff_eq!(report.total_finite_bits_per_s, 1.5e6, epsilon = 1e-3);
        assert_abs_diff_eq!(report.total_asympt_bits_per_s, 4.3e6, epsilon = 1e-3);
        assert_abs_diff_eq!(report.worst_basis_total_bits_per_s, 1.5e6, epsilon = 1e-3);
    }

    #[test]
    fn single_basis_report_keeps_its_own_totals() {
        let report = RateReport::from_channels(
            vec![row(0, Basis::Amplitude, 1.0e6, 2.0e6), row(1, Basis::Amplitude, 0.5e6, 1.0e6)],
            false,
        );
        assert_abs_diff_eq!(report.total_asympt_bits_per_s, 3.0e6, epsilon = 1e-3);
        assert_eq!(report.headline_total_bits_per_s(), report.total_asympt_bits_per_s);
        assert_abs_diff_eq!(report.worst_basis_total_bits_per_s, 3.0e6, epsilon = 1e-3);
    }

    #[test]
    fn zero_rate_basis_drives_worst_total_to_zero() {
        let report = RateReport::from_channels(
            vec![row(0, Basis::Amplitude, 1.0e6, 2.0e6), row(0, Basis::Phase, 0.0, 0.0)],
            true,
        );
        assert_eq!(report.worst_basis_total_bits_per_s, 0.0);
    }

    #[test]
    fn empty_report_is_all_zero() {
        let report = RateReport::from_channels(Vec::new(), true);
        assert_eq!(report.total_finite_bits_per_s, 0.0);
        assert_eq!(report.worst_basis_total_bits_per_s, 0.0);
    }

    #[test]
    fn csv_has_comments_header_and_rows() {
        let report = RateReport::from_channels(vec![row(0, Basis::Amplitude, 1.0, 2.0)], true);
        let csv = report.to_csv(&["config_sha256=abc".to_string()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# config_sha256=abc");
        assert!(lines[1].starts_with("channel,basis,t_hat"));
        assert!(lines[2].starts_with("0,amplitude,0.4,"));
        assert!(lines[3].starts_with("# total_finite_bits_per_s=1"));
    }
}
