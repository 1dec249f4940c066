//! Experiment runner behind the CLI: config parsing and seeded runs that write CSV.

pub mod config;
pub mod run;

pub use config::{DataSource, ExperimentConfig, Kind, RawConfig, Scenario};
pub use run::{resolve_output_dir, run_experiment, run_seed, RunSummary, SeedOutcome, SummaryRow, SUMMARY_HEADER};

/// Formats a real with 17 significant digits, `%.17g` style.
pub fn fmt_real(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let fixed = format!("{:.*}", (16 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digit_reals_round_trip() {
        assert_eq!(fmt_real(1.0), "1");
        assert_eq!(fmt_real(0.5), "0.5");
        assert_eq!(fmt_real(2.01), "2.0099999999999998");
        assert_eq!(fmt_real(-1e-7), "-9.9999999999999995e-8");
        assert_eq!(fmt_real(1e20), "1e20");
        assert_eq!(fmt_real(f64::INFINITY), "inf");
        for x in [0.1, 1.0 / 3.0, -123456.789, 6.02e23, 1e-300, f64::MAX] {
            assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        }
    }
}
