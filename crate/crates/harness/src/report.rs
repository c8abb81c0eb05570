//! Report arithmetic and deterministic serialization helpers.

/// Floats in report files carry 9 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

/// Percent reduction (baseline - treated) / baseline, in percent.
pub fn percent_reduction(baseline: f64, treated: f64) -> f64 {
    (baseline - treated) / baseline * 100.0
}

/// Rendered with two decimals and a percent sign, e.g. "71.74%".
pub fn fmt_percent(value: f64) -> String {
    format!("{value:.2}%")
}

/// Mean and sample standard deviation (n - 1 denominator).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_pair_reductions() {
        assert_eq!(fmt_percent(percent_reduction(0.0046, 0.0013)), "71.74%");
        assert_eq!(fmt_percent(percent_reduction(0.0833, 0.0496)), "40.46%");
    }

    #[test]
    fn sample_sd_uses_n_minus_one() {
        let (mean, sd) = mean_sd(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(mean, 3.0);
        assert!((sd - 2.5_f64.sqrt()).abs() < 1e-15);
        let (single, zero) = mean_sd(&[7.5]);
        assert_eq!(single, 7.5);
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn float_format_is_nine_significant_digits_and_parses_back() {
        let s = fmt_float(0.5);
        assert_eq!(s, "5.00000000e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.5);
        let tricky = fmt_float(std::f64::consts::LN_2);
        assert_eq!(tricky.parse::<f64>().unwrap(), 0.693147181);
    }
}
