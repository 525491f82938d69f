//! Locale-independent number formatting shared by every report writer.

/// Formats `x` with six significant digits, like C's `%.6g`.
///
/// Trailing zeros are dropped, magnitudes outside `[1e-4, 1e6)` switch to
/// exponent notation (`1.5e+06`), and non-finite values print as `nan`,
/// `inf` or `-inf`.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

/// Rounds to six significant digits, keeping the value numeric.
pub fn round6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    sig6(x).parse().unwrap_or(x)
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
    fn matches_printf_g() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (76.26, "76.26"),
            (70.3945, "70.3945"),
            (9057.7379, "9057.74"),
            (29718.3, "29718.3"),
            (123456.7, "123457"),
            (999999.5, "1e+06"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-2.5, "-2.5"),
            (0.475, "0.475"),
        ];
        for (x, want) in cases {
            assert_eq!(sig6(x), want, "{x}");
        }
        assert_eq!(sig6(f64::NAN), "nan");
        assert_eq!(sig6(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn round6_is_stable() {
        assert_eq!(round6(9057.7379), 9057.74);
        assert_eq!(round6(round6(1.0 / 3.0)), round6(1.0 / 3.0));
    }
}
