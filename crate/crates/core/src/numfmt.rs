//! `%.9g`-style float formatting used by every CSV and SVG writer.

/// Significant digits written for every exported float.
pub const SIG_DIGITS: usize = 9;

/// Formats `v` like C's `%.{digits}g`: shortest of fixed or scientific
/// notation at the given precision, trailing zeros stripped.
pub fn fmt_sig(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = digits.max(1);
    // Round first in scientific form so the exponent reflects the rounding.
    let sci = format!("{:.*e}", p - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= p as i32 {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

/// [`fmt_sig`] at [`SIG_DIGITS`].
pub fn g9(v: f64) -> String {
    fmt_sig(v, SIG_DIGITS)
}

fn strip_zeros(s: &str) -> &str {
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
            (-2.5, "-2.5"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (99999999.95, "100000000"),
            (1e100, "1e+100"),
            (f64::MIN_POSITIVE, "2.22507386e-308"),
        ];
        for (v, want) in cases {
            assert_eq!(g9(v), want, "{v}");
        }
    }

    #[test]
    fn round_trips_to_nine_digits() {
        for v in [std::f64::consts::PI, 6.02214076e23, -1.602e-19, 0.1 + 0.2] {
            let back: f64 = g9(v).parse().unwrap();
            assert!(((back - v) / v).abs() < 5e-9);
        }
    }
}
