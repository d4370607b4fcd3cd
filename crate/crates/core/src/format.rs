//! Fixed decimal formatting for every CSV the crate writes.

/// Formats `x` with `sig` significant digits in the style of C's `%g`:
/// fixed notation when the decimal exponent lies in `[-4, sig)`, scientific
/// (`1.5e-7`) otherwise, trailing zeros removed. Negative zero prints as `0`.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= sig as i32 {
        format!("{}e{}", strip_zeros(mantissa), exp)
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Nine significant digits, the precision of every CSV output.
pub fn fmt9(x: f64) -> String {
    fmt_sig(x, 9)
}
