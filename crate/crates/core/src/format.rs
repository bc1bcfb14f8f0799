//! Numeric formatting shared by every report.

/// Formats `x` with 6 significant digits in the style of C's `%g`: fixed
/// notation for decimal exponents in [-4, 6), scientific otherwise, trailing
/// zeros removed.
pub fn sig6(x: f64) -> String {
    sig(x, 6)
}

pub fn sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    // The exponent after rounding to `digits` significant digits.
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds `x` to what [`sig6`] prints, so that a value survives a write/read
/// cycle through any report unchanged.
pub fn quantize6(x: f64) -> f64 {
    sig6(x).parse().unwrap_or(x)
}

/// Human-readable parameter count: `167000000` -> `167M`, `5300000` -> `5.3M`.
pub fn model_size(weight_num: u64) -> String {
    let w = weight_num as f64;
    if weight_num >= 1_000_000_000 {
        format!("{}B", sig6(w / 1e9))
    } else if weight_num >= 1_000_000 {
        format!("{}M", sig6(w / 1e6))
    } else if weight_num >= 1_000 {
        format!("{}K", sig6(w / 1e3))
    } else {
        weight_num.to_string()
    }
}
