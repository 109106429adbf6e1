//! Fixed-precision number formatting shared by CSV and JSON output.

/// Significant digits used for every emitted number.
pub const SIG_DIGITS: usize = 12;

/// `%g`-style rendering with 12 significant digits; `inf`/`-inf`/`nan` for
/// non-finite values.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= SIG_DIGITS as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
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

/// Rounds to 12 significant digits; non-finite values pass through.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    fmt_sig(x).parse().unwrap_or(x)
}

/// Rewrites every number of a JSON tree to 12 significant digits.
pub fn round_json(v: &mut serde_json::Value) {
    use serde_json::Value;
    match v {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_sig(f)) {
                        *n = r;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// JSON value for a possibly infinite real: finite numbers are rounded, the
/// rest become the strings `"inf"`, `"-inf"` or `"nan"`.
pub fn json_real(x: f64) -> serde_json::Value {
    match serde_json::Number::from_f64(round_sig(x)) {
        Some(n) if x.is_finite() => serde_json::Value::Number(n),
        _ => serde_json::Value::String(fmt_sig(x)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(6.76), "6.76");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(2.0 / 3.0), "0.666666666667");
        assert_eq!(fmt_sig(1e-7), "1e-7");
        assert_eq!(fmt_sig(-1234567.0), "-1234567");
        assert_eq!(fmt_sig(1.5e20), "1.5e20");
        assert_eq!(fmt_sig(9.9999999999999), "10");
        assert_eq!(fmt_sig(f64::INFINITY), "inf");
        assert_eq!(fmt_sig(0.0), "0");
    }

    #[test]
    fn rounding_in_json() {
        let mut v = serde_json::json!({"a": [0.1 + 0.2, 3], "b": 1.0 / 3.0});
        round_json(&mut v);
        assert_eq!(v["a"][0].as_f64().unwrap(), 0.3);
        assert_eq!(v["a"][1].as_i64().unwrap(), 3);
        assert_eq!(v["b"].as_f64().unwrap(), 0.333333333333);
        assert_eq!(json_real(f64::INFINITY), serde_json::json!("inf"));
    }
}
