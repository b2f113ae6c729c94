//! Engineering-notation numbers: `1k`, `100u`, `4.7meg`, `1e3`.

/// Scale suffixes recognised after the numeric part. Longest match first so
/// that `meg` wins over `m`.
const SUFFIXES: &[(&str, i32)] =
    &[("meg", 6), ("f", -15), ("p", -12), ("n", -9), ("u", -6), ("µ", -6), ("m", -3), ("k", 3), ("g", 9), ("t", 12)];

/// Parses a SPICE-style value. The mantissa and the suffix exponent are
/// recombined into a decimal string before conversion, so `1k`, `1000` and
/// `1e3` all produce the same correctly rounded `f64`.
///
/// Trailing unit letters after the suffix (`100uF`, `12V`) are ignored, as
/// in SPICE. Returns `None` on anything else.
pub fn parse_value(token: &str) -> Option<f64> {
    let bytes = token.as_bytes();
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - frac_start;
    }
    if digits == 0 {
        return None;
    }
    let mantissa = &token[..i];

    let mut exponent: i32 = 0;
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let exp_digits_start = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_digits_start {
            exponent = token[i + 1..j].parse().ok()?;
            i = j;
        }
    }

    let rest = token[i..].to_ascii_lowercase();
    let mut unit_tail = rest.as_str();
    for (suffix, scale) in SUFFIXES {
        if let Some(stripped) = rest.strip_prefix(suffix) {
            exponent = exponent.checked_add(*scale)?;
            unit_tail = stripped;
            break;
        }
    }
    // Remaining characters may only be unit letters.
    if !unit_tail.chars().all(|c| c.is_alphabetic()) {
        return None;
    }

    let value: f64 = format!("{mantissa}e{exponent}").parse().ok()?;
    value.is_finite().then_some(value)
}

/// Formats a value so that [`parse_value`] reads back the identical `f64`.
pub fn format_value(value: f64) -> String {
    format!("{value:e}")
}

/// Formats with nine significant digits, `%g` style, for tabular output.
pub fn format_sig9(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let sci = format!("{value:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("LowerExp always has an exponent");
    let exp: i32 = exp.parse().expect("LowerExp exponent is an integer");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{value:.decimals$}"))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    if trimmed == "-0" {
        "0".to_string()
    } else {
        trimmed.to_string()
    }
}
