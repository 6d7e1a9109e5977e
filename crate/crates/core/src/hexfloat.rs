//! C99 `%a`-style hexadecimal floats: exact text round-trip for `f64`.

use crate::error::{Error, Result};

/// Formats `v` as `[-]0x1.<hex>p<exp>` (normals) or `[-]0x0.<hex>p-1022`
/// (subnormals); trailing zero nibbles are dropped.
pub fn format(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let mant = bits & ((1u64 << 52) - 1);
    if biased == 0 && mant == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if biased == 0 { (0, -1022) } else { (1, biased - 1023) };
    let mut digits = format!("{mant:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let frac = if digits.is_empty() { String::new() } else { format!(".{digits}") };
    let esign = if exp >= 0 { "+" } else { "-" };
    format!("{sign}0x{lead}{frac}p{esign}{}", exp.abs())
}

/// Parses the output of [`format`]. Also accepts any normalized-form
/// hex float whose mantissa fits in 13 fraction nibbles.
pub fn parse(s: &str) -> Result<f64> {
    let bad = || Error::Format(format!("invalid hexadecimal float '{s}'"));
    let t = s.trim();
    match t {
        "nan" => return Ok(f64::NAN),
        "inf" | "+inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let (neg, rest) = match t.as_bytes().first() {
        Some(b'-') => (true, &t[1..]),
        Some(b'+') => (false, &t[1..]),
        _ => (false, t),
    };
    let rest = rest
        .strip_prefix("0x")
        .or_else(|| rest.strip_prefix("0X"))
        .ok_or_else(bad)?;
    let (mant_str, exp_str) = rest.split_once(['p', 'P']).ok_or_else(bad)?;
    let exp: i64 = exp_str.parse().map_err(|_| bad())?;
    let (lead_str, frac_str) = mant_str.split_once('.').unwrap_or((mant_str, ""));
    if frac_str.len() > 13 || !frac_str.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(bad());
    }
    let lead = u64::from_str_radix(lead_str, 16).map_err(|_| bad())?;
    let frac = if frac_str.is_empty() {
        0
    } else {
        u64::from_str_radix(frac_str, 16).map_err(|_| bad())? << (4 * (13 - frac_str.len()))
    };
    let sign = u64::from(neg) << 63;
    let bits = match lead {
        0 if frac == 0 => sign,
        0 if exp == -1022 => sign | frac,
        1 if (-1022..=1023).contains(&exp) => sign | (((exp + 1023) as u64) << 52) | frac,
        _ => return Err(bad()),
    };
    Ok(f64::from_bits(bits))
}
