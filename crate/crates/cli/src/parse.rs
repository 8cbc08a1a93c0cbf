//! Flag value parsers and output number formatting.

/// Accepts `10`, `10dB` or `-3.5 dB`.
pub fn parse_db(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let t = t
        .strip_suffix("dB")
        .or_else(|| t.strip_suffix("db"))
        .unwrap_or(t)
        .trim();
    let v: f64 = t.parse().map_err(|_| format!("`{s}` is not a number of dB"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn numbers(s: &str, count: usize) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split([':', ',']).collect();
    if parts.len() != count {
        return Err(format!("`{s}`: expected {count} numbers separated by `:` or `,`"));
    }
    parts.into_iter().map(parse_db).collect()
}

/// `LO:HI` or `LO,HI`.
pub fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = numbers(s, 2)?;
    Ok((v[0], v[1]))
}

/// `LO:HI:STEP` with `LO <= HI` and `STEP > 0`.
pub fn parse_grid(s: &str) -> Result<(f64, f64, f64), String> {
    let v = numbers(s, 3)?;
    if !(v[2] > 0.0 && v[1] >= v[0]) {
        return Err(format!("`{s}`: need LO <= HI and STEP > 0"));
    }
    Ok((v[0], v[1], v[2]))
}

/// dB values are printed with four decimals.
pub fn fmt_db(x: f64) -> String {
    format!("{x:.4}")
}

/// Linear values are printed with nine significant digits.
pub fn fmt_linear(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..9).contains(&magnitude) {
        let decimals = (8 - magnitude).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}
