//! Plain-text table output. Every float is written with 10 significant digits
//! so regression diffs are stable across runs.

use std::io::{self, Write};

/// Format a float with 10 significant digits (`1.234567890e-3`).
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.9e}")
    }
}

/// Short label for a position used in column names, e.g. `3` or `-2.5`.
pub fn label(v: f64) -> String {
    format!("{v}")
}

pub fn write_row<W: Write>(w: &mut W, fields: &[f64]) -> io::Result<()> {
    let line: Vec<String> = fields.iter().map(|&v| num(v)).collect();
    writeln!(w, "{}", line.join(","))
}

/// `x,<name>` dump of one nodal array.
pub fn write_profile<W: Write>(
    w: &mut W,
    xs: impl Iterator<Item = f64>,
    name: &str,
    values: &[f64],
) -> io::Result<()> {
    writeln!(w, "x,{name}")?;
    for (x, &v) in xs.zip(values) {
        write_row(w, &[x, v])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_significant_digits() {
        assert_eq!(num(0.942809041582063), "9.428090416e-1");
        assert_eq!(num(-280.0), "-2.800000000e2");
        assert_eq!(num(f64::NAN), "nan");
        assert_eq!(label(3.0), "3");
        assert_eq!(label(-2.5), "-2.5");
    }
}
