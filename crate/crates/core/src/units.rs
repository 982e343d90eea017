//! Quantities with unit suffixes, normalized to SI.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Time,
    Frequency,
    Length,
    Voltage,
}

impl Dimension {
    /// Unit suffixes with their decimal exponents.
    fn suffixes(self) -> &'static [(&'static str, i32)] {
        // Longest suffix first so `ms` wins over `s`.
        match self {
            Dimension::Time => &[("ns", -9), ("us", -6), ("µs", -6), ("ms", -3), ("s", 0)],
            Dimension::Frequency => &[("GHz", 9), ("MHz", 6), ("kHz", 3), ("Hz", 0)],
            Dimension::Length => &[("nm", -9), ("um", -6), ("µm", -6), ("mm", -3), ("m", 0)],
            Dimension::Voltage => &[("mV", -3), ("V", 0)],
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Time => "time",
            Dimension::Frequency => "frequency",
            Dimension::Length => "length",
            Dimension::Voltage => "voltage",
        })
    }
}

/// Parses `1.5ms`, `-15MHz`, `7um`, `280mV` or a bare SI number.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let text = text.trim();
    let mut suffixes: Vec<_> = dim.suffixes().to_vec();
    suffixes.sort_by_key(|(s, _)| std::cmp::Reverse(s.len()));
    let (number, exponent) = suffixes
        .iter()
        .find_map(|(s, e)| text.strip_suffix(s).map(|n| (n.trim_end(), *e)))
        .unwrap_or((text, 0));
    let bad = || format!("`{text}` is not a {dim} (expected a number with optional unit)");
    let value: f64 = number.parse().map_err(|_| bad())?;
    // Re-parse with the exponent folded in so `100ns` is exactly 1e-7.
    let si = if exponent == 0 || number.contains(['e', 'E']) || !value.is_finite() {
        value * 10f64.powi(exponent)
    } else {
        format!("{number}e{exponent}").parse().map_err(|_| bad())?
    };
    if si.is_finite() {
        Ok(si)
    } else {
        Err(format!("`{text}` is not finite"))
    }
}
