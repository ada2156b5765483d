//! Small text helpers shared by the serializers: round-trip-exact float
//! formatting and strict field parsing.

use crate::error::{Error, Result};

/// Format with 17 significant digits so `parse::<f64>()` recovers the exact
/// bit pattern of any finite value.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn parse_f64(field: &str, context: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::InvalidParameter(format!("{context}: bad float {field:?}")))
}

pub(crate) fn parse_usize(field: &str, context: &str) -> Result<usize> {
    field
        .parse::<usize>()
        .map_err(|_| Error::InvalidParameter(format!("{context}: bad integer {field:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips_exactly() {
        for &x in &[0.0, 1.0, -2.5, 1.0 / 3.0, 1e-300, 6.02e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn parsers_name_their_context() {
        let err = parse_f64("abc", "row 3").unwrap_err().to_string();
        assert!(err.contains("row 3"));
        assert!(parse_usize("-1", "count").is_err());
    }
}
