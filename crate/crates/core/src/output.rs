//! Number formatting shared by the CSV writers.

/// Scientific notation with 17 significant digits, enough to round-trip any
/// `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for &x in &[0.1, -2.125, 1.0 / 3.0, 6.02e23, 0.0] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt17(2.125), "2.1250000000000000e0");
    }
}
