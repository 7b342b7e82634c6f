//! Float formatting shared by every CSV writer.
//!
//! CSVs leave the crate and come back through external tools, so floats are
//! written in scientific notation with a fixed 17 significant digits: the
//! count that makes f64 -> text -> f64 lossless for every value. A fixed
//! width (rather than shortest round-trip) keeps the byte layout independent
//! of the value's magnitude, and the same value always produces the same
//! bytes, which the byte-identical replay checks rely on.

/// `x` in scientific notation with 17 significant digits.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// [`sig17`] for optional columns; `None` is the empty CSV field.
pub fn sig17_opt(x: Option<f64>) -> String {
    x.map(sig17).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_width_and_lossless() {
        assert_eq!(sig17(0.5), "5.0000000000000000e-1");
        assert_eq!(sig17(1.0), "1.0000000000000000e0");
        assert_eq!(sig17(0.0), "0.0000000000000000e0");
        assert_eq!(sig17(-3.0), "-3.0000000000000000e0");
        for &x in &[std::f64::consts::PI, 1e-300, f64::MIN_POSITIVE, 2.0f64.powi(61), 0.1 + 0.2] {
            let back: f64 = sig17(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} did not round-trip");
        }
        assert_eq!(sig17_opt(None), "");
        assert_eq!(sig17_opt(Some(0.25)), "2.5000000000000000e-1");
    }
}
