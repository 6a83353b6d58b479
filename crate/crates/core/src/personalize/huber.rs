//! Huber smoothing of `|r|`: quadratic within `delta`, linear outside, with
//! the same value and slope at the seam.

#[inline]
pub fn value(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        r * r / (2.0 * delta)
    } else {
        a - 0.5 * delta
    }
}

#[inline]
pub fn derivative(r: f64, delta: f64) -> f64 {
    if r.abs() <= delta {
        r / delta
    } else {
        r.signum()
    }
}

#[inline]
pub fn second_derivative(r: f64, delta: f64) -> f64 {
    if r.abs() <= delta {
        1.0 / delta
    } else {
        0.0
    }
}

/// Curvature of the quadratic that touches the Huber function at `r` and
/// lies above it everywhere.
#[inline]
pub fn majorizer_weight(r: f64, delta: f64) -> f64 {
    1.0 / r.abs().max(delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn continuous_at_seam() {
        let d = 1e-3;
        let inside = value(d, d);
        let outside = value(d * (1.0 + 1e-12), d);
        assert!((inside - outside).abs() < 1e-12);
        assert_eq!(derivative(d, d), 1.0);
        assert_eq!(derivative(-2.0 * d, d), -1.0);
    }

    #[test]
    fn bias_from_abs_is_bounded() {
        let d = 0.01;
        for k in -100..=100 {
            let r = k as f64 * 3.7e-3;
            let gap = r.abs() - value(r, d);
            assert!((0.0..=0.5 * d + 1e-15).contains(&gap));
        }
    }

    #[test]
    fn majorizer_dominates() {
        let d = 0.05;
        for &r0 in &[-0.3, -0.01, 0.0, 0.02, 0.4] {
            let w = majorizer_weight(r0, d);
            let c = value(r0, d) - 0.5 * w * r0 * r0;
            for k in -200..=200 {
                let r = k as f64 * 0.005;
                assert!(0.5 * w * r * r + c >= value(r, d) - 1e-12);
            }
        }
    }
}
