//! Scalar statistics helpers: the standard normal CDF and quantile, the
//! clipped binary entropy, and variances of the sampling laws used by the
//! fluctuation analysis.

use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF, via the complementary error function so the lower
/// tail keeps full relative precision.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of [`std_normal_cdf`] on `(0, 1)`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "normal quantile needs p in (0, 1), got {p}"
        )));
    }
    if p > 0.5 {
        return Ok(-std_normal_quantile(1.0 - p)?);
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    // Two Newton steps on the CDF clean up the last few ulps of erfc_inv.
    for _ in 0..2 {
        let d = std_normal_pdf(x);
        if d <= 0.0 {
            break;
        }
        x -= (std_normal_cdf(x) - p) / d;
    }
    Ok(x)
}

/// One-sided normal multiplier `-Phi^{-1}(2^{-delta})`.
pub fn tail_multiplier(delta: u32) -> f64 {
    -std_normal_quantile(2f64.powi(-(delta as i32))).expect("2^-delta is inside (0, 1)")
}

/// Binary entropy clipped to 1 above one half.
pub fn clipped_binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!(
            "binary entropy needs x in [0, 1], got {x}"
        )));
    }
    Ok(clipped_entropy_unchecked(x))
}

pub(crate) fn clipped_entropy_unchecked(x: f64) -> f64 {
    if x > 0.5 {
        1.0
    } else if x <= 0.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

/// Derivative of the clipped entropy. Zero on the clipped branch and at the
/// clip point. At `x = 0` the true slope diverges; it is only ever multiplied
/// by a variance that vanishes there, so 0 is returned.
pub fn clipped_entropy_derivative(x: f64) -> f64 {
    if x > 0.0 && x < 0.5 {
        ((1.0 - x) / x).log2()
    } else {
        0.0
    }
}

pub fn binomial_variance(trials: f64, p: f64) -> f64 {
    (trials * p * (1.0 - p)).max(0.0)
}

/// Variance of the number of marked items when `draws` items are taken
/// without replacement from `population` items of which `marked` are marked.
pub fn hypergeometric_variance(population: f64, marked: f64, draws: f64) -> f64 {
    if population <= 1.0 {
        return 0.0;
    }
    let f = marked / population;
    (draws * f * (1.0 - f) * (population - draws) / (population - 1.0)).max(0.0)
}

/// Covariance of two disjoint marked classes under the same draw.
pub fn hypergeometric_covariance(population: f64, marked_a: f64, marked_b: f64, draws: f64) -> f64 {
    if population <= 1.0 {
        return 0.0;
    }
    -draws * (marked_a / population) * (marked_b / population) * (population - draws)
        / (population - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_fixed_points() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_identity_relative() {
        let mut p = 1e-10;
        while p <= 0.5 {
            let x = std_normal_quantile(p).unwrap();
            let back = std_normal_cdf(x);
            assert!((back - p).abs() <= 1e-12 * p, "p={p} back={back}");
            p *= 1.37;
        }
    }

    #[test]
    fn quantile_symmetry() {
        for p in [0.6, 0.9, 0.999] {
            let a = std_normal_quantile(p).unwrap();
            let b = std_normal_quantile(1.0 - p).unwrap();
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_values() {
        assert_eq!(clipped_binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(clipped_binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(clipped_binary_entropy(0.75).unwrap(), 1.0);
        assert_eq!(clipped_binary_entropy(1.0).unwrap(), 1.0);
        assert!(clipped_binary_entropy(-0.1).is_err());
        assert!(clipped_binary_entropy(1.1).is_err());
        let h = clipped_binary_entropy(0.11).unwrap();
        assert!((h - 0.499_915_958_164_528_6).abs() < 1e-12);
    }

    #[test]
    fn entropy_derivative_matches_difference() {
        for x in [0.01, 0.05, 0.2, 0.45] {
            let eps = 1e-6;
            let fd = (clipped_entropy_unchecked(x + eps) - clipped_entropy_unchecked(x - eps)) / (2.0 * eps);
            assert!((fd - clipped_entropy_derivative(x)).abs() < 1e-6);
        }
        assert_eq!(clipped_entropy_derivative(0.7), 0.0);
    }

    #[test]
    fn hypergeometric_moments_small() {
        // population 5, 2 marked, draw 2: P(0)=3/10, P(1)=6/10, P(2)=1/10.
        let mean = 0.6 + 0.2;
        let var = 0.6 + 0.4 - mean * mean;
        assert!((hypergeometric_variance(5.0, 2.0, 2.0) - var).abs() < 1e-12);
    }
}
