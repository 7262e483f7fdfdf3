//! Mean and variance of the information leaked through the key class.
//!
//! With `kappa` the key class, the variable is
//! `Z = N - F^1 (1 - hbar(G / F^1)) - F^-1`, built from the chain
//!
//! * `C^1 ~ Bin(A P^1, q^1)` single-photon detections,
//! * `E^1 ~ Bin(C^1, 1/2)` of those in the common basis,
//! * `F^1`: how many of the `E^1` land in the `N` raw-key bits drawn from the
//!   `E_kappa` sifted bits (hypergeometric),
//! * `G ~ Bin(F^1, r^1)` phase errors among them,
//! * the dark-count chain `C^-1 ~ Bin(A, p_D)`, `E^-1 ~ Bin(C^-1, 1/2)` and
//!   `F^-1`, drawn jointly with `F^1`.
//!
//! The mean is the plug-in value at the component means. The variance is
//! the first-order propagation of every stage, with the law of total
//! variance across stages. At the means `G / F^1 = r^1`, so the sensitivity
//! of `Z` to `F^1` is exactly `1 - hbar(r^1)` and to the phase-error noise
//! `hbar'(r^1)`.

use serde::{Deserialize, Serialize};

use crate::decimal;
use crate::stats::{
    binomial_variance, clipped_entropy_derivative, clipped_entropy_unchecked, hypergeometric_covariance,
    hypergeometric_variance,
};

use super::EstimationError;

/// Counts entering the stochastic variable, all for the key class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticInputs {
    /// `A`
    #[serde(with = "decimal")]
    pub sent: f64,
    /// `E`
    #[serde(with = "decimal")]
    pub sifted: f64,
    /// `N`
    #[serde(with = "decimal")]
    pub raw_key_bits: f64,
    /// `P^1`
    #[serde(with = "decimal")]
    pub single_photon_prob: f64,
    #[serde(with = "decimal")]
    pub dark_count_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    #[serde(with = "decimal")]
    pub mean: f64,
    #[serde(with = "decimal")]
    pub variance: f64,
}

pub(crate) fn moments(
    inp: &StochasticInputs,
    q1: f64,
    r1: f64,
    with_variance: bool,
) -> Result<Moments, EstimationError> {
    let StochasticInputs {
        sent: a,
        sifted: e,
        raw_key_bits: n,
        single_photon_prob: p1,
        dark_count_prob: p_d,
    } = *inp;
    let frac = n / e;
    let b = a * p1;
    let c1 = q1 * b;
    let e1 = 0.5 * c1;
    let f1 = frac * e1;
    let cd = p_d * a;
    let ed = 0.5 * cd;
    let fd = frac * ed;
    if !(f1 > 0.0) {
        return Err(EstimationError::InfeasiblePoint {
            x: f64::NAN,
            y: f64::NAN,
            reason: "expected single-photon raw-key bits vanish".into(),
        });
    }
    let h = clipped_entropy_unchecked(r1);
    let mean = n - f1 * (1.0 - h) - fd;
    if !with_variance {
        return Ok(Moments { mean, variance: 0.0 });
    }
    let var_e1 = 0.25 * binomial_variance(b, q1) + 0.25 * c1;
    let var_f1 = frac * frac * var_e1 + hypergeometric_variance(e, e1, n);
    let var_ed = 0.25 * binomial_variance(a, p_d) + 0.25 * cd;
    let var_fd = frac * frac * var_ed + hypergeometric_variance(e, ed, n);
    let cov = hypergeometric_covariance(e, e1, ed, n);
    let sens_f = 1.0 - h;
    let sens_g = clipped_entropy_derivative(r1);
    let variance = sens_f * sens_f * var_f1
        + sens_g * sens_g * binomial_variance(f1, r1)
        + var_fd
        + 2.0 * sens_f * cov;
    Ok(Moments {
        mean,
        variance: variance.max(0.0),
    })
}

/// Public entry point for the moments at given `(q^1, r^1)`.
pub fn pa_moments(inputs: &StochasticInputs, q1: f64, r1: f64) -> Result<Moments, EstimationError> {
    moments(inputs, q1, r1, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StageRng;
    use rand_distr::{Binomial, Distribution, Hypergeometric};

    fn draw_z(inp: &StochasticInputs, q1: f64, r1: f64, rng: &mut StageRng) -> f64 {
        let b = (inp.sent * inp.single_photon_prob).round() as u64;
        let c1 = Binomial::new(b, q1).unwrap().sample(rng);
        let e1 = Binomial::new(c1, 0.5).unwrap().sample(rng);
        let cd = Binomial::new(inp.sent as u64, inp.dark_count_prob).unwrap().sample(rng);
        let ed = Binomial::new(cd, 0.5).unwrap().sample(rng);
        let e = inp.sifted as u64;
        let n = inp.raw_key_bits as u64;
        let f1 = Hypergeometric::new(e, e1, n).unwrap().sample(rng);
        let fd = Hypergeometric::new(e - e1, ed, n - f1).unwrap().sample(rng);
        let g = Binomial::new(f1, r1).unwrap().sample(rng);
        let ratio = if f1 > 0 { g as f64 / f1 as f64 } else { 0.0 };
        inp.raw_key_bits - f1 as f64 * (1.0 - clipped_entropy_unchecked(ratio)) - fd as f64
    }

    #[test]
    fn plug_in_without_variance() {
        let inp = StochasticInputs {
            sent: 1e6,
            sifted: 2e4,
            raw_key_bits: 1e4,
            single_photon_prob: 0.3,
            dark_count_prob: 0.0,
        };
        let m = moments(&inp, 0.1, 0.0, false).unwrap();
        // F^1 = (1e4 / 2e4) * 0.5 * 0.1 * 3e5 = 7500, no dark bits.
        assert!((m.mean - 2500.0).abs() < 1e-9);
        assert_eq!(m.variance, 0.0);
        assert!(moments(&inp, 0.0, 0.1, true).is_err());
    }

    #[test]
    fn monte_carlo_agreement_small() {
        let inp = StochasticInputs {
            sent: 2e7,
            sifted: 6e4,
            raw_key_bits: 2e4,
            single_photon_prob: 0.3,
            dark_count_prob: 1e-3,
        };
        let (q1, r1) = (0.008, 0.06);
        let m = pa_moments(&inp, q1, r1).unwrap();
        let mut rng = StageRng::from_seed_u64(77);
        let draws = 20_000;
        let zs: Vec<f64> = (0..draws).map(|_| draw_z(&inp, q1, r1, &mut rng)).collect();
        let mean = zs.iter().sum::<f64>() / draws as f64;
        let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se_mean = (var / draws as f64).sqrt();
        assert!((mean - m.mean).abs() < 4.0 * se_mean, "{mean} vs {}", m.mean);
        assert!((var / m.variance - 1.0).abs() < 0.06, "{var} vs {}", m.variance);
    }
}
