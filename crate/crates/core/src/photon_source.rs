//! Photon-number statistics of phase-randomized coherent pulses.
//!
//! A coherent pulse of mean photon number `mu` is diagonal in the Fock basis
//! with Poisson weights. For the decoy analysis each pulse is written as a
//! convex mixture of vacuum, a single photon and a family of worst-case
//! multiphoton states `rho_2 ..= rho_{k+1}`, where `rho_l` only depends on the
//! `l - 1` smallest nonzero intensities.
//!
//! Pulse classes are indexed `0 ..= 2k`: vacuum, then the `k` intensities in
//! the diagonal (×) basis, then the same intensities in the rectilinear (+)
//! basis. Tagged states are indexed `0 ..= 2k + 1`: vacuum, single photon,
//! `rho_2 ..= rho_{k+1}` in ×, then `rho_2 ..= rho_{k+1}` in +.

use serde::{Deserialize, Serialize};

use crate::decimal;
use crate::error::{Error, Result};

pub const DEFAULT_FOCK_CUTOFF: usize = 40;
const NORMALIZATION_TOL: f64 = 1e-9;
const TAIL_TOL: f64 = 1e-9;
const RECONSTRUCTION_TOL: f64 = 1e-9;

/// Measurement basis of a pulse class or tagged state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// Rectilinear basis, written `+`.
    Plus,
    /// Diagonal basis, written `×`.
    Cross,
}

impl Basis {
    pub fn other(self) -> Basis {
        match self {
            Basis::Plus => Basis::Cross,
            Basis::Cross => Basis::Plus,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Basis::Plus => "+",
            Basis::Cross => "x",
        }
    }
}

/// Mean photon numbers `0 = mu_0 < mu_1 < ... < mu_k` and the signal index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntensityRepr", into = "IntensityRepr")]
pub struct IntensitySet {
    mu: Vec<f64>,
    signal: usize,
}

#[derive(Serialize, Deserialize)]
struct IntensityRepr {
    #[serde(with = "decimal::vec")]
    mu: Vec<f64>,
    signal_index: usize,
}

impl TryFrom<IntensityRepr> for IntensitySet {
    type Error = Error;
    fn try_from(r: IntensityRepr) -> Result<Self> {
        IntensitySet::new(&r.mu, r.signal_index)
    }
}

impl From<IntensitySet> for IntensityRepr {
    fn from(s: IntensitySet) -> Self {
        IntensityRepr {
            mu: s.mu[1..].to_vec(),
            signal_index: s.signal,
        }
    }
}

impl IntensitySet {
    /// `nonzero` lists `mu_1 ..= mu_k`; `signal_index` is in `1 ..= k`.
    pub fn new(nonzero: &[f64], signal_index: usize) -> Result<Self> {
        if nonzero.is_empty() {
            return Err(Error::InvalidParameter("at least one nonzero intensity".into()));
        }
        let mut mu = Vec::with_capacity(nonzero.len() + 1);
        mu.push(0.0);
        mu.extend_from_slice(nonzero);
        for i in 1..mu.len() {
            if !mu[i].is_finite() {
                return Err(Error::InvalidParameter(format!("mu[{i}] is not finite")));
            }
            if mu[i] == mu[i - 1] {
                return Err(Error::DegenerateIntensities(i - 1, i));
            }
            if mu[i] < mu[i - 1] {
                return Err(Error::InvalidParameter(format!(
                    "intensities must be strictly increasing from 0 (mu[{}] = {} >= mu[{i}] = {})",
                    i - 1,
                    mu[i - 1],
                    mu[i]
                )));
            }
        }
        let k = nonzero.len();
        if !(1..=k).contains(&signal_index) {
            return Err(Error::InvalidParameter(format!(
                "signal index {signal_index} outside 1..={k}"
            )));
        }
        Ok(IntensitySet {
            mu,
            signal: signal_index,
        })
    }

    /// Number of nonzero intensities.
    pub fn k(&self) -> usize {
        self.mu.len() - 1
    }

    /// `mu_i` for `i` in `0 ..= k`.
    pub fn mu(&self, i: usize) -> f64 {
        self.mu[i]
    }

    pub fn all(&self) -> &[f64] {
        &self.mu
    }

    pub fn signal_index(&self) -> usize {
        self.signal
    }

    pub fn num_classes(&self) -> usize {
        2 * self.k() + 1
    }

    /// Pulse class for intensity index `a` (`1 ..= k`) in `basis`.
    pub fn class(&self, basis: Basis, a: usize) -> usize {
        debug_assert!((1..=self.k()).contains(&a));
        match basis {
            Basis::Cross => a,
            Basis::Plus => a + self.k(),
        }
    }

    pub fn signal_class(&self, basis: Basis) -> usize {
        self.class(basis, self.signal)
    }

    /// Basis and intensity index of a nonvacuum pulse class.
    pub fn class_info(&self, class: usize) -> Option<(Basis, usize)> {
        let k = self.k();
        match class {
            0 => None,
            c if c <= k => Some((Basis::Cross, c)),
            c if c <= 2 * k => Some((Basis::Plus, c - k)),
            _ => None,
        }
    }

    /// Mean photon number of a pulse class.
    pub fn class_mu(&self, class: usize) -> f64 {
        self.class_info(class).map_or(0.0, |(_, a)| self.mu[a])
    }
}

/// Photon-number probabilities on `0 ..= n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonNumberDist {
    pub n_max: usize,
    #[serde(with = "decimal::vec")]
    pub probs: Vec<f64>,
}

impl PhotonNumberDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidParameter("empty distribution".into()));
        }
        if let Some(i) = probs.iter().position(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidParameter(format!("negative weight at n = {i}")));
        }
        let total: f64 = probs.iter().sum();
        if !(total >= 1.0 - NORMALIZATION_TOL && total <= 1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!("weights sum to {total}")));
        }
        Ok(PhotonNumberDist {
            n_max: probs.len() - 1,
            probs,
        })
    }

    pub fn poisson(mu: f64, n_max: usize) -> Self {
        PhotonNumberDist {
            n_max,
            probs: (0..=n_max).map(|n| poisson_weight(mu, n)).collect(),
        }
    }

    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// `e^{-mu} mu^n / n!`.
pub fn poisson_weight(mu: f64, n: usize) -> f64 {
    debug_assert!(mu >= 0.0);
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if n > 170 {
        let ln = -mu + n as f64 * mu.ln() - statrs::function::gamma::ln_gamma(n as f64 + 1.0);
        return ln.exp();
    }
    (1..=n).fold((-mu).exp(), |acc, t| acc * mu / t as f64)
}

/// Weight `gamma_{l,n}` of the worst-case multiphoton state `rho_l`.
///
/// Evaluates
/// `sum_{j=1}^{l-1} prod_{m<l-1}(mu_{l-1} - mu_m) mu_{l-1}^2 mu_j^{n-2} / prod_{m != j}(mu_j - mu_m)`
/// over the nonzero intensities, with empty products equal to 1. The sum is
/// `l - 2`-th divided difference of `t^{n-2}`, which vanishes identically for
/// `n < l`; that case returns an exact zero.
pub fn gamma_coeff(l: usize, n: usize, intensities: &IntensitySet) -> Result<f64> {
    gamma_from_intensities(l, n, &intensities.all()[1..])
}

/// Same as [`gamma_coeff`] on a raw slice of nonzero intensities `mu_1, mu_2, ...`.
pub fn gamma_from_intensities(l: usize, n: usize, nonzero: &[f64]) -> Result<f64> {
    if l < 2 || l > nonzero.len() + 1 {
        return Err(Error::InvalidParameter(format!(
            "state index l = {l} outside 2..={}",
            nonzero.len() + 1
        )));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("photon number n = {n} < 2")));
    }
    let mu = |i: usize| nonzero[i - 1];
    for a in 1..l {
        for b in a + 1..l {
            if mu(a) == mu(b) {
                return Err(Error::DegenerateIntensities(a, b));
            }
        }
    }
    if n < l {
        return Ok(0.0);
    }
    let top = mu(l - 1);
    let prefix = (1..l - 1).fold(top * top, |acc, m| acc * (top - mu(m)));
    let sum: f64 = (1..l)
        .map(|j| {
            let denom = (1..l).filter(|&m| m != j).fold(1.0, |acc, m| acc * (mu(j) - mu(m)));
            mu(j).powi((n - 2) as i32) / denom
        })
        .sum();
    Ok(prefix * sum)
}

/// Normalized `rho_2 ..= rho_{k+1}` on the truncated Fock space.
pub fn build_worst_case_states(intensities: &IntensitySet, n_max: usize) -> Result<Vec<PhotonNumberDist>> {
    if n_max < 10 {
        return Err(Error::InvalidParameter(format!("n_max = {n_max} < 10")));
    }
    let k = intensities.k();
    (2..=k + 1)
        .map(|l| {
            let weight = |n: usize| -> Result<f64> {
                if n < 2 {
                    return Ok(0.0);
                }
                Ok(gamma_coeff(l, n, intensities)? * inv_factorial(n))
            };
            let raw = (0..=n_max).map(weight).collect::<Result<Vec<f64>>>()?;
            let kept: f64 = raw.iter().sum();
            let mut tail = 0.0;
            for n in n_max + 1..n_max + 400 {
                let w = weight(n)?;
                tail += w;
                if w < 1e-300 {
                    break;
                }
            }
            let tail_mass = tail / (kept + tail);
            if !(tail_mass < TAIL_TOL) {
                return Err(Error::TruncationTooSmall { n_max, tail: tail_mass });
            }
            if !(kept > 0.0) {
                return Err(Error::Infeasible(format!("rho_{l} has no weight")));
            }
            Ok(PhotonNumberDist {
                n_max,
                probs: raw.into_iter().map(|w| w / kept).collect(),
            })
        })
        .collect()
}

fn inv_factorial(n: usize) -> f64 {
    if n > 170 {
        return (-statrs::function::gamma::ln_gamma(n as f64 + 1.0)).exp();
    }
    (1..=n).fold(1.0, |acc, t| acc / t as f64)
}

/// Generation probabilities `P_i^j` of tagged state `j` given pulse class `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedStateModel {
    pub intensities: IntensitySet,
    /// Rows `i = 0 ..= 2k`, columns `j = 0 ..= 2k + 1`.
    #[serde(with = "decimal::matrix")]
    pub probs: Vec<Vec<f64>>,
    /// `rho_2 ..= rho_{k+1}`.
    pub rho: Vec<PhotonNumberDist>,
}

impl TaggedStateModel {
    pub fn k(&self) -> usize {
        self.intensities.k()
    }

    pub fn num_classes(&self) -> usize {
        2 * self.k() + 1
    }

    pub fn num_states(&self) -> usize {
        2 * self.k() + 2
    }

    #[inline]
    pub fn p(&self, class: usize, state: usize) -> f64 {
        self.probs[class][state]
    }

    /// Tagged-state index of `rho_l` in `basis`.
    pub fn multiphoton_state(&self, basis: Basis, l: usize) -> usize {
        debug_assert!((2..=self.k() + 1).contains(&l));
        match basis {
            Basis::Cross => l,
            Basis::Plus => l + self.k(),
        }
    }

    /// Basis of a tagged state; `None` for vacuum and single photon, which
    /// are shared by both bases.
    pub fn state_basis(&self, state: usize) -> Option<Basis> {
        let k = self.k();
        match state {
            0 | 1 => None,
            s if s <= k + 1 => Some(Basis::Cross),
            _ => Some(Basis::Plus),
        }
    }

    /// Photon-number distribution of tagged state `j`.
    pub fn state_dist(&self, state: usize) -> PhotonNumberDist {
        let n_max = self.rho[0].n_max;
        match state {
            0 | 1 => {
                let mut probs = vec![0.0; n_max + 1];
                probs[state] = 1.0;
                PhotonNumberDist { n_max, probs }
            }
            s => {
                let l = if s <= self.k() + 1 { s } else { s - self.k() };
                self.rho[l - 2].clone()
            }
        }
    }

    /// `sum_j P_i^j rho^j(n)`; should reproduce Poisson(mu_i).
    pub fn mixture(&self, class: usize) -> Vec<f64> {
        let n_max = self.rho[0].n_max;
        let mut out = vec![0.0; n_max + 1];
        for state in 0..self.num_states() {
            let w = self.probs[class][state];
            if w == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(&self.state_dist(state).probs) {
                *o += w * p;
            }
        }
        out
    }

    /// Largest per-entry deviation of any row's mixture from its Poisson law.
    pub fn reconstruction_residual(&self) -> f64 {
        (0..self.num_classes())
            .flat_map(|i| {
                let mu = self.intensities.class_mu(i);
                self.mixture(i)
                    .into_iter()
                    .enumerate()
                    .map(move |(n, m)| (m - poisson_weight(mu, n)).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Exchanges the roles of the two bases.
    pub fn mirrored(&self) -> TaggedStateModel {
        let k = self.k();
        let mut probs = self.probs.clone();
        for i in 0..self.num_classes() {
            let src = swap_class(i, k);
            for j in 0..self.num_states() {
                probs[i][j] = self.probs[src][swap_state(j, k)];
            }
        }
        TaggedStateModel {
            intensities: self.intensities.clone(),
            probs,
            rho: self.rho.clone(),
        }
    }
}

/// Class index under the × ↔ + exchange.
pub fn swap_class(i: usize, k: usize) -> usize {
    match i {
        0 => 0,
        c if c <= k => c + k,
        c => c - k,
    }
}

/// Tagged-state index under the × ↔ + exchange.
pub fn swap_state(j: usize, k: usize) -> usize {
    match j {
        0 | 1 => j,
        s if s <= k + 1 => s + k,
        s => s - k,
    }
}

/// Decomposes every pulse class into vacuum, single photon and the
/// worst-case multiphoton states.
///
/// Vacuum and single-photon weights are read off the `n = 0, 1` Fock
/// entries. The multiphoton weights of intensity `mu_a` solve the matching
/// system on `n = 2 ..= a + 1`, which is lower triangular because `rho_l`
/// vanishes below `n = l`; the remaining entries up to `n_max` are then
/// checked. The decomposition is unique, so there is no choice among
/// alternatives to make.
pub fn tagged_state_probs(intensities: &IntensitySet, n_max: usize) -> Result<TaggedStateModel> {
    let rho = build_worst_case_states(intensities, n_max)?;
    let k = intensities.k();
    let mut probs = vec![vec![0.0; 2 * k + 2]; 2 * k + 1];
    probs[0][0] = 1.0;
    for a in 1..=k {
        let mu = intensities.mu(a);
        let target: Vec<f64> = (0..=n_max).map(|n| poisson_weight(mu, n)).collect();
        let mut weights = vec![0.0; a + 2]; // index l = 2 ..= a + 1
        for n in 2..=a + 1 {
            let known: f64 = (2..n).map(|l| weights[l] * rho[l - 2].probs[n]).sum();
            let diag = rho[n - 2].probs[n];
            weights[n] = (target[n] - known) / diag;
        }
        for (l, w) in weights.iter_mut().enumerate().skip(2) {
            if *w < -1e-12 {
                return Err(Error::Infeasible(format!(
                    "weight of rho_{l} for mu = {mu} is {w:e}"
                )));
            }
            *w = w.max(0.0);
        }
        for n in 0..=n_max {
            let mixed = if n == 0 {
                target[0]
            } else if n == 1 {
                target[1]
            } else {
                (2..=a + 1).map(|l| weights[l] * rho[l - 2].probs[n]).sum()
            };
            let err = (mixed - target[n]).abs();
            if err > RECONSTRUCTION_TOL {
                return Err(Error::Infeasible(format!(
                    "mu = {mu}: Fock entry n = {n} misses by {err:e}"
                )));
            }
        }
        for basis in [Basis::Cross, Basis::Plus] {
            let i = intensities.class(basis, a);
            probs[i][0] = target[0];
            probs[i][1] = target[1];
            for l in 2..=a + 1 {
                let j = match basis {
                    Basis::Cross => l,
                    Basis::Plus => l + k,
                };
                probs[i][j] = weights[l];
            }
        }
    }
    Ok(TaggedStateModel {
        intensities: intensities.clone(),
        probs,
        rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::{BigInt, BigRational, ToPrimitive, Zero};

    fn reference() -> IntensitySet {
        IntensitySet::new(&[0.07, 0.35, 0.5], 3).unwrap()
    }

    fn rational(x: f64) -> BigRational {
        BigRational::from_float(x).unwrap()
    }

    /// Exact evaluation of the displayed gamma sum over rationals.
    fn gamma_exact(l: usize, n: usize, nonzero: &[f64]) -> BigRational {
        let mu = |i: usize| rational(nonzero[i - 1]);
        let top = mu(l - 1);
        let mut prefix = top.clone() * top.clone();
        for m in 1..l - 1 {
            prefix *= top.clone() - mu(m);
        }
        let mut sum = BigRational::zero();
        for j in 1..l {
            let mut denom = BigRational::from_integer(BigInt::from(1));
            for m in (1..l).filter(|&m| m != j) {
                denom *= mu(j) - mu(m);
            }
            let mut pow = BigRational::from_integer(BigInt::from(1));
            for _ in 0..n - 2 {
                pow *= mu(j);
            }
            sum += pow / denom;
        }
        prefix * sum
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson_weight(0.0, 0), 1.0);
        assert_eq!(poisson_weight(0.0, 3), 0.0);
        assert!((poisson_weight(0.5, 0) - 0.606_530_659_712_633_4).abs() < 1e-15);
        let expect = (-0.07f64).exp() * 0.07 * 0.07 / 2.0;
        assert!((poisson_weight(0.07, 2) - expect).abs() < 1e-18);
        assert!((poisson_weight(0.07, 2) - 2.2844e-3).abs() < 1e-7);
    }

    #[test]
    fn poisson_mass_within_cutoff() {
        for mu in [0.0, 0.07, 0.5, 1.0, 3.0, 9.0] {
            let n_max = (mu + 20.0 * f64::sqrt(mu) + 20.0).ceil() as usize;
            let total: f64 = (0..=n_max).map(|n| poisson_weight(mu, n)).sum();
            assert!(total >= 1.0 - 1e-9, "mu={mu} total={total}");
        }
    }

    #[test]
    fn gamma_examples() {
        let one = IntensitySet::new(&[0.07], 1).unwrap();
        assert!((gamma_coeff(2, 3, &one).unwrap() - 3.43e-4).abs() < 1e-18);
        let unit = IntensitySet::new(&[1.0], 1).unwrap();
        assert_eq!(gamma_coeff(2, 2, &unit).unwrap(), 1.0);
        let two = IntensitySet::new(&[0.07, 0.35], 1).unwrap();
        let exact = gamma_exact(3, 2, &[0.07, 0.35]).to_f64().unwrap();
        assert!((gamma_coeff(3, 2, &two).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn gamma_matches_exact_rationals() {
        let mu = [0.07, 0.35, 0.5];
        for l in 2..=4 {
            for n in 2..=25 {
                let exact = gamma_exact(l, n, &mu).to_f64().unwrap();
                let got = gamma_from_intensities(l, n, &mu).unwrap();
                assert!(
                    (got - exact).abs() <= 1e-12 * exact.abs().max(1e-300) || (got - exact).abs() < 1e-15,
                    "l={l} n={n} got={got:e} exact={exact:e}"
                );
            }
        }
    }

    #[test]
    fn gamma_rejects_bad_input() {
        assert!(matches!(
            gamma_from_intensities(3, 4, &[0.2, 0.2]),
            Err(Error::DegenerateIntensities(1, 2))
        ));
        assert!(gamma_from_intensities(1, 4, &[0.2]).is_err());
        assert!(gamma_from_intensities(3, 4, &[0.2]).is_err());
        assert!(gamma_from_intensities(2, 1, &[0.2]).is_err());
        assert!(IntensitySet::new(&[0.2, 0.2], 1).is_err());
        assert!(IntensitySet::new(&[0.3, 0.2], 1).is_err());
        assert!(IntensitySet::new(&[0.2], 2).is_err());
    }

    #[test]
    fn gamma_nonnegative_on_grid() {
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        for a in 0..grid.len() {
            for b in a + 1..grid.len() {
                for c in b + 1..grid.len() {
                    let mu = [grid[a], grid[b], grid[c]];
                    for l in 2..=4 {
                        for n in 2..=20 {
                            let g = gamma_from_intensities(l, n, &mu).unwrap();
                            assert!(g >= -1e-15, "mu={mu:?} l={l} n={n} g={g:e}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn single_decoy_state_is_poisson_tail() {
        let one = IntensitySet::new(&[0.07], 1).unwrap();
        let rho = build_worst_case_states(&one, 40).unwrap();
        assert_eq!(rho.len(), 1);
        let tail: f64 = (2..=40).map(|n| poisson_weight(0.07, n)).sum();
        for n in 0..=40 {
            let expect = if n < 2 { 0.0 } else { poisson_weight(0.07, n) / tail };
            assert!((rho[0].probs[n] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn worst_case_states_normalized() {
        let rho = build_worst_case_states(&reference(), 40).unwrap();
        assert_eq!(rho.len(), 3);
        for r in &rho {
            assert!((r.total() - 1.0).abs() < 1e-9);
            assert_eq!(r.probs[0], 0.0);
            assert_eq!(r.probs[1], 0.0);
            assert!(r.probs.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn truncation_checks() {
        assert!(build_worst_case_states(&reference(), 5).is_err());
        let big = IntensitySet::new(&[3.0, 6.0], 1).unwrap();
        assert!(matches!(
            build_worst_case_states(&big, 12),
            Err(Error::TruncationTooSmall { .. })
        ));
    }

    /// Closed-form multiphoton weights via Newton interpolation of
    /// `mu_a^{n-2}` on the nodes `mu_1 .. mu_a`.
    fn newton_weights(nonzero: &[f64], a: usize, omega: &[f64]) -> Vec<f64> {
        let mu = |i: usize| nonzero[i - 1];
        let m = mu(a);
        (2..=a + 1)
            .map(|l| {
                let top = mu(l - 1);
                let c_l = (1..l - 1).fold(top * top, |acc, t| acc * (top - mu(t)));
                let node = (1..l - 1).fold(1.0, |acc, t| acc * (m - mu(t)));
                (-m).exp() * m * m * node / c_l * omega[l - 2]
            })
            .collect()
    }

    #[test]
    fn decomposition_matches_closed_form() {
        let set = reference();
        let model = tagged_state_probs(&set, 40).unwrap();
        let omega: Vec<f64> = (2..=4)
            .map(|l| (2..=40).map(|n| gamma_coeff(l, n, &set).unwrap() * inv_factorial(n)).sum())
            .collect();
        for a in 1..=3 {
            let expect = newton_weights(&set.all()[1..], a, &omega);
            for (t, w) in expect.iter().enumerate() {
                let got = model.p(set.class(Basis::Cross, a), t + 2);
                assert!((got - w).abs() < 1e-12, "a={a} l={} got={got:e} want={w:e}", t + 2);
            }
        }
    }

    #[test]
    fn single_intensity_split() {
        let one = IntensitySet::new(&[0.07], 1).unwrap();
        let model = tagged_state_probs(&one, 40).unwrap();
        let e = (-0.07f64).exp();
        assert!((model.p(1, 1) - e * 0.07).abs() < 1e-15);
        assert!((model.p(1, 1) - 0.065_268).abs() < 1e-6);
        let tail = 1.0 - e * 1.07;
        assert!((model.p(1, 2) - tail).abs() < 1e-12);
        // 1 - e^{-0.07}(1 + 0.07)
        assert!((model.p(1, 2) - 2.338_61e-3).abs() < 1e-8);
    }

    #[test]
    fn model_rows_and_locality() {
        let model = tagged_state_probs(&reference(), 40).unwrap();
        let k = 3;
        assert_eq!(model.probs[0][0], 1.0);
        assert!(model.probs[0][1..].iter().all(|&p| p == 0.0));
        for i in 0..model.num_classes() {
            let s: f64 = model.probs[i].iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(model.probs[i].iter().all(|&p| p >= 0.0));
        }
        for i in 1..=k {
            assert!(model.probs[i][k + 2..].iter().all(|&p| p == 0.0));
            assert!(model.probs[i + k][2..=k + 1].iter().all(|&p| p == 0.0));
        }
        assert!(model.reconstruction_residual() <= 1e-9);
    }

    #[test]
    fn mirror_symmetry() {
        let model = tagged_state_probs(&reference(), 40).unwrap();
        assert_eq!(model.mirrored(), model);
        assert_eq!(model.mirrored().mirrored(), model);
    }

    #[test]
    fn dist_json_roundtrip() {
        let d = PhotonNumberDist::poisson(0.35, 12);
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.contains("\"n_max\":12"));
        let back: PhotonNumberDist = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }

    proptest::proptest! {
        #[test]
        fn reconstruction_roundtrip(a in 0.01f64..0.3, gap1 in 0.02f64..0.3, gap2 in 0.02f64..0.3) {
            let set = IntensitySet::new(&[a, a + gap1, a + gap1 + gap2], 3).unwrap();
            let model = tagged_state_probs(&set, 40).unwrap();
            proptest::prop_assert!(model.reconstruction_residual() <= 1e-9);
        }
    }
}
