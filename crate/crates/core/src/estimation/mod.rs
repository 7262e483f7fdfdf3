//! Finite-statistics security evaluation.
//!
//! The key is distilled from the signal class of the + basis. The adversary
//! parameters are reduced to the worst-case coordinates `x` (combined
//! detection probability of the two top multiphoton states) and `y` (their
//! phase-error probability). At each `(x, y)` the detection and error
//! relations are solved directly for `q^1` and `r^1`, the likelihood of the
//! observed counts is maximized for the fluctuation analysis, and the
//! privacy amplification size `m(x, y)` is evaluated. `m_max` is its maximum
//! over the feasible region. The × key reuses all of this on the
//! basis-mirrored counts and model.

mod direct;
mod ml;
mod moments;
mod optimize;

pub use direct::{DirectSolution, DirectSystem};
pub use ml::{log_likelihood, MlEstimate};
pub use moments::{pa_moments, Moments, StochasticInputs};
pub use optimize::{maximize_on_region, OptimizerOptions, RegionOptimum};

use serde::{Deserialize, Serialize};

use crate::channel::SessionCounts;
use crate::decimal;
use crate::error::Result;
use crate::photon_source::{Basis, TaggedStateModel};
use crate::stats::{clipped_entropy_unchecked, tail_multiplier};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimationError {
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("class {0} has no data for its ratio")]
    UndefinedRatio(usize),
    #[error("point (x = {x}, y = {y}) is infeasible: {reason}")]
    InfeasiblePoint { x: f64, y: f64, reason: String },
    #[error("no feasible worst-case point")]
    NoFeasiblePoint,
    #[error("likelihood search stopped after {iterations} sweeps without converging")]
    MlNotConverged {
        iterations: usize,
        best_q: Vec<f64>,
        best_r: Vec<f64>,
    },
}

/// Worst-case coordinates: `x = (q^{k+1} + q^{2k+1}) / sqrt 2` and
/// `y = r^{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCasePoint {
    #[serde(with = "decimal")]
    pub x: f64,
    #[serde(with = "decimal")]
    pub y: f64,
}

impl WorstCasePoint {
    pub fn new(x: f64, y: f64) -> Self {
        WorstCasePoint { x, y }
    }

    /// Upper end of the `x` domain, `sqrt 2 (1 - p_D)`.
    pub fn x_max(p_d: f64) -> f64 {
        std::f64::consts::SQRT_2 * (1.0 - p_d)
    }

    pub fn in_domain(&self, p_d: f64) -> bool {
        (0.0..=Self::x_max(p_d)).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityDeltas {
    pub delta1: u32,
    pub delta2: u32,
    pub delta3: u32,
}

fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// `delta1 = delta + ceil(log2 N_bar) + 1`, `delta2 = delta3 = delta1 + 1`.
pub fn security_deltas(delta: u32, n_bar: u64) -> SecurityDeltas {
    let base = delta + ceil_log2(n_bar.max(1));
    SecurityDeltas {
        delta1: base + 1,
        delta2: base + 2,
        delta3: base + 2,
    }
}

/// Which fluctuation terms enter `m(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fluctuation {
    /// Both the single-photon count term and the variance term.
    #[default]
    Full,
    /// Variance term forced to zero.
    NoVariance,
    /// Asymptotic evaluation: only `m_inf + delta3`.
    None,
}

/// Observed detection ratios `p_i = C_i / A_i` and error ratios
/// `s_i = H_i / (check bits)_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observed {
    pub p: Vec<f64>,
    pub s: Vec<Option<f64>>,
}

impl Observed {
    pub fn from_counts(counts: &SessionCounts) -> Result<Observed> {
        let n = counts.num_classes();
        let mut p = Vec::with_capacity(n);
        for i in 0..n {
            if counts.sent[i] == 0 {
                return Err(EstimationError::UndefinedRatio(i).into());
            }
            p.push(counts.detection_ratio(i));
        }
        let s = (0..n).map(|i| counts.error_ratio(i)).collect();
        Ok(Observed { p, s })
    }
}

/// Everything known about one point of the `(x, y)` region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEvaluation {
    pub point: WorstCasePoint,
    #[serde(with = "decimal")]
    pub q1: f64,
    #[serde(with = "decimal")]
    pub r1: f64,
    #[serde(with = "decimal")]
    pub q1_ml: f64,
    #[serde(with = "decimal")]
    pub r1_ml: f64,
    #[serde(with = "decimal")]
    pub m_inf: f64,
    #[serde(with = "decimal")]
    pub v: f64,
    /// Single-photon count fluctuation term.
    #[serde(with = "decimal")]
    pub delta1_term: f64,
    #[serde(with = "decimal")]
    pub m: f64,
}

/// Outcome of the `m_max` search for one basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub basis: Basis,
    pub point: WorstCasePoint,
    #[serde(with = "decimal")]
    pub q1: f64,
    #[serde(with = "decimal")]
    pub r1: f64,
    #[serde(with = "decimal::vec")]
    pub q_ml: Vec<f64>,
    #[serde(with = "decimal::vec")]
    pub r_ml: Vec<f64>,
    #[serde(with = "decimal")]
    pub m_inf: f64,
    #[serde(with = "decimal")]
    pub v: f64,
    #[serde(with = "decimal")]
    pub delta1_term: f64,
    #[serde(with = "decimal")]
    pub m_max: f64,
    pub deltas: SecurityDeltas,
    pub fluctuation: Fluctuation,
    /// Best value on the coarse grid; `m_max` is never below it.
    #[serde(with = "decimal")]
    pub grid_best: f64,
    /// Feasible `x` interval.
    #[serde(with = "decimal::vec")]
    pub x_range: Vec<f64>,
    pub evaluations: usize,
}

/// Evaluates `m(x, y)` for the + key of a fixed set of counts.
#[derive(Debug, Clone)]
pub struct KeyEstimator {
    counts: SessionCounts,
    model: TaggedStateModel,
    p_d: f64,
    deltas: SecurityDeltas,
    fluctuation: Fluctuation,
    system: DirectSystem,
    basis: Basis,
}

impl KeyEstimator {
    /// Estimator for the key of `basis`; the × key works on mirrored data.
    pub fn for_basis(
        basis: Basis,
        counts: &SessionCounts,
        model: &TaggedStateModel,
        p_d: f64,
        deltas: SecurityDeltas,
        fluctuation: Fluctuation,
    ) -> Result<KeyEstimator> {
        let (counts, model) = match basis {
            Basis::Plus => (counts.clone(), model.clone()),
            Basis::Cross => (counts.mirrored(), model.mirrored()),
        };
        counts.validate()?;
        let observed = Observed::from_counts(&counts)?;
        let system = DirectSystem::new(&observed, &model, p_d)?;
        Ok(KeyEstimator {
            counts,
            model,
            p_d,
            deltas,
            fluctuation,
            system,
            basis,
        })
    }

    pub fn new(
        counts: &SessionCounts,
        model: &TaggedStateModel,
        p_d: f64,
        deltas: SecurityDeltas,
    ) -> Result<KeyEstimator> {
        Self::for_basis(Basis::Plus, counts, model, p_d, deltas, Fluctuation::Full)
    }

    pub fn with_fluctuation(mut self, fluctuation: Fluctuation) -> Self {
        self.fluctuation = fluctuation;
        self
    }

    pub fn with_deltas(mut self, deltas: SecurityDeltas) -> Self {
        self.deltas = deltas;
        self
    }

    pub fn system(&self) -> &DirectSystem {
        &self.system
    }

    /// Counts in the estimator's frame (mirrored for the × key).
    pub fn counts(&self) -> &SessionCounts {
        &self.counts
    }

    pub fn model(&self) -> &TaggedStateModel {
        &self.model
    }

    fn key_class(&self) -> usize {
        self.counts.signal_class(Basis::Plus)
    }

    pub fn solve_direct(&self, point: WorstCasePoint) -> DirectSolution {
        self.system.solve(point)
    }

    /// Maximum-likelihood parameters at `point`; errors if the search does
    /// not converge within the sweep cap.
    pub fn ml_estimate(&self, point: WorstCasePoint) -> Result<MlEstimate> {
        let est = ml::ml_search(point, &self.system, &self.counts, &self.model, self.p_d);
        if est.converged {
            Ok(est)
        } else {
            Err(EstimationError::MlNotConverged {
                iterations: est.sweeps,
                best_q: est.q,
                best_r: est.r,
            }
            .into())
        }
    }

    pub fn stochastic_inputs(&self) -> StochasticInputs {
        let kc = self.key_class();
        StochasticInputs {
            sent: self.counts.sent[kc] as f64,
            sifted: self.counts.sifted[kc] as f64,
            raw_key_bits: self.counts.raw_key_bits as f64,
            single_photon_prob: self.model.p(kc, 1),
            dark_count_prob: self.p_d,
        }
    }

    /// Mean and variance of the leaked-information variable at `(q1, r1)`.
    pub fn pa_moments(&self, q1: f64, r1: f64) -> std::result::Result<Moments, EstimationError> {
        moments::moments(&self.stochastic_inputs(), q1, r1, self.fluctuation == Fluctuation::Full)
    }

    /// `m(x, y)`.
    pub fn pa_size(&self, point: WorstCasePoint) -> std::result::Result<PointEvaluation, EstimationError> {
        let sol = self.system.solve(point);
        if !sol.feasible {
            return Err(EstimationError::InfeasiblePoint {
                x: point.x,
                y: point.y,
                reason: format!("direct solution leaves the unit box by {:.3e}", sol.violation),
            });
        }
        let (q1, r1) = (sol.q[1], sol.r[0]);
        let mean = self.pa_moments(q1, r1)?;
        let (q1_ml, r1_ml, v) = if self.fluctuation == Fluctuation::Full {
            let ml = ml::ml_search(point, &self.system, &self.counts, &self.model, self.p_d);
            let var = self.pa_moments(ml.q[1], ml.r[0])?.variance;
            (ml.q[1], ml.r[0], var)
        } else {
            (q1, r1, 0.0)
        };
        let delta1_term = if self.fluctuation == Fluctuation::None {
            0.0
        } else {
            let kc = self.key_class();
            let a = self.counts.sent[kc] as f64;
            let p1 = self.model.p(kc, 1);
            let n = self.counts.raw_key_bits as f64;
            let c = self.counts.received[kc] as f64;
            n * q1 * (1.0 - clipped_entropy_unchecked(r1)) / c
                * (a * p1 * (1.0 - p1)).sqrt()
                * tail_multiplier(self.deltas.delta1)
        };
        let m = mean.mean + delta1_term + v.sqrt() * tail_multiplier(self.deltas.delta2) + self.deltas.delta3 as f64;
        Ok(PointEvaluation {
            point,
            q1,
            r1,
            q1_ml,
            r1_ml,
            m_inf: mean.mean,
            v,
            delta1_term,
            m,
        })
    }

    /// `m_max` over the feasible part of the `(x, y)` domain.
    pub fn maximize(&self, opts: &OptimizerOptions) -> Result<EstimationResult> {
        let (lo, hi) = self
            .system
            .feasible_x(self.p_d)
            .ok_or(EstimationError::NoFeasiblePoint)?;
        let opt = maximize_on_region(
            (lo, hi),
            |x| self.system.feasible_y(x),
            |x, y| self.pa_size(WorstCasePoint::new(x, y)).ok().map(|e| e.m),
            opts,
        )
        .ok_or(EstimationError::NoFeasiblePoint)?;
        let point = WorstCasePoint::new(opt.x, opt.y);
        let eval = self.pa_size(point)?;
        let ml = ml::ml_search(point, &self.system, &self.counts, &self.model, self.p_d);
        Ok(EstimationResult {
            basis: self.basis,
            point,
            q1: eval.q1,
            r1: eval.r1,
            q_ml: ml.q,
            r_ml: ml.r,
            m_inf: eval.m_inf,
            v: eval.v,
            delta1_term: eval.delta1_term,
            m_max: opt.value,
            deltas: self.deltas,
            fluctuation: self.fluctuation,
            grid_best: opt.grid_best,
            x_range: vec![lo, hi],
            evaluations: opt.evaluations,
        })
    }
}

/// Direct solution of the detection and error relations at `point`.
pub fn solve_direct(
    point: WorstCasePoint,
    observed: &Observed,
    model: &TaggedStateModel,
    p_d: f64,
) -> Result<DirectSolution> {
    Ok(DirectSystem::new(observed, model, p_d)?.solve(point))
}

/// Maximum-likelihood parameters for the + key frame at `point`.
pub fn ml_estimate(
    point: WorstCasePoint,
    counts: &SessionCounts,
    model: &TaggedStateModel,
    p_d: f64,
) -> Result<MlEstimate> {
    KeyEstimator::new(counts, model, p_d, security_deltas(1, 1))?.ml_estimate(point)
}

/// `m(x, y)` for the + key.
pub fn pa_size(
    point: WorstCasePoint,
    counts: &SessionCounts,
    model: &TaggedStateModel,
    p_d: f64,
    deltas: SecurityDeltas,
) -> Result<PointEvaluation> {
    Ok(KeyEstimator::new(counts, model, p_d, deltas)?.pa_size(point)?)
}

/// `m_max` for the + key with default optimizer settings.
pub fn maximize_pa_size(
    counts: &SessionCounts,
    model: &TaggedStateModel,
    p_d: f64,
    deltas: SecurityDeltas,
) -> Result<EstimationResult> {
    KeyEstimator::new(counts, model, p_d, deltas)?.maximize(&OptimizerOptions::default())
}
