//! Maximum-likelihood estimate of the adversary parameters at fixed
//! `(x, y)`.
//!
//! The detection counts `C_i` are binomial in `A_i` with the probability of
//! the detection relation, and the disclosed errors `H_i` of the × classes
//! are binomial in their check bits with the probability of the error
//! relation. The likelihood factorizes: the detection part depends on `q`
//! only, and for fixed `q` the error part depends on `r` only. Both parts
//! are concave along every coordinate, so each is maximized by cyclic
//! coordinate Newton steps with projection onto the box and backtracking.

use serde::{Deserialize, Serialize};

use crate::channel::SessionCounts;
use crate::decimal;
use crate::photon_source::TaggedStateModel;

use super::{DirectSystem, WorstCasePoint};

const MAX_SWEEPS: usize = 10_000;
const CONVERGENCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlEstimate {
    #[serde(with = "decimal::vec")]
    pub q: Vec<f64>,
    /// `r^1 ..= r^{k+1}`; the last entry is `y`.
    #[serde(with = "decimal::vec")]
    pub r: Vec<f64>,
    #[serde(with = "decimal")]
    pub log_likelihood: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// `a ln b` with `0 ln 0 = 0`.
fn xlny(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else if b <= 0.0 {
        f64::NEG_INFINITY
    } else {
        a * b.ln()
    }
}

fn binomial_ll(successes: f64, trials: f64, p: f64) -> f64 {
    xlny(successes, p) + xlny(trials - successes, 1.0 - p)
}

struct Problem<'a> {
    counts: &'a SessionCounts,
    model: &'a TaggedStateModel,
    p_d: f64,
    k: usize,
}

impl Problem<'_> {
    fn detection_prob(&self, q: &[f64], i: usize) -> f64 {
        (0..q.len()).map(|j| self.model.p(i, j) * q[j]).sum::<f64>() + self.p_d
    }

    fn detection_ll(&self, q: &[f64]) -> f64 {
        (0..self.counts.num_classes())
            .map(|i| {
                binomial_ll(
                    self.counts.received[i] as f64,
                    self.counts.sent[i] as f64,
                    self.detection_prob(q, i),
                )
            })
            .sum()
    }

    fn error_prob(&self, q: &[f64], r: &[f64], i: usize) -> f64 {
        let p = self.detection_prob(q, i);
        if p <= 0.0 {
            return 0.5;
        }
        let num: f64 = (1..=self.k + 1).map(|j| self.model.p(i, j) * q[j] * r[j - 1]).sum::<f64>()
            + 0.5 * (self.model.p(i, 0) * q[0] + self.p_d);
        (num / p).clamp(0.0, 1.0)
    }

    fn error_ll(&self, q: &[f64], r: &[f64]) -> f64 {
        (1..=self.k)
            .map(|i| {
                binomial_ll(
                    self.counts.errors[i] as f64,
                    self.counts.check_bits(i) as f64,
                    self.error_prob(q, r, i),
                )
            })
            .sum()
    }
}

/// Log-likelihood of `counts` under parameters `q` (all `2k + 2` entries)
/// and `r` (`r^1 ..= r^{k+1}`).
pub fn log_likelihood(counts: &SessionCounts, model: &TaggedStateModel, p_d: f64, q: &[f64], r: &[f64]) -> f64 {
    let pb = Problem {
        counts,
        model,
        p_d,
        k: model.k(),
    };
    pb.detection_ll(q) + pb.error_ll(q, r)
}

/// One coordinate direction of the search: `param += step * dir`.
struct Coord {
    dir: Vec<(usize, f64)>,
    lo: f64,
    hi: f64,
}

/// Maximizes a concave-along-coordinates function over a box by cyclic
/// Newton steps. `value` gives the objective; `slope_curv` its first and
/// second derivative along a direction at a point.
fn coordinate_ascent<V, D>(
    start: Vec<f64>,
    coords: &[Coord],
    value: V,
    slope_curv: D,
) -> (Vec<f64>, f64, usize, bool)
where
    V: Fn(&[f64]) -> f64,
    D: Fn(&[f64], &[(usize, f64)]) -> (f64, f64),
{
    let mut x = start;
    let mut fx = value(&x);
    for sweep in 1..=MAX_SWEEPS {
        let before = fx;
        for c in coords {
            // current coordinate value along the direction's first entry
            let (lead, sign) = c.dir[0];
            let cur = x[lead] * sign;
            let (g, h) = slope_curv(&x, &c.dir);
            if !g.is_finite() || g == 0.0 {
                continue;
            }
            let mut step = if h < 0.0 { -g / h } else { g.signum() * (c.hi - c.lo) };
            for _ in 0..60 {
                let target = (cur + step).clamp(c.lo, c.hi);
                let delta = target - cur;
                if delta == 0.0 {
                    break;
                }
                let mut trial = x.clone();
                for &(j, s) in &c.dir {
                    trial[j] += s * delta;
                }
                let ft = value(&trial);
                if ft >= fx {
                    x = trial;
                    fx = ft;
                    break;
                }
                step *= 0.5;
            }
        }
        if !(fx - before > CONVERGENCE) {
            return (x, fx, sweep, true);
        }
    }
    (x, fx, MAX_SWEEPS, false)
}

pub(crate) fn ml_search(
    point: WorstCasePoint,
    system: &DirectSystem,
    counts: &SessionCounts,
    model: &TaggedStateModel,
    p_d: f64,
) -> MlEstimate {
    let k = model.k();
    let pb = Problem { counts, model, p_d, k };
    let direct = system.solve(point);
    let sum = std::f64::consts::SQRT_2 * point.x;

    // Stage 1: detection likelihood over q with q^{k+1} + q^{2k+1} fixed.
    let mut q0 = direct.q.clone();
    let u_lo = (sum - 1.0).max(0.0);
    let u_hi = sum.min(1.0);
    q0[k + 1] = q0[k + 1].clamp(u_lo, u_hi.max(u_lo));
    q0[2 * k + 1] = (sum - q0[k + 1]).clamp(0.0, 1.0);
    let mut coords: Vec<Coord> = (0..=2 * k)
        .filter(|&j| j != k + 1)
        .map(|j| Coord {
            dir: vec![(j, 1.0)],
            lo: 0.0,
            hi: 1.0,
        })
        .collect();
    coords.push(Coord {
        dir: vec![(k + 1, 1.0), (2 * k + 1, -1.0)],
        lo: u_lo,
        hi: u_hi.max(u_lo),
    });
    let det_slope = |q: &[f64], dir: &[(usize, f64)]| {
        let (mut g, mut h) = (0.0, 0.0);
        for i in 0..counts.num_classes() {
            let dp: f64 = dir.iter().map(|&(j, s)| s * model.p(i, j)).sum();
            if dp == 0.0 {
                continue;
            }
            let p = pb.detection_prob(q, i);
            let c = counts.received[i] as f64;
            let f = counts.sent[i] as f64 - c;
            g += dp * (c / p - f / (1.0 - p));
            h -= dp * dp * (c / (p * p) + f / ((1.0 - p) * (1.0 - p)));
        }
        (g, h)
    };
    let (q, ll_det, sweeps_q, conv_q) = coordinate_ascent(q0, &coords, |q| pb.detection_ll(q), det_slope);

    // Stage 2: error likelihood over r^1 ..= r^k with r^{k+1} = y.
    let r0 = direct.r.clone();
    let coords: Vec<Coord> = (0..k)
        .map(|j| Coord {
            dir: vec![(j, 1.0)],
            lo: 0.0,
            hi: 1.0,
        })
        .collect();
    let err_slope = |r: &[f64], dir: &[(usize, f64)]| {
        let (mut g, mut h) = (0.0, 0.0);
        let (j0, _) = dir[0];
        for i in 1..=k {
            let p = pb.detection_prob(&q, i);
            let ds = model.p(i, j0 + 1) * q[j0 + 1] / p;
            if ds == 0.0 || p <= 0.0 {
                continue;
            }
            let s = pb.error_prob(&q, r, i).clamp(1e-300, 1.0 - 1e-16);
            let e = counts.errors[i] as f64;
            let f = counts.check_bits(i) as f64 - e;
            g += ds * (e / s - f / (1.0 - s));
            h -= ds * ds * (e / (s * s) + f / ((1.0 - s) * (1.0 - s)));
        }
        (g, h)
    };
    let (r, ll_err, sweeps_r, conv_r) = coordinate_ascent(r0, &coords, |r| pb.error_ll(&q, r), err_slope);

    MlEstimate {
        q,
        r,
        log_likelihood: ll_det + ll_err,
        sweeps: sweeps_q.max(sweeps_r),
        converged: conv_q && conv_r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::Observed;
    use crate::photon_source::{tagged_state_probs, IntensitySet};

    fn model() -> TaggedStateModel {
        tagged_state_probs(&IntensitySet::new(&[0.07, 0.35, 0.5], 3).unwrap(), 40).unwrap()
    }

    fn counts_with(received: Vec<u64>, errors: Vec<u64>) -> SessionCounts {
        SessionCounts {
            k: 3,
            signal_index: 3,
            raw_key_bits: 100,
            time_slot_s: 1.0,
            sent: vec![10_000_000; 7],
            sifted: received.iter().map(|c| c / 2).collect(),
            received,
            errors,
        }
    }

    #[test]
    fn zero_detections_give_zero_q() {
        let m = model();
        let c = counts_with(vec![0; 7], vec![0; 7]);
        // p_D = 0 keeps the all-zero detection pattern possible.
        let obs = Observed {
            p: vec![0.0; 7],
            s: vec![Some(0.0); 7],
        };
        let sys = DirectSystem::new(&obs, &m, 0.0).unwrap();
        let est = ml_search(WorstCasePoint::new(0.0, 0.0), &sys, &c, &m, 0.0);
        assert!(est.converged);
        assert!(est.q.iter().all(|&q| q == 0.0), "{:?}", est.q);
    }

    #[test]
    fn never_worse_than_direct_start() {
        let m = model();
        let p_d = 3e-4;
        let c = counts_with(
            vec![3000, 4500, 21000, 36000, 4400, 20500, 35800],
            vec![1500, 200, 700, 1000, 210, 650, 1020],
        );
        let obs = Observed::from_counts(&c).unwrap();
        let sys = DirectSystem::new(&obs, &m, p_d).unwrap();
        let (lo, hi) = sys.feasible_x(p_d).unwrap();
        for t in [0.0, 0.3, 0.7, 1.0] {
            let x = lo + t * (hi - lo);
            for y in [0.0, 0.2, 0.6] {
                let p = WorstCasePoint::new(x, y);
                let d = sys.solve(p);
                let est = ml_search(p, &sys, &c, &m, p_d);
                let start = log_likelihood(&c, &m, p_d, &d.q, &d.r);
                assert!(est.log_likelihood >= start - 1e-9, "x={x} y={y}");
                assert!(est.converged);
                let top = est.q[4] + est.q[7];
                assert!((top - std::f64::consts::SQRT_2 * x).abs() < 1e-9 || d.violation > 0.0);
                assert_eq!(est.r[3], y);
            }
        }
    }
}
