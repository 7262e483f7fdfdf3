//! Direct solution of the detection and error relations.
//!
//! With `q^0` fixed by the vacuum class, the detection relation of classes
//! `1 ..= 2k` plus `q^{k+1} + q^{2k+1} = sqrt 2 x` is a square system in
//! `q^1 ..= q^{2k+1}`, so every `q^j` is affine in `x`. The error relation
//! of the × classes then fixes `t_j = q^j r^j` for `j = 1 ..= k` affinely
//! in `y` once `x` is known.
//!
//! A point is feasible when `q^0` and `q^1` lie in `[0, 1]` and `y` in
//! `[0, 1]`. Every other component, `t_1` included, is clamped and its
//! excursion reported without excluding the point. At realistic block
//! sizes the multiphoton components and the single-photon error term are
//! dominated by sampling noise (an honest `t_1` of a few `1e-5` routinely
//! solves to a small negative number), and dropping their constraints only
//! enlarges the region `m` is maximized over.

use serde::{Deserialize, Serialize};

use crate::decimal;
use crate::error::Result;
use crate::linalg::solve;
use crate::photon_source::TaggedStateModel;

use super::{EstimationError, Observed, WorstCasePoint};

/// Slack allowed outside `[0, 1]` before a solution counts as infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Interval edges use half the slack so rounding cannot push an edge point
/// past `FEASIBILITY_TOL`.
const EDGE_TOL: f64 = 0.5 * FEASIBILITY_TOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectSolution {
    /// `q^0 ..= q^{2k+1}`, clamped to `[0, 1]`.
    #[serde(with = "decimal::vec")]
    pub q: Vec<f64>,
    /// `r^1 ..= r^{k+1}`, clamped to `[0, 1]`.
    #[serde(with = "decimal::vec")]
    pub r: Vec<f64>,
    /// Largest distance of `q^0`, `q^1` or `y` outside `[0, 1]`.
    #[serde(with = "decimal")]
    pub violation: f64,
    /// Same for the clamped components `q^2 ..` and `t_j = q^j r^j`.
    #[serde(with = "decimal")]
    pub model_violation: f64,
    pub feasible: bool,
}

impl DirectSolution {
    pub fn q1(&self) -> f64 {
        self.q[1]
    }

    pub fn r1(&self) -> f64 {
        self.r[0]
    }
}

/// The affine parametrization of the direct solution.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectSystem {
    k: usize,
    q0: f64,
    /// `q^j(x) = q_base[j] + x q_slope[j]`.
    q_base: Vec<f64>,
    q_slope: Vec<f64>,
    /// `t_j(x, y) = t_base[j] - y t_dir[j] q^{k+1}(x)` for `j = 1 ..= k`,
    /// stored at index `j - 1`.
    t_base: Vec<f64>,
    t_dir: Vec<f64>,
}

fn affine_interval(c0: f64, c1: f64, lo: f64, hi: f64, mut iv: (f64, f64)) -> Option<(f64, f64)> {
    // lo <= c0 + c1 z <= hi
    if c1.abs() < 1e-300 {
        return (lo <= c0 && c0 <= hi).then_some(iv);
    }
    let (a, b) = ((lo - c0) / c1, (hi - c0) / c1);
    let (a, b) = if c1 > 0.0 { (a, b) } else { (b, a) };
    iv.0 = iv.0.max(a);
    iv.1 = iv.1.min(b);
    (iv.0 <= iv.1).then_some(iv)
}

impl DirectSystem {
    pub fn new(observed: &Observed, model: &TaggedStateModel, p_d: f64) -> Result<DirectSystem> {
        let k = model.k();
        let n = 2 * k + 1; // unknowns q^1 ..= q^{2k+1}
        let q0 = (observed.p[0] - p_d).max(0.0) / model.p(0, 0);
        let mut a = vec![vec![0.0; n]; n];
        let mut rhs = vec![0.0; n];
        for i in 1..=2 * k {
            for j in 1..=n {
                a[i - 1][j - 1] = model.p(i, j);
            }
            rhs[i - 1] = observed.p[i] - p_d - model.p(i, 0) * q0;
        }
        a[n - 1][k] = 1.0; // q^{k+1}
        a[n - 1][2 * k] = 1.0; // q^{2k+1}
        let singular = || EstimationError::Singular("detection relation".into());
        let base = solve(a.clone(), rhs.clone()).ok_or_else(singular)?;
        rhs[n - 1] = std::f64::consts::SQRT_2;
        let at_one = solve(a, rhs).ok_or_else(singular)?;
        let mut q_base = vec![q0];
        q_base.extend_from_slice(&base);
        let mut q_slope = vec![0.0];
        q_slope.extend(at_one.iter().zip(&base).map(|(u, b)| u - b));

        let mut m = vec![vec![0.0; k]; k];
        let mut d = vec![0.0; k];
        let mut c = vec![0.0; k];
        for i in 1..=k {
            let s = observed.s[i].ok_or(EstimationError::UndefinedRatio(i))?;
            for j in 1..=k {
                m[i - 1][j - 1] = model.p(i, j);
            }
            d[i - 1] = s * observed.p[i] - 0.5 * (model.p(i, 0) * q0 + p_d);
            c[i - 1] = model.p(i, k + 1);
        }
        let singular = || EstimationError::Singular("error relation".into());
        let t_base = solve(m.clone(), d).ok_or_else(singular)?;
        let t_dir = solve(m, c).ok_or_else(singular)?;
        Ok(DirectSystem {
            k,
            q0,
            q_base,
            q_slope,
            t_base,
            t_dir,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Unclamped `q^j(x)` for all `j`.
    pub fn q_at(&self, x: f64) -> Vec<f64> {
        self.q_base.iter().zip(&self.q_slope).map(|(b, s)| b + x * s).collect()
    }

    /// Unclamped `t_j = q^j r^j` for `j = 1 ..= k`.
    pub fn t_at(&self, x: f64, y: f64) -> Vec<f64> {
        let top = self.q_base[self.k + 1] + x * self.q_slope[self.k + 1];
        self.t_base.iter().zip(&self.t_dir).map(|(b, d)| b - y * d * top).collect()
    }

    pub fn solve(&self, point: WorstCasePoint) -> DirectSolution {
        let WorstCasePoint { x, y } = point;
        let q_raw = self.q_at(x);
        let t_raw = self.t_at(x, y);
        let out_of = |v: f64, lo: f64, hi: f64| (lo - v).max(v - hi).max(0.0);
        let violation = out_of(q_raw[0], 0.0, 1.0)
            .max(out_of(q_raw[1], 0.0, 1.0))
            .max(out_of(y, 0.0, 1.0));
        let mut model_violation: f64 = 0.0;
        for &v in &q_raw[2..] {
            model_violation = model_violation.max(out_of(v, 0.0, 1.0));
        }
        for (j, &t) in t_raw.iter().enumerate() {
            model_violation = model_violation.max(out_of(t, 0.0, q_raw[j + 1].max(0.0)));
        }
        let q: Vec<f64> = q_raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let mut r: Vec<f64> = t_raw
            .iter()
            .enumerate()
            .map(|(j, &t)| if q[j + 1] > 0.0 { (t / q[j + 1]).clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        r.push(y.clamp(0.0, 1.0));
        DirectSolution {
            q,
            r,
            violation,
            model_violation,
            feasible: violation <= FEASIBILITY_TOL,
        }
    }

    /// Exact set of `x` in `[0, sqrt 2 (1 - p_D)]` with `q^1(x)` within
    /// tolerance of `[0, 1]`.
    pub fn feasible_x(&self, p_d: f64) -> Option<(f64, f64)> {
        affine_interval(
            self.q_base[1],
            self.q_slope[1],
            -EDGE_TOL,
            1.0 + EDGE_TOL,
            (0.0, WorstCasePoint::x_max(p_d)),
        )
    }

    /// Admissible `y` at this `x`: all of `[0, 1]`, since nothing that
    /// depends on `y` is constrained.
    pub fn feasible_y(&self, _x: f64) -> Option<(f64, f64)> {
        Some((0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{expected_rates, honest_attack_from_channel, AttackModel, ChannelModel};
    use crate::photon_source::{tagged_state_probs, IntensitySet};

    fn model() -> TaggedStateModel {
        tagged_state_probs(&IntensitySet::new(&[0.07, 0.35, 0.5], 3).unwrap(), 40).unwrap()
    }

    fn observe(m: &TaggedStateModel, a: &AttackModel, p_d: f64) -> Observed {
        let r = expected_rates(m, a, p_d).unwrap();
        Observed { p: r.p, s: r.s }
    }

    #[test]
    fn recovers_attack_without_top_multiphoton_detection() {
        let m = model();
        let p_d = 3e-4;
        let mut a = honest_attack_from_channel(
            &ChannelModel {
                transmittance: 0.05,
                dark_count_prob: p_d,
                misalignment: 0.03,
            },
            &m,
        );
        a.q[4] = 0.0;
        a.q[7] = 0.0;
        a.r[0] = 0.021;
        let sys = DirectSystem::new(&observe(&m, &a, p_d), &m, p_d).unwrap();
        let sol = sys.solve(WorstCasePoint::new(0.0, 0.0));
        assert!(sol.feasible, "{sol:?}");
        assert!((sol.q1() - a.q[1]).abs() < 1e-9);
        assert!((sol.r1() - 0.021).abs() < 1e-9);
        for j in 0..8 {
            assert!((sol.q[j] - a.q[j]).abs() < 1e-9, "q[{j}]");
        }
    }

    #[test]
    fn recovers_general_attack_at_its_own_point() {
        let m = model();
        let p_d = 1e-4;
        let a = AttackModel::new(
            vec![0.01, 0.02, 0.05, 0.07, 0.09, 0.04, 0.06, 0.1],
            vec![0.03, 0.1, 0.2, 0.25],
            vec![0.02, 0.1, 0.1, 0.1],
        )
        .unwrap();
        let sys = DirectSystem::new(&observe(&m, &a, p_d), &m, p_d).unwrap();
        let x = (a.q[4] + a.q[7]) / std::f64::consts::SQRT_2;
        let sol = sys.solve(WorstCasePoint::new(x, a.r[3]));
        assert!(sol.feasible);
        assert!((sol.q1() - 0.02).abs() < 1e-9);
        assert!((sol.r1() - 0.03).abs() < 1e-9);
        let (lo, hi) = sys.feasible_x(p_d).unwrap();
        assert!(lo <= x && x <= hi);
        let (ylo, yhi) = sys.feasible_y(x).unwrap();
        assert!(ylo <= 0.25 && 0.25 <= yhi);
    }

    #[test]
    fn dark_counts_only_force_zero_single_photon_detection() {
        let m = model();
        let p_d = 3e-4;
        let obs = Observed {
            p: vec![p_d; 7],
            s: vec![Some(0.5); 7],
        };
        let sys = DirectSystem::new(&obs, &m, p_d).unwrap();
        let sol = sys.solve(WorstCasePoint::new(0.0, 0.0));
        assert!(sol.q1().abs() < 1e-12);
        assert!(sol.feasible);
    }

    #[test]
    fn interval_edges_are_exactly_feasible() {
        let m = model();
        let p_d = 3e-4;
        let a = honest_attack_from_channel(
            &ChannelModel {
                transmittance: 0.01,
                dark_count_prob: p_d,
                misalignment: 0.05,
            },
            &m,
        );
        let sys = DirectSystem::new(&observe(&m, &a, p_d), &m, p_d).unwrap();
        let (lo, hi) = sys.feasible_x(p_d).unwrap();
        for x in [lo, 0.5 * (lo + hi), hi] {
            if let Some((ylo, yhi)) = sys.feasible_y(x) {
                for y in [ylo, yhi] {
                    let s = sys.solve(WorstCasePoint::new(x, y));
                    assert!(s.feasible, "x={x} y={y} violation={}", s.violation);
                }
            }
        }
        assert!(!sys.solve(WorstCasePoint::new(lo, 1.0 + 1e-6)).feasible);
        if hi < WorstCasePoint::x_max(p_d) {
            assert!(!sys.solve(WorstCasePoint::new(hi + 1e-6, 0.0)).feasible);
        }
    }
}
