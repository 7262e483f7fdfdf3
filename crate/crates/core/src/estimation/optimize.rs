//! Maximization of a function over a region `{(x, y): x in [a, b],
//! y in Y(x)}` where each `Y(x)` is an interval.
//!
//! The region is mapped onto the unit square, `x = a + u (b - a)` and
//! `y = Y_lo(x) + v (Y_hi(x) - Y_lo(x))`. A regular grid on the square is
//! evaluated in parallel and reduced in index order, Nelder–Mead refines
//! from the best grid point, and a final pass pushes the point towards the
//! square's edges along each axis. Points where the objective is undefined
//! count as minus infinity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    /// Grid points per axis.
    pub grid: usize,
    /// Nelder–Mead stops once the simplex diameter (unit-square
    /// coordinates) falls below this.
    pub simplex_tol: f64,
    pub max_simplex_iter: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            grid: 64,
            simplex_tol: 1e-6,
            max_simplex_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionOptimum {
    pub x: f64,
    pub y: f64,
    pub value: f64,
    pub grid_best: f64,
    pub evaluations: usize,
}

struct Mapped<'a, Y, F> {
    x_range: (f64, f64),
    y_range: &'a Y,
    f: &'a F,
}

impl<Y, F> Mapped<'_, Y, F>
where
    Y: Fn(f64) -> Option<(f64, f64)>,
    F: Fn(f64, f64) -> Option<f64>,
{
    fn to_xy(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return None;
        }
        let (a, b) = self.x_range;
        let x = if u == 1.0 { b } else { a + u * (b - a) };
        let (lo, hi) = (self.y_range)(x)?;
        let y = if v == 1.0 { hi } else { lo + v * (hi - lo) };
        Some((x, y))
    }

    fn eval(&self, u: f64, v: f64) -> f64 {
        self.to_xy(u, v)
            .and_then(|(x, y)| (self.f)(x, y))
            .filter(|m| m.is_finite())
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// Tracks the best point seen so far; earlier points win ties.
struct Best {
    u: f64,
    v: f64,
    value: f64,
    evals: usize,
}

impl Best {
    fn offer(&mut self, u: f64, v: f64, value: f64) {
        self.evals += 1;
        if value > self.value {
            self.u = u;
            self.v = v;
            self.value = value;
        }
    }
}

pub fn maximize_on_region<Y, F>(
    x_range: (f64, f64),
    y_range: Y,
    f: F,
    opts: &OptimizerOptions,
) -> Option<RegionOptimum>
where
    Y: Fn(f64) -> Option<(f64, f64)> + Sync,
    F: Fn(f64, f64) -> Option<f64> + Sync,
{
    let map = Mapped {
        x_range,
        y_range: &y_range,
        f: &f,
    };
    let n = opts.grid.max(2);
    let step = 1.0 / (n - 1) as f64;
    let grid: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|idx| map.eval((idx / n) as f64 * step, (idx % n) as f64 * step))
        .collect();
    let mut best = Best {
        u: 0.0,
        v: 0.0,
        value: f64::NEG_INFINITY,
        evals: 0,
    };
    for (idx, &val) in grid.iter().enumerate() {
        best.offer((idx / n) as f64 * step, (idx % n) as f64 * step, val);
    }
    if best.value == f64::NEG_INFINITY {
        return None;
    }
    let grid_best = best.value;

    nelder_mead(&map, &mut best, step, opts);
    for corner in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
        let val = map.eval(corner.0, corner.1);
        best.offer(corner.0, corner.1, val);
    }
    polish(&map, &mut best);

    let (x, y) = map.to_xy(best.u, best.v)?;
    Some(RegionOptimum {
        x,
        y,
        value: best.value,
        grid_best,
        evaluations: best.evals,
    })
}

fn nelder_mead<Y, F>(map: &Mapped<'_, Y, F>, best: &mut Best, h: f64, opts: &OptimizerOptions)
where
    Y: Fn(f64) -> Option<(f64, f64)>,
    F: Fn(f64, f64) -> Option<f64>,
{
    let (u0, v0) = (best.u, best.v);
    let du = if u0 + h <= 1.0 { h } else { -h };
    let dv = if v0 + h <= 1.0 { h } else { -h };
    let mut pts = [[u0, v0], [u0 + du, v0], [u0, v0 + dv]];
    let mut vals = [best.value, 0.0, 0.0];
    for i in 1..3 {
        vals[i] = map.eval(pts[i][0], pts[i][1]);
        best.offer(pts[i][0], pts[i][1], vals[i]);
    }
    let eval = |p: [f64; 2], best: &mut Best| {
        let val = map.eval(p[0], p[1]);
        best.offer(p[0], p[1], val);
        val
    };
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    for _ in 0..opts.max_simplex_iter {
        // Sort descending by value (maximization); stable so ties keep order.
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        pts = [pts[order[0]], pts[order[1]], pts[order[2]]];
        vals = [vals[order[0]], vals[order[1]], vals[order[2]]];
        let diameter = dist(pts[0], pts[1]).max(dist(pts[0], pts[2])).max(dist(pts[1], pts[2]));
        if diameter < opts.simplex_tol {
            break;
        }
        let c = [(pts[0][0] + pts[1][0]) / 2.0, (pts[0][1] + pts[1][1]) / 2.0];
        let along = |t: f64| [c[0] + t * (pts[2][0] - c[0]), c[1] + t * (pts[2][1] - c[1])];
        let r = along(-1.0);
        let fr = eval(r, best);
        if fr > vals[0] {
            let e = along(-2.0);
            let fe = eval(e, best);
            if fe > fr {
                pts[2] = e;
                vals[2] = fe;
            } else {
                pts[2] = r;
                vals[2] = fr;
            }
            continue;
        }
        if fr > vals[1] {
            pts[2] = r;
            vals[2] = fr;
            continue;
        }
        if fr > vals[2] {
            let p = along(-0.5);
            let fc = eval(p, best);
            if fc >= fr {
                pts[2] = p;
                vals[2] = fc;
                continue;
            }
        } else {
            let p = along(0.5);
            let fc = eval(p, best);
            if fc > vals[2] {
                pts[2] = p;
                vals[2] = fc;
                continue;
            }
        }
        // shrink towards the best vertex
        for i in 1..3 {
            pts[i] = [
                pts[0][0] + 0.5 * (pts[i][0] - pts[0][0]),
                pts[0][1] + 0.5 * (pts[i][1] - pts[0][1]),
            ];
            vals[i] = eval(pts[i], best);
        }
    }
}

/// Moves the best point along each axis towards the farthest position that
/// is still feasible, keeping any improvement.
fn polish<Y, F>(map: &Mapped<'_, Y, F>, best: &mut Best)
where
    Y: Fn(f64) -> Option<(f64, f64)>,
    F: Fn(f64, f64) -> Option<f64>,
{
    for _ in 0..8 {
        let start = best.value;
        for axis in 0..2 {
            for edge in [0.0, 1.0] {
                let (u, v) = (best.u, best.v);
                let at = |t: f64| {
                    if axis == 0 {
                        (u + t * (edge - u), v)
                    } else {
                        (u, v + t * (edge - v))
                    }
                };
                // bisection for the farthest feasible fraction of the way
                let (eu, ev) = at(1.0);
                let mut val = map.eval(eu, ev);
                best.offer(eu, ev, val);
                if val == f64::NEG_INFINITY {
                    let (mut lo, mut hi) = (0.0, 1.0);
                    for _ in 0..40 {
                        let mid = 0.5 * (lo + hi);
                        let (mu, mv) = at(mid);
                        val = map.eval(mu, mv);
                        best.offer(mu, mv, val);
                        if val == f64::NEG_INFINITY {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                }
            }
        }
        if !(best.value > start) {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_quadratic_interior() {
        let f = |x: f64, y: f64| Some(-(x - 0.3137).powi(2) - 2.0 * (y - 0.7712).powi(2) + 5.0);
        let opt = maximize_on_region((0.0, 1.0), |_| Some((0.0, 1.0)), f, &OptimizerOptions::default()).unwrap();
        assert!((opt.x - 0.3137).abs() < 1e-4 && (opt.y - 0.7712).abs() < 1e-4, "{opt:?}");
        assert!(opt.value >= opt.grid_best);
    }

    #[test]
    fn planted_quadratic_on_curved_region() {
        // y in [x^2, 1]; the unconstrained peak lies outside, at (0.9, 0.1),
        // so the maximizer is on the curve y = x^2.
        let f = |x: f64, y: f64| Some(-(x - 0.9).powi(2) - (y - 0.1).powi(2));
        let opt = maximize_on_region((0.0, 1.0), |x| Some((x * x, 1.0)), f, &OptimizerOptions::default()).unwrap();
        // minimize (x-0.9)^2 + (x^2-0.1)^2: 2(x-0.9) + 4x(x^2-0.1) = 0
        let mut x: f64 = 0.6;
        for _ in 0..50 {
            let g = 2.0 * (x - 0.9) + 4.0 * x * (x * x - 0.1);
            let h = 2.0 + 12.0 * x * x - 0.4;
            x -= g / h;
        }
        assert!((opt.x - x).abs() < 1e-4, "{} vs {x}", opt.x);
        assert!((opt.y - x * x).abs() < 1e-4);
    }

    #[test]
    fn constant_function() {
        let opt =
            maximize_on_region((0.2, 0.4), |_| Some((0.0, 1.0)), |_, _| Some(7.0), &OptimizerOptions::default())
                .unwrap();
        assert_eq!(opt.value, 7.0);
        assert!((0.2..=0.4).contains(&opt.x));
    }

    #[test]
    fn infeasible_everywhere() {
        assert!(maximize_on_region((0.0, 1.0), |_| None, |_, _| Some(1.0), &OptimizerOptions::default()).is_none());
        assert!(
            maximize_on_region((0.0, 1.0), |_| Some((0.0, 1.0)), |_, _| None, &OptimizerOptions::default())
                .is_none()
        );
    }

    #[test]
    fn dominates_random_probes() {
        let f = |x: f64, y: f64| {
            if x + y > 1.5 {
                None
            } else {
                Some((3.0 * x).sin() * (2.0 * y).cos() + 0.1 * x)
            }
        };
        let opt = maximize_on_region((0.0, 1.0), |_| Some((0.0, 1.0)), f, &OptimizerOptions::default()).unwrap();
        for i in 0..1000 {
            let x = (i as f64 * 0.618_034) % 1.0;
            let y = (i as f64 * 0.414_213_5) % 1.0;
            if let Some(v) = f(x, y) {
                assert!(opt.value >= v, "probe ({x}, {y})");
            }
        }
    }
}
