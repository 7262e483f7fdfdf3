//! Flooding sum-product decoding in the log-likelihood domain.

use crate::bits::BitString;

use super::code::LdpcCode;

/// Message magnitudes are clamped here to keep `atanh` finite.
pub const LLR_CLAMP: f64 = 30.0;
pub const DEFAULT_MAX_ITERATIONS: usize = 100;

/// Decoder output: the hard decision after the last iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub word: BitString,
    pub converged: bool,
    pub iterations: usize,
}

/// Edge layout shared by every decode on the same code.
struct Graph<'a> {
    code: &'a LdpcCode,
    check_start: Vec<usize>,
    /// Variable index of each edge, edges grouped by check.
    edge_var: Vec<u32>,
    /// Edge ids of each variable.
    var_edges: Vec<Vec<u32>>,
}

impl<'a> Graph<'a> {
    fn new(code: &'a LdpcCode) -> Self {
        let mut check_start = vec![0];
        let mut edge_var = Vec::new();
        let mut var_edges = vec![Vec::new(); code.n()];
        for row in code.checks() {
            for &v in row {
                var_edges[v as usize].push(edge_var.len() as u32);
                edge_var.push(v);
            }
            check_start.push(edge_var.len());
        }
        Graph {
            code,
            check_start,
            edge_var,
            var_edges,
        }
    }

    fn parity_ok(&self, hard: &[bool]) -> bool {
        self.check_start
            .windows(2)
            .all(|w| !self.edge_var[w[0]..w[1]].iter().fold(false, |acc, &v| acc ^ hard[v as usize]))
    }
}

/// Sum-product decoding of `llr` (positive favours bit 0). Stops as soon as
/// the hard decision satisfies every check, including before the first
/// iteration.
pub fn decode(code: &LdpcCode, llr: &[f64], max_iterations: usize) -> DecodeResult {
    assert_eq!(llr.len(), code.n(), "one LLR per code bit");
    let g = Graph::new(code);
    let mut hard: Vec<bool> = llr.iter().map(|&l| l < 0.0).collect();
    let finish = |hard: &[bool], converged, iterations| DecodeResult {
        word: BitString::from_bools(hard),
        converged,
        iterations,
    };
    if g.parity_ok(&hard) {
        return finish(&hard, true, 0);
    }
    let edges = g.edge_var.len();
    let mut v2c: Vec<f64> = g.edge_var.iter().map(|&v| llr[v as usize]).collect();
    let mut c2v = vec![0.0; edges];
    let mut prefix = Vec::new();
    for it in 1..=max_iterations {
        for w in g.check_start.windows(2) {
            let (s, e) = (w[0], w[1]);
            // exclusive products via prefix/suffix sweeps
            prefix.clear();
            let mut acc = 1.0;
            for &m in &v2c[s..e] {
                prefix.push(acc);
                acc *= (0.5 * m).tanh();
            }
            let mut suffix = 1.0;
            for idx in (s..e).rev() {
                let excl = prefix[idx - s] * suffix;
                c2v[idx] = (2.0 * excl.atanh()).clamp(-LLR_CLAMP, LLR_CLAMP);
                suffix *= (0.5 * v2c[idx]).tanh();
            }
        }
        for (v, es) in g.var_edges.iter().enumerate() {
            let total = llr[v] + es.iter().map(|&e| c2v[e as usize]).sum::<f64>();
            hard[v] = total < 0.0;
            for &e in es {
                v2c[e as usize] = (total - c2v[e as usize]).clamp(-LLR_CLAMP, LLR_CLAMP);
            }
        }
        if g.parity_ok(&hard) {
            return finish(&hard, true, it);
        }
    }
    debug_assert!(g.code.n() == hard.len());
    finish(&hard, false, max_iterations)
}

/// Channel LLRs for received bits `y` through a binary symmetric channel.
pub fn bsc_llr(y: &BitString, qber: f64) -> Vec<f64> {
    let mag = ((1.0 - qber) / qber).ln().min(LLR_CLAMP);
    y.iter().map(|b| if b { -mag } else { mag }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconciliation::code::{build_code, DegreeProfile};
    use crate::rng::StageRng;
    use rand::Rng;

    #[test]
    fn noiseless_converges_immediately() {
        let code = build_code(1000, 0.5, &DegreeProfile::default(), 1).unwrap();
        let mut rng = StageRng::from_seed_u64(3);
        let c = code.encode(&BitString::random(code.l(), &mut rng)).unwrap();
        let res = decode(&code, &bsc_llr(&c, 0.05), 100);
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.word, c);
    }

    #[test]
    fn corrects_a_few_errors() {
        let code = build_code(2000, 0.5, &DegreeProfile::default(), 2).unwrap();
        let mut rng = StageRng::from_seed_u64(4);
        let c = code.encode(&BitString::random(code.l(), &mut rng)).unwrap();
        let mut y = c.clone();
        for _ in 0..40 {
            y.flip(rng.random_range(0..code.n()));
        }
        let res = decode(&code, &bsc_llr(&y, 0.02), 100);
        assert!(res.converged);
        assert_eq!(res.word, c);
    }

    #[test]
    fn success_implies_parity() {
        let code = build_code(500, 0.7, &DegreeProfile::default(), 5).unwrap();
        let mut rng = StageRng::from_seed_u64(6);
        for _ in 0..30 {
            let y = BitString::random(code.n(), &mut rng);
            let res = decode(&code, &bsc_llr(&y, 0.2), 20);
            assert_eq!(res.converged, code.satisfies_checks(&res.word));
        }
    }
}
