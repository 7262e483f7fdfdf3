//! LDPC codes: progressive-edge-growth construction, systematic encoding via
//! a reduced row echelon form of the parity-check matrix, and persistence.

use std::sync::{Arc, Mutex, OnceLock};
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::decimal;
use crate::error::{Error, Result};

const MAX_ATTEMPTS: u64 = 10;
const RATE_TOLERANCE: f64 = 0.01;

/// Column (variable-node) degree distribution by fraction of columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeProfile {
    pub degrees: Vec<usize>,
    #[serde(with = "decimal::vec")]
    pub fractions: Vec<f64>,
}

impl Default for DegreeProfile {
    fn default() -> Self {
        DegreeProfile {
            degrees: vec![2, 3, 6],
            fractions: vec![0.30, 0.55, 0.15],
        }
    }
}

impl DegreeProfile {
    pub fn validate(&self) -> Result<()> {
        if self.degrees.is_empty() || self.degrees.len() != self.fractions.len() {
            return Err(Error::InvalidParameter("degree profile needs one fraction per degree".into()));
        }
        if self.degrees.iter().any(|&d| d < 2) {
            return Err(Error::InvalidParameter("column degrees must be at least 2".into()));
        }
        let total: f64 = self.fractions.iter().sum();
        if self.fractions.iter().any(|f| *f < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("degree fractions sum to {total}")));
        }
        Ok(())
    }

    /// Degree of every column for a code with `n` columns and `m` checks,
    /// in increasing order. Degree-2 columns are limited to `m - 1` (more
    /// would close a cycle made only of degree-2 columns) and no degree
    /// exceeds `m`.
    fn column_degrees(&self, n: usize, m: usize) -> Vec<usize> {
        let mut pairs: Vec<(usize, f64)> = self.degrees.iter().copied().zip(self.fractions.iter().copied()).collect();
        pairs.sort_by_key(|p| p.0);
        let mut counts: Vec<usize> = pairs.iter().map(|(_, f)| (f * n as f64).round() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let last = counts.len() - 1;
        if assigned > n {
            let mut over = assigned - n;
            for c in counts.iter_mut().rev() {
                let cut = over.min(*c);
                *c -= cut;
                over -= cut;
            }
        } else {
            counts[last] += n - assigned;
        }
        if pairs[0].0 == 2 && counts[0] > m.saturating_sub(1) {
            let excess = counts[0] - m.saturating_sub(1);
            counts[0] -= excess;
            if counts.len() > 1 {
                counts[1] += excess;
            } else {
                pairs.push((3, 0.0));
                counts.push(excess);
            }
        }
        let mut out = Vec::with_capacity(n);
        for ((d, _), c) in pairs.iter().zip(&counts) {
            out.extend(std::iter::repeat_n((*d).min(m), *c));
        }
        out.sort_unstable();
        out
    }
}

/// A binary LDPC code with a systematic encoder.
///
/// Checks are stored as adjacency lists. Encoding places the message on
/// the information positions (columns without a pivot in the reduced form)
/// and computes each pivot position from its reduced row.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    n: usize,
    seed: u64,
    target_rate: f64,
    profile: DegreeProfile,
    checks: Vec<Vec<u32>>,
    vars: Vec<Vec<u32>>,
    reduced: Vec<BitString>,
    pivots: Vec<usize>,
    info_positions: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CodeHeader {
    n: usize,
    l: usize,
    #[serde(with = "decimal")]
    rate: f64,
    #[serde(with = "decimal")]
    target_rate: f64,
    seed: u64,
    profile: DegreeProfile,
}

#[derive(Serialize, Deserialize)]
struct CodeFile {
    header: CodeHeader,
    /// Column indices of every check.
    checks: Vec<Vec<u32>>,
}

impl LdpcCode {
    /// Block length.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Message length.
    pub fn l(&self) -> usize {
        self.info_positions.len()
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn rate(&self) -> f64 {
        self.l() as f64 / self.n as f64
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_checks(&self) -> usize {
        self.checks.len()
    }

    pub fn checks(&self) -> &[Vec<u32>] {
        &self.checks
    }

    pub fn vars(&self) -> &[Vec<u32>] {
        &self.vars
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    /// Builds the code from a parity-check adjacency list.
    pub fn from_checks(
        n: usize,
        checks: Vec<Vec<u32>>,
        seed: u64,
        target_rate: f64,
        profile: DegreeProfile,
    ) -> Result<LdpcCode> {
        let mut vars = vec![Vec::new(); n];
        for (c, row) in checks.iter().enumerate() {
            for &v in row {
                let v = v as usize;
                if v >= n {
                    return Err(Error::CodeConstruction(format!("check {c} references column {v} >= n")));
                }
                vars[v].push(c as u32);
            }
        }
        let (reduced, pivots) = reduce(n, &checks);
        let mut is_pivot = vec![false; n];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        let info_positions = (0..n).filter(|&j| !is_pivot[j]).collect();
        Ok(LdpcCode {
            n,
            seed,
            target_rate,
            profile,
            checks,
            vars,
            reduced,
            pivots,
            info_positions,
        })
    }

    /// `G z`: the codeword carrying message `z`.
    pub fn encode(&self, z: &BitString) -> Result<BitString> {
        if z.len() != self.l() {
            return Err(Error::LengthMismatch {
                expected: self.l(),
                actual: z.len(),
            });
        }
        let mut c = BitString::zeros(self.n);
        for (k, &pos) in self.info_positions.iter().enumerate() {
            if z.get(k) {
                c.set(pos, true);
            }
        }
        let parity: Vec<bool> = self.reduced.iter().map(|row| row.dot(&c)).collect();
        for (&p, bit) in self.pivots.iter().zip(parity) {
            c.set(p, bit);
        }
        Ok(c)
    }

    /// Message bits of a codeword.
    pub fn extract(&self, codeword: &BitString) -> BitString {
        self.info_positions.iter().map(|&p| codeword.get(p)).collect()
    }

    pub fn satisfies_checks(&self, word: &BitString) -> bool {
        self.checks
            .iter()
            .all(|row| !row.iter().fold(false, |acc, &v| acc ^ word.get(v as usize)))
    }

    /// Checks `H G = 0`: every original check must be the sum of the
    /// reduced rows at its pivot columns.
    pub fn verify(&self) -> bool {
        let mut pivot_row = vec![usize::MAX; self.n];
        for (r, &p) in self.pivots.iter().enumerate() {
            pivot_row[p] = r;
        }
        self.checks.iter().all(|row| {
            let mut dense = BitString::zeros(self.n);
            for &v in row {
                dense.flip(v as usize);
            }
            let mut acc = BitString::zeros(self.n);
            for (p, &r) in pivot_row.iter().enumerate() {
                if r != usize::MAX && dense.get(p) {
                    acc.xor_assign(&self.reduced[r]).expect("same length");
                }
            }
            acc == dense
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CodeFile {
            header: CodeHeader {
                n: self.n,
                l: self.l(),
                rate: self.rate(),
                target_rate: self.target_rate,
                seed: self.seed,
                profile: self.profile.clone(),
            },
            checks: self.checks.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<LdpcCode> {
        let file: CodeFile = serde_json::from_str(text)?;
        let h = file.header;
        let code = LdpcCode::from_checks(h.n, file.checks, h.seed, h.target_rate, h.profile)?;
        if code.l() != h.l {
            return Err(Error::Format(format!(
                "code header says l = {} but the checks give {}",
                h.l,
                code.l()
            )));
        }
        Ok(code)
    }
}

/// Reduced row echelon form over GF(2), pivoting on the rightmost available
/// column so the information positions collect at the front.
fn reduce(n: usize, checks: &[Vec<u32>]) -> (Vec<BitString>, Vec<usize>) {
    let words = n.div_ceil(64);
    let mut rows: Vec<Vec<u64>> = checks
        .iter()
        .map(|row| {
            let mut w = vec![0u64; words];
            for &v in row {
                w[v as usize / 64] ^= 1u64 << (v % 64);
            }
            w
        })
        .collect();
    let m = rows.len();
    let mut rank = 0;
    let mut pivots = Vec::new();
    for col in (0..n).rev() {
        if rank == m {
            break;
        }
        let (w, b) = (col / 64, col % 64);
        let Some(found) = (rank..m).find(|&r| (rows[r][w] >> b) & 1 == 1) else {
            continue;
        };
        rows.swap(rank, found);
        let pivot = std::mem::take(&mut rows[rank]);
        // Rows not yet pivoted are zero right of `col`, so only the words up
        // to `w` can change.
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && (row[w] >> b) & 1 == 1 {
                for (x, y) in row[..=w].iter_mut().zip(&pivot[..=w]) {
                    *x ^= y;
                }
            }
        }
        rows[rank] = pivot;
        pivots.push(col);
        rank += 1;
    }
    rows.truncate(rank);
    let reduced = rows.into_iter().map(|w| BitString::from_words(w, n)).collect();
    (reduced, pivots)
}

/// Progressive edge growth: each new edge of a column goes to a check as
/// far away as possible in the current graph, preferring low check degree;
/// remaining ties are broken by the seeded generator.
fn peg_checks(n: usize, m: usize, degrees: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<u32>> {
    let mut checks: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut vars: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut check_seen = vec![0u32; m];
    let mut var_seen = vec![0u32; n];
    let mut epoch = 0u32;
    let mut frontier: Vec<u32> = Vec::new();
    let mut next: Vec<u32> = Vec::new();
    let mut candidates: Vec<u32> = Vec::new();
    for (v, &deg) in degrees.iter().enumerate() {
        for edge in 0..deg {
            candidates.clear();
            if edge == 0 {
                candidates.extend(0..m as u32);
            } else {
                epoch += 1;
                var_seen[v] = epoch;
                frontier.clear();
                for &c in &vars[v] {
                    check_seen[c as usize] = epoch;
                    frontier.push(c);
                }
                let mut reached = frontier.len();
                'levels: loop {
                    next.clear();
                    for &c in &frontier {
                        for &u in &checks[c as usize] {
                            if var_seen[u as usize] == epoch {
                                continue;
                            }
                            var_seen[u as usize] = epoch;
                            for &c2 in &vars[u as usize] {
                                if check_seen[c2 as usize] != epoch {
                                    check_seen[c2 as usize] = epoch;
                                    next.push(c2);
                                    if reached + next.len() == m {
                                        // this level completes the graph: the
                                        // farthest checks are the ones it adds
                                        candidates.extend(next.iter().copied());
                                        break 'levels;
                                    }
                                }
                            }
                        }
                    }
                    if next.is_empty() {
                        // stopped growing: any unreached check
                        candidates.extend((0..m as u32).filter(|&c| check_seen[c as usize] != epoch));
                        break;
                    }
                    reached += next.len();
                    std::mem::swap(&mut frontier, &mut next);
                }
            }
            candidates.retain(|&c| !vars[v].contains(&c));
            let min_deg = candidates.iter().map(|&c| checks[c as usize].len()).min().expect("a check is free");
            candidates.retain(|&c| checks[c as usize].len() == min_deg);
            let pick = candidates[rng.random_range(0..candidates.len())];
            checks[pick as usize].push(v as u32);
            vars[v].push(pick);
        }
    }
    for row in &mut checks {
        row.sort_unstable();
    }
    checks
}

/// Builds an LDPC code of length `n` whose realized rate is within 0.01 of
/// `target_rate`, retrying with fresh edges when elimination finds too much
/// rank deficiency.
pub fn build_code(n: usize, target_rate: f64, profile: &DegreeProfile, seed: u64) -> Result<LdpcCode> {
    profile.validate()?;
    if n < 8 {
        return Err(Error::InvalidParameter(format!("block length {n} too small")));
    }
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::InvalidParameter(format!("target rate {target_rate} outside (0, 1)")));
    }
    let m = ((1.0 - target_rate) * n as f64).round() as usize;
    if m < 2 || m >= n {
        return Err(Error::InvalidParameter(format!("rate {target_rate} leaves {m} checks for n = {n}")));
    }
    let degrees = profile.column_degrees(n, m);
    let mut last_rate = f64::NAN;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let checks = peg_checks(n, m, &degrees, &mut rng);
        let code = LdpcCode::from_checks(n, checks, seed, target_rate, profile.clone())?;
        last_rate = code.rate();
        if (last_rate - target_rate).abs() <= RATE_TOLERANCE {
            return Ok(code);
        }
    }
    Err(Error::CodeConstruction(format!(
        "rate {last_rate} still off target {target_rate} after {MAX_ATTEMPTS} attempts"
    )))
}

type CacheKey = (usize, u64, u64, String);

/// Process-wide cache of constructed codes; construction is deterministic,
/// so sharing is invisible to callers.
pub fn cached_code(n: usize, target_rate: f64, profile: &DegreeProfile, seed: u64) -> Result<Arc<LdpcCode>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<LdpcCode>>>> = OnceLock::new();
    let key = (
        n,
        target_rate.to_bits(),
        seed,
        serde_json::to_string(profile).unwrap_or_default(),
    );
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(code) = cache.lock().expect("cache lock").get(&key) {
        return Ok(code.clone());
    }
    let code = Arc::new(build_code(n, target_rate, profile, seed)?);
    cache.lock().expect("cache lock").insert(key, code.clone());
    Ok(code)
}
