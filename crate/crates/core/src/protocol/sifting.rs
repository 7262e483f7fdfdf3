use rand::RngCore;
use rand_distr::{Distribution, Hypergeometric};
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::channel::SessionCounts;
use crate::error::{Error, Result};
use crate::photon_source::Basis;

use super::permutation::{gather, random_prefix_selection};

/// Reasons a session ends without key. These are valid protocol outcomes,
/// not failures of the software.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Abort {
    #[error("class {class}: only {sifted} sifted bits for a raw key of {required}")]
    InsufficientSiftedBits { class: usize, sifted: u64, required: u64 },
    #[error("{basis:?} key: estimation failed ({detail})")]
    EstimationFailed { basis: Basis, detail: String },
    #[error("{basis:?} key: error rate {qber} beyond every available code")]
    UncorrectableErrorRate { basis: Basis, qber: f64 },
    #[error("no final key left on either basis")]
    NoFinalKey,
}

/// Sifted material of one basis after the permutation and split.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSift {
    pub basis: Basis,
    pub signal_class: usize,
    pub raw_alice: BitString,
    pub raw_bob: BitString,
    pub check_alice: BitString,
    pub check_bob: BitString,
    /// Random bits spent on the permutation.
    pub permutation_bits: u64,
}

impl BasisSift {
    pub fn check_errors(&self) -> u64 {
        self.check_alice.hamming_distance(&self.check_bob).unwrap_or(0) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftedData {
    /// × first, then +.
    pub bases: [BasisSift; 2],
    /// Decoy and vacuum classes, disclosed whole: `(class, alice, bob)`.
    pub decoys: Vec<(usize, BitString, BitString)>,
}

impl SiftedData {
    pub fn basis(&self, basis: Basis) -> &BasisSift {
        match basis {
            Basis::Cross => &self.bases[0],
            Basis::Plus => &self.bases[1],
        }
    }

    /// Disclosed error count per class: check-bit errors for signal classes,
    /// all errors for the others.
    pub fn check_errors(&self, num_classes: usize) -> Vec<u64> {
        let mut out = vec![0; num_classes];
        for (class, a, b) in &self.decoys {
            out[*class] = a.hamming_distance(b).unwrap_or(0) as u64;
        }
        for s in &self.bases {
            out[s.signal_class] = s.check_errors();
        }
        out
    }
}

/// Aborts when either signal class has `E <= N`. The decision looks at the
/// counts only, never at bit values.
pub fn check_sifted_lengths(counts: &SessionCounts) -> std::result::Result<(), Abort> {
    for basis in [Basis::Cross, Basis::Plus] {
        let class = counts.signal_class(basis);
        if counts.sifted[class] <= counts.raw_key_bits {
            return Err(Abort::InsufficientSiftedBits {
                class,
                sifted: counts.sifted[class],
                required: counts.raw_key_bits,
            });
        }
    }
    Ok(())
}

/// Permutes the two signal-class strings, keeps the first `N` bits as raw
/// key and the rest as check bits; other classes become check bits whole.
///
/// `alice[i]` and `bob[i]` hold the `E_i` sifted bits of class `i`. The same
/// public permutation is applied to both sides.
pub fn sift_and_split<R: RngCore + ?Sized>(
    counts: &SessionCounts,
    alice: &[BitString],
    bob: &[BitString],
    rng: &mut R,
) -> Result<SiftedData> {
    let n = counts.num_classes();
    if alice.len() != n || bob.len() != n {
        return Err(Error::InvalidParameter(format!("expected {n} bit strings per party")));
    }
    for i in 0..n {
        for s in [&alice[i], &bob[i]] {
            if s.len() as u64 != counts.sifted[i] {
                return Err(Error::LengthMismatch {
                    expected: counts.sifted[i] as usize,
                    actual: s.len(),
                });
            }
        }
    }
    check_sifted_lengths(counts).map_err(Error::Aborted)?;
    let raw = counts.raw_key_bits as usize;
    let split = |basis: Basis, rng: &mut R| {
        let class = counts.signal_class(basis);
        let len = alice[class].len();
        let (order, used) = random_prefix_selection(len, raw, rng);
        let a = gather(&alice[class], &order);
        let b = gather(&bob[class], &order);
        BasisSift {
            basis,
            signal_class: class,
            raw_alice: a.slice(0, raw),
            raw_bob: b.slice(0, raw),
            check_alice: a.slice(raw, len),
            check_bob: b.slice(raw, len),
            permutation_bits: used,
        }
    };
    let cross = split(Basis::Cross, rng);
    let plus = split(Basis::Plus, rng);
    let decoys = (0..n)
        .filter(|&i| !counts.is_signal(i))
        .map(|i| (i, alice[i].clone(), bob[i].clone()))
        .collect();
    Ok(SiftedData {
        bases: [cross, plus],
        decoys,
    })
}

/// Count-level equivalent of the split: signal-class `H` (errors over all
/// `E` bits) is replaced by the errors landing among the `E - N` check bits,
/// a hypergeometric draw.
pub fn counts_after_split<R: RngCore + ?Sized>(counts: &SessionCounts, rng: &mut R) -> Result<SessionCounts> {
    check_sifted_lengths(counts).map_err(Error::Aborted)?;
    let mut out = counts.clone();
    for basis in [Basis::Cross, Basis::Plus] {
        let class = counts.signal_class(basis);
        let e = counts.sifted[class];
        let h = counts.errors[class];
        let draws = e - counts.raw_key_bits;
        let hyp = Hypergeometric::new(e, h, draws)
            .map_err(|err| Error::InvalidParameter(format!("hypergeometric split: {err}")))?;
        out.errors[class] = hyp.sample(rng);
    }
    Ok(out)
}
