use rand::RngCore;

use crate::bits::BitString;
use crate::rng::BitSource;

/// Uniformly random permutation of `bits` by Fisher–Yates.
///
/// Each swap index is drawn with a bit-frugal uniform sampler.
/// Returns the permuted string and the number of random bits used.
pub fn random_permutation<R: RngCore + ?Sized>(bits: &BitString, rng: &mut R) -> (BitString, u64) {
    let order = shuffled_indices(bits.len(), bits.len(), rng);
    (gather(bits, &order.0), order.1)
}

/// Uniformly random ordered choice of `count` positions out of `len`
/// (a Fisher–Yates shuffle stopped after `count` swaps), followed by the
/// remaining positions. Returns the index order and the random bits used.
pub fn random_prefix_selection<R: RngCore + ?Sized>(len: usize, count: usize, rng: &mut R) -> (Vec<usize>, u64) {
    shuffled_indices(len, count.min(len), rng)
}

fn shuffled_indices<R: RngCore + ?Sized>(len: usize, swaps: usize, rng: &mut R) -> (Vec<usize>, u64) {
    let mut idx: Vec<usize> = (0..len).collect();
    let mut src = BitSource::new(rng);
    for i in 0..swaps.min(len.saturating_sub(1)) {
        let j = i + src.uniform_below((len - i) as u64) as usize;
        idx.swap(i, j);
    }
    (idx, src.consumed())
}

/// `out[t] = bits[order[t]]`.
pub(crate) fn gather(bits: &BitString, order: &[usize]) -> BitString {
    let mut out = BitString::zeros(order.len());
    for (t, &i) in order.iter().enumerate() {
        if bits.get(i) {
            out.set(t, true);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StageRng;

    #[test]
    fn trivial_inputs() {
        let mut rng = StageRng::from_seed_u64(0);
        let (p, used) = random_permutation(&BitString::new(), &mut rng);
        assert!(p.is_empty());
        assert_eq!(used, 0);
        let one = BitString::parse_bits("1").unwrap();
        assert_eq!(random_permutation(&one, &mut rng).0, one);
    }

    #[test]
    fn popcount_preserved() {
        let mut rng = StageRng::from_seed_u64(4);
        let b = BitString::random(1000, &mut rng);
        let (p, _) = random_permutation(&b, &mut rng);
        assert_eq!(p.count_ones(), b.count_ones());
    }

    #[test]
    fn three_element_permutations_are_uniform() {
        let mut rng = StageRng::from_seed_u64(21);
        let mut hist = std::collections::HashMap::new();
        let trials = 60_000;
        for _ in 0..trials {
            let (order, _) = random_prefix_selection(3, 3, &mut rng);
            *hist.entry(order).or_insert(0u32) += 1;
        }
        assert_eq!(hist.len(), 6);
        let expected = trials as f64 / 6.0;
        let chi2: f64 = hist.values().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        // 5 degrees of freedom; the 0.999 quantile is 20.515.
        assert!(chi2 < 20.515, "chi-square {chi2}");
    }

    #[test]
    fn randomness_budget_for_full_shuffle_of_1e5() {
        let mut rng = StageRng::from_seed_u64(2);
        let (_, used) = random_prefix_selection(100_000, 100_000, &mut rng);
        assert!((1.0e6..=3.0e6).contains(&(used as f64)), "{used}");
    }

    #[test]
    fn prefix_selection_is_a_permutation() {
        let mut rng = StageRng::from_seed_u64(8);
        let (mut order, _) = random_prefix_selection(500, 120, &mut rng);
        order.sort_unstable();
        assert_eq!(order, (0..500).collect::<Vec<_>>());
    }
}
