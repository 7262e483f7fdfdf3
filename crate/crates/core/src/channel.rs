//! Session observations without hardware: closed-form detection and error
//! ratios from an adversary parameterization, and sampled counts from a
//! simulated channel.

use rand::RngCore;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::decimal;
use crate::error::{Error, Result};
use crate::photon_source::{swap_class, swap_state, Basis, TaggedStateModel};
use crate::protocol::{schedule_pulses, SessionConfig};

/// Adversary parameters per tagged state.
///
/// * `q[j]`, `j = 0 ..= 2k + 1`: probability that state `j` is detected.
/// * `r[j - 1]`, `j = 1 ..= k + 1`: error probability of the single photon
///   and the × multiphoton states when measured in ×.
/// * `r_tilde[0]` for the single photon and `r_tilde[t]` for state
///   `k + 1 + t`: the same for + measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    #[serde(with = "decimal::vec")]
    pub q: Vec<f64>,
    #[serde(with = "decimal::vec")]
    pub r: Vec<f64>,
    #[serde(with = "decimal::vec")]
    pub r_tilde: Vec<f64>,
}

impl AttackModel {
    pub fn new(q: Vec<f64>, r: Vec<f64>, r_tilde: Vec<f64>) -> Result<Self> {
        let a = AttackModel { q, r, r_tilde };
        a.validate()?;
        Ok(a)
    }

    /// All-zero attack (nothing reaches Bob) for `k` intensities.
    pub fn blocked(k: usize) -> Self {
        AttackModel {
            q: vec![0.0; 2 * k + 2],
            r: vec![0.0; k + 1],
            r_tilde: vec![0.0; k + 1],
        }
    }

    pub fn k(&self) -> usize {
        self.r.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.r.is_empty() {
            return Err(Error::InvalidParameter("attack model needs k >= 1".into()));
        }
        let k = self.k();
        if self.q.len() != 2 * k + 2 || self.r_tilde.len() != k + 1 {
            return Err(Error::InvalidParameter(format!(
                "attack model sizes q={}, r={}, r_tilde={} do not fit k={k}",
                self.q.len(),
                self.r.len(),
                self.r_tilde.len()
            )));
        }
        for (name, v) in [("q", &self.q), ("r", &self.r), ("r_tilde", &self.r_tilde)] {
            if let Some(i) = v.iter().position(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::InvalidParameter(format!("{name}[{i}] = {} outside [0, 1]", v[i])));
            }
        }
        Ok(())
    }

    /// Error probability of tagged state `state` when measured in `basis`.
    /// Vacuum detections are random; states foreign to `basis` never occur
    /// in that basis and report 0.
    pub fn error_prob(&self, basis: Basis, state: usize) -> f64 {
        let k = self.k();
        match (basis, state) {
            (_, 0) => 0.5,
            (Basis::Cross, 1) => self.r[0],
            (Basis::Plus, 1) => self.r_tilde[0],
            (Basis::Cross, s) if s <= k + 1 => self.r[s - 1],
            (Basis::Plus, s) if s > k + 1 => self.r_tilde[s - k - 1],
            _ => 0.0,
        }
    }

    /// Exchanges the roles of the two bases.
    pub fn mirrored(&self) -> AttackModel {
        let k = self.k();
        let q = (0..self.q.len()).map(|j| self.q[swap_state(j, k)]).collect();
        AttackModel {
            q,
            r: self.r_tilde.clone(),
            r_tilde: self.r.clone(),
        }
    }
}

/// A benign lossy channel used to generate honest data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// End-to-end detection probability per photon.
    #[serde(with = "decimal")]
    pub transmittance: f64,
    /// Dark count probability per pulse.
    #[serde(with = "decimal")]
    pub dark_count_prob: f64,
    /// Optical misalignment error probability.
    #[serde(with = "decimal")]
    pub misalignment: f64,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("transmittance", self.transmittance),
            ("dark_count_prob", self.dark_count_prob),
            ("misalignment", self.misalignment),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Maps a beamsplitter-loss channel onto the adversary parameters: each
/// photon survives independently with probability `transmittance`.
pub fn honest_attack_from_channel(channel: &ChannelModel, model: &TaggedStateModel) -> AttackModel {
    let k = model.k();
    let t = channel.transmittance;
    let mut q = vec![0.0; 2 * k + 2];
    q[1] = t;
    for (idx, rho) in model.rho.iter().enumerate() {
        let l = idx + 2;
        let detect: f64 = rho
            .probs
            .iter()
            .enumerate()
            .map(|(n, p)| p * (1.0 - (1.0 - t).powi(n as i32)))
            .sum();
        q[model.multiphoton_state(Basis::Cross, l)] = detect;
        q[model.multiphoton_state(Basis::Plus, l)] = detect;
    }
    AttackModel {
        q,
        r: vec![channel.misalignment; k + 1],
        r_tilde: vec![channel.misalignment; k + 1],
    }
}

/// Detection ratios `p_i` and error ratios `s_i` per pulse class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedRates {
    #[serde(with = "decimal::vec")]
    pub p: Vec<f64>,
    /// `None` where `p_i = 0` and the error ratio is undefined.
    pub s: Vec<Option<f64>>,
}

/// Closed-form detection and error ratios.
///
/// `p_i = sum_j P_i^j q^j + p_D` and
/// `s_i p_i = sum_j P_i^j q^j e_j + (P_i^0 q^0 + p_D) / 2`, where `e_j` is the
/// error probability of state `j` in the basis of class `i` (`r` for ×
/// classes, `r_tilde` for + classes).
pub fn expected_rates(model: &TaggedStateModel, attack: &AttackModel, p_d: f64) -> Result<ExpectedRates> {
    attack.validate()?;
    if attack.k() != model.k() {
        return Err(Error::InvalidParameter("attack and state model disagree on k".into()));
    }
    let mut p = Vec::with_capacity(model.num_classes());
    let mut s = Vec::with_capacity(model.num_classes());
    for i in 0..model.num_classes() {
        let pi: f64 = (0..model.num_states()).map(|j| model.p(i, j) * attack.q[j]).sum::<f64>() + p_d;
        let err = error_numerator(model, attack, p_d, i);
        p.push(pi);
        s.push(if pi > 0.0 { Some(err / pi) } else { None });
    }
    Ok(ExpectedRates { p, s })
}

/// `s_i p_i` of the error relation.
pub fn error_numerator(model: &TaggedStateModel, attack: &AttackModel, p_d: f64, class: usize) -> f64 {
    let random = 0.5 * (model.p(class, 0) * attack.q[0] + p_d);
    match model.intensities.class_info(class) {
        None => random,
        Some((basis, _)) => {
            (1..model.num_states())
                .map(|j| model.p(class, j) * attack.q[j] * attack.error_prob(basis, j))
                .sum::<f64>()
                + random
        }
    }
}

/// Finds the transmittance at which the honest channel's expected detection
/// ratio for `class` equals `target_p`, by bisection.
pub fn tune_transmittance(model: &TaggedStateModel, p_d: f64, class: usize, target_p: f64) -> Result<f64> {
    let ratio = |t: f64| -> f64 {
        let ch = ChannelModel {
            transmittance: t,
            dark_count_prob: p_d,
            misalignment: 0.0,
        };
        let attack = honest_attack_from_channel(&ch, model);
        (0..model.num_states()).map(|j| model.p(class, j) * attack.q[j]).sum::<f64>() + p_d
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    if !(ratio(lo) <= target_p && target_p <= ratio(hi)) {
        return Err(Error::InvalidParameter(format!(
            "detection ratio {target_p} unreachable for class {class}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) < target_p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Observed integers of one session, per pulse class `i = 0 ..= 2k`.
///
/// `H_i` counts detected errors on the bits used for checking: all `E_i`
/// bits for decoy classes and the `E_i - N` check bits for the two signal
/// classes. Sampled sessions report errors over all `E_i` bits until the
/// protocol has split off the raw key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCounts {
    pub k: usize,
    #[serde(rename = "i0")]
    pub signal_index: usize,
    #[serde(rename = "N")]
    pub raw_key_bits: u64,
    #[serde(rename = "T_s", with = "decimal")]
    pub time_slot_s: f64,
    #[serde(rename = "A")]
    pub sent: Vec<u64>,
    #[serde(rename = "C")]
    pub received: Vec<u64>,
    #[serde(rename = "E")]
    pub sifted: Vec<u64>,
    #[serde(rename = "H")]
    pub errors: Vec<u64>,
}

impl SessionCounts {
    pub fn num_classes(&self) -> usize {
        2 * self.k + 1
    }

    /// Checks shapes and `0 <= H <= E <= C <= A`, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_classes();
        if self.k == 0 || !(1..=self.k).contains(&self.signal_index) {
            return Err(Error::Format(format!(
                "i0 = {} outside 1..={}",
                self.signal_index, self.k
            )));
        }
        for (name, v) in [("A", &self.sent), ("C", &self.received), ("E", &self.sifted), ("H", &self.errors)] {
            if v.len() != n {
                return Err(Error::Format(format!(
                    "field {name} has {} entries, expected 2k+1 = {n}",
                    v.len()
                )));
            }
        }
        for i in 0..n {
            if self.received[i] > self.sent[i] {
                return Err(Error::Format(format!("field C[{i}] exceeds A[{i}]")));
            }
            if self.sifted[i] > self.received[i] {
                return Err(Error::Format(format!("field E[{i}] exceeds C[{i}]")));
            }
            if self.errors[i] > self.sifted[i] {
                return Err(Error::Format(format!("field H[{i}] exceeds E[{i}]")));
            }
        }
        if !(self.time_slot_s > 0.0) {
            return Err(Error::Format("field T_s must be positive".into()));
        }
        if self.raw_key_bits == 0 {
            return Err(Error::Format("field N must be positive".into()));
        }
        Ok(())
    }

    pub fn signal_class(&self, basis: Basis) -> usize {
        match basis {
            Basis::Cross => self.signal_index,
            Basis::Plus => self.signal_index + self.k,
        }
    }

    pub fn is_signal(&self, class: usize) -> bool {
        class != 0 && (class == self.signal_index || class == self.signal_index + self.k)
    }

    pub fn detection_ratio(&self, class: usize) -> f64 {
        self.received[class] as f64 / self.sent[class] as f64
    }

    /// Number of bits whose errors `H_i` counts.
    pub fn check_bits(&self, class: usize) -> u64 {
        if self.is_signal(class) {
            self.sifted[class].saturating_sub(self.raw_key_bits)
        } else {
            self.sifted[class]
        }
    }

    pub fn error_ratio(&self, class: usize) -> Option<f64> {
        let d = self.check_bits(class);
        (d > 0).then(|| self.errors[class] as f64 / d as f64)
    }

    /// Exchanges the × and + class blocks.
    pub fn mirrored(&self) -> SessionCounts {
        let k = self.k;
        let perm = |v: &Vec<u64>| (0..v.len()).map(|i| v[swap_class(i, k)]).collect();
        SessionCounts {
            sent: perm(&self.sent),
            received: perm(&self.received),
            sifted: perm(&self.sifted),
            errors: perm(&self.errors),
            ..self.clone()
        }
    }

    pub fn from_json(text: &str) -> Result<SessionCounts> {
        let counts: SessionCounts = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("counts file: {e}")))?;
        counts.validate()?;
        Ok(counts)
    }
}

/// Per-class sampled quantities before bit-level processing.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSample {
    pub sent: u64,
    pub received: u64,
    pub sifted: u64,
    /// Errors among all `sifted` bits.
    pub errors: u64,
}

/// `Binomial(n, p)` with the degenerate cases handled directly.
pub fn binomial_draw<R: RngCore + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Multinomial draw by sequential conditional binomials.
pub fn multinomial_draw<R: RngCore + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut left = n;
    let mut mass = 1.0;
    for (slot, &p) in out.iter_mut().zip(probs) {
        if left == 0 {
            break;
        }
        let cond = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = binomial_draw(left, cond, rng);
        *slot = draw;
        left -= draw;
        mass -= p;
    }
    // rounding leftovers land in the last populated slot
    if left > 0 {
        if let Some(i) = probs.iter().rposition(|&p| p > 0.0) {
            out[i] += left;
        }
    }
    out
}

/// Samples detections, sifting and errors for given per-class sent counts.
///
/// Photon and dark-count detections are exclusive events, so the detection
/// ratio is `sum_j P_i^j q^j + p_D` in expectation; detections keep the
/// common basis with probability 1/2.
pub fn sample_detections<R: RngCore + ?Sized>(
    sent: &[u64],
    model: &TaggedStateModel,
    attack: &AttackModel,
    p_d: f64,
    rng: &mut R,
) -> Result<Vec<ClassSample>> {
    attack.validate()?;
    if sent.len() != model.num_classes() {
        return Err(Error::InvalidParameter("one sent count per pulse class".into()));
    }
    let mut out = Vec::with_capacity(sent.len());
    for (i, &a) in sent.iter().enumerate() {
        let basis = model.intensities.class_info(i).map(|(b, _)| b);
        let tagged = multinomial_draw(a, &model.probs[i], rng);
        let photon_rate: f64 = (0..model.num_states()).map(|j| model.p(i, j) * attack.q[j]).sum();
        if photon_rate + p_d > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "class {i}: detection probability {} exceeds 1",
                photon_rate + p_d
            )));
        }
        let mut received = 0;
        let mut sifted = 0;
        let mut errors = 0;
        for (j, &b) in tagged.iter().enumerate() {
            let c = binomial_draw(b, attack.q[j], rng);
            let e = binomial_draw(c, 0.5, rng);
            let err_p = match basis {
                Some(bs) => attack.error_prob(bs, j),
                None => 0.5,
            };
            received += c;
            sifted += e;
            errors += binomial_draw(e, err_p, rng);
        }
        let dark_p = if photon_rate < 1.0 { p_d / (1.0 - photon_rate) } else { 0.0 };
        let dark = binomial_draw(a - received, dark_p, rng);
        let dark_sifted = binomial_draw(dark, 0.5, rng);
        received += dark;
        sifted += dark_sifted;
        errors += binomial_draw(dark_sifted, 0.5, rng);
        out.push(ClassSample {
            sent: a,
            received,
            sifted,
            errors,
        });
    }
    Ok(out)
}

/// Schedules `total_pulses` over the pulse classes and samples a session.
/// `H` in the result counts errors over all sifted bits.
pub fn sample_session<R: RngCore + ?Sized>(
    config: &SessionConfig,
    total_pulses: u64,
    model: &TaggedStateModel,
    attack: &AttackModel,
    rng: &mut R,
) -> Result<SessionCounts> {
    config.validate()?;
    if total_pulses == 0 {
        return Err(Error::InvalidParameter("no pulses to send".into()));
    }
    let sent = schedule_pulses(config, total_pulses, rng);
    let classes = sample_detections(&sent, model, attack, config.dark_count_prob, rng)?;
    Ok(SessionCounts {
        k: model.k(),
        signal_index: config.intensities.signal_index(),
        raw_key_bits: config.raw_key_bits,
        time_slot_s: config.time_slot_s,
        sent,
        received: classes.iter().map(|c| c.received).collect(),
        sifted: classes.iter().map(|c| c.sifted).collect(),
        errors: classes.iter().map(|c| c.errors).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon_source::{tagged_state_probs, IntensitySet};
    use crate::rng::StageRng;
    use proptest::prelude::*;

    fn model() -> TaggedStateModel {
        tagged_state_probs(&IntensitySet::new(&[0.07, 0.35, 0.5], 3).unwrap(), 40).unwrap()
    }

    fn honest(t: f64, e: f64, p_d: f64) -> AttackModel {
        let ch = ChannelModel {
            transmittance: t,
            dark_count_prob: p_d,
            misalignment: e,
        };
        honest_attack_from_channel(&ch, &model())
    }

    #[test]
    fn honest_mapping_edges() {
        assert!(honest(0.0, 0.01, 0.0).q.iter().all(|&q| q == 0.0));
        let full = honest(1.0, 0.01, 0.0);
        assert_eq!(full.q[0], 0.0);
        assert!(full.q[1..].iter().all(|&q| (q - 1.0).abs() < 1e-12));
    }

    #[test]
    fn honest_two_photon_closed_form() {
        let mut m = model();
        for rho in &mut m.rho {
            rho.probs.iter_mut().for_each(|p| *p = 0.0);
            rho.probs[2] = 1.0;
        }
        let ch = ChannelModel {
            transmittance: 0.1,
            dark_count_prob: 0.0,
            misalignment: 0.0,
        };
        let a = honest_attack_from_channel(&ch, &m);
        assert!((a.q[2] - 0.19).abs() < 1e-15);
    }

    #[test]
    fn dark_counts_only() {
        let m = model();
        let rates = expected_rates(&m, &AttackModel::blocked(3), 3e-4).unwrap();
        for (p, s) in rates.p.iter().zip(&rates.s) {
            assert!((p - 3e-4).abs() < 1e-18);
            assert!((s.unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn single_photons_only() {
        let m = model();
        let mut a = AttackModel::blocked(3);
        a.q[1] = 1.0;
        let rates = expected_rates(&m, &a, 0.0).unwrap();
        assert!(rates.s[0].is_none());
        for i in 1..m.num_classes() {
            assert!((rates.p[i] - m.p(i, 1)).abs() < 1e-15);
            assert_eq!(rates.s[i], Some(0.0));
        }
    }

    #[test]
    fn tuned_transmittance_hits_target() {
        let m = model();
        let target = 786163.0 / 261_995_000.0;
        let t = tune_transmittance(&m, 3e-4, 3, target).unwrap();
        let rates = expected_rates(&m, &honest(t, 0.0, 3e-4), 3e-4).unwrap();
        assert!((rates.p[3] - target).abs() < 1e-14);
        assert!(tune_transmittance(&m, 3e-4, 3, 1e-5).is_err());
    }

    #[test]
    fn mirror_is_involution() {
        let mut a = honest(0.1, 0.02, 0.0);
        a.r_tilde[2] = 0.3;
        a.q[6] = 0.7;
        assert_eq!(a.mirrored().mirrored(), a);
        let m = model();
        let direct = expected_rates(&m, &a, 1e-4).unwrap();
        let mirrored = expected_rates(&m.mirrored(), &a.mirrored(), 1e-4).unwrap();
        for i in 0..m.num_classes() {
            assert!((direct.p[i] - mirrored.p[swap_class(i, 3)]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_attack_gives_no_clicks() {
        let m = model();
        let mut rng = StageRng::from_seed_u64(3);
        let samples = sample_detections(&[1000; 7], &m, &AttackModel::blocked(3), 0.0, &mut rng).unwrap();
        assert!(samples.iter().all(|s| s.received == 0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = model();
        let a = honest(5e-3, 0.012, 3e-4);
        let run = |seed| {
            let mut rng = StageRng::from_seed_u64(seed);
            sample_detections(&[10_000_000; 7], &m, &a, 3e-4, &mut rng).unwrap()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn sampled_ratios_match_closed_form() {
        let m = model();
        let p_d = 3e-4;
        let a = honest(0.02, 0.03, p_d);
        let rates = expected_rates(&m, &a, p_d).unwrap();
        let mut rng = StageRng::from_seed_u64(11);
        let sent = [1_000_000u64; 7];
        // 40 independent sessions of 10^6 pulses per class.
        let reps = 40;
        let mut det = [0u64; 7];
        let mut sif = [0u64; 7];
        let mut err = [0u64; 7];
        for _ in 0..reps {
            for (i, s) in sample_detections(&sent, &m, &a, p_d, &mut rng).unwrap().iter().enumerate() {
                det[i] += s.received;
                sif[i] += s.sifted;
                err[i] += s.errors;
            }
        }
        for i in 0..7 {
            let n = (sent[i] * reps) as f64;
            let p = rates.p[i];
            let se = (p * (1.0 - p) / n).sqrt();
            let got = det[i] as f64 / n;
            assert!((got - p).abs() < 5.0 * se, "class {i}: {got} vs {p}");
            let s = rates.s[i].unwrap();
            let se = (s * (1.0 - s) / sif[i] as f64).sqrt();
            let got = err[i] as f64 / sif[i] as f64;
            assert!((got - s).abs() < 5.0 * se, "class {i} errors: {got} vs {s}");
        }
    }

    #[test]
    fn counts_json_and_validation() {
        let c = SessionCounts {
            k: 1,
            signal_index: 1,
            raw_key_bits: 10,
            time_slot_s: 1.0,
            sent: vec![100, 100, 100],
            received: vec![5, 50, 50],
            sifted: vec![2, 25, 26],
            errors: vec![1, 2, 3],
        };
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"A\":[100,100,100]"));
        assert_eq!(SessionCounts::from_json(&text).unwrap(), c);
        let bad = text.replace("\"H\":[1,2,3]", "\"H\":[1,2,30]");
        let err = SessionCounts::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("H[2]"), "{err}");
        let bad = text.replace("\"C\":[5,50,50]", "\"C\":\"oops\"");
        let err = SessionCounts::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("counts file"), "{err}");
        assert_eq!(c.check_bits(1), 15);
        assert_eq!(c.mirrored().sent, c.sent);
        assert_eq!(c.mirrored().errors, vec![1, 3, 2]);
    }

    fn arb_attack() -> impl Strategy<Value = AttackModel> {
        (
            proptest::collection::vec(0.0f64..1.0, 8),
            proptest::collection::vec(0.0f64..1.0, 4),
            proptest::collection::vec(0.0f64..1.0, 4),
        )
            .prop_map(|(q, r, rt)| AttackModel::new(q, r, rt).unwrap())
    }

    proptest! {
        #[test]
        fn detection_monotone_in_q(a in arb_attack(), j in 0usize..8, bump in 0.0f64..0.5, p_d in 0.0f64..0.01) {
            let m = model();
            let before = expected_rates(&m, &a, p_d).unwrap();
            let mut b = a.clone();
            b.q[j] = (b.q[j] + bump).min(1.0);
            let after = expected_rates(&m, &b, p_d).unwrap();
            for i in 0..m.num_classes() {
                prop_assert!(after.p[i] >= before.p[i]);
            }
        }

        #[test]
        fn error_relation_identity(a in arb_attack(), p_d in 0.0f64..0.01) {
            let m = model();
            let rates = expected_rates(&m, &a, p_d).unwrap();
            for i in 1..=3 {
                let rhs: f64 = (1..=4).map(|j| m.p(i, j) * a.q[j] * a.r[j - 1]).sum::<f64>()
                    + 0.5 * (m.p(i, 0) * a.q[0] + p_d);
                if let Some(s) = rates.s[i] {
                    prop_assert!((s * rates.p[i] - rhs).abs() <= 1e-15 * rhs.max(1.0));
                }
            }
        }

        #[test]
        fn samples_respect_order(seed in 0u64..1000, t in 0.0f64..1.0, e in 0.0f64..1.0) {
            let m = model();
            let a = honest(t, e, 1e-3);
            let mut rng = StageRng::from_seed_u64(seed);
            for s in sample_detections(&[5000; 7], &m, &a, 1e-3, &mut rng).unwrap() {
                prop_assert!(s.errors <= s.sifted && s.sifted <= s.received && s.received <= s.sent);
            }
        }
    }
}
