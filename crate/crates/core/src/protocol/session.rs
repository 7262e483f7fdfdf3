//! End-to-end session: counts, sifted bits, estimation, reconciliation and
//! privacy amplification for both bases.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::index::sample;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::channel::{honest_attack_from_channel, sample_session, AttackModel, ChannelModel, SessionCounts};
use crate::decimal;
use crate::error::{Error, Result};
use crate::estimation::{security_deltas, EstimationResult, Fluctuation, KeyEstimator, OptimizerOptions};
use crate::photon_source::{tagged_state_probs, Basis, TaggedStateModel};
use crate::privacy::{draw_seed, toeplitz_hash};
use crate::reconciliation::{
    cached_code, reconcile_recv, reconcile_send, DegreeProfile, RateTable, ReconciliationMessage, BLOCK_BITS,
    DEFAULT_MAX_ITERATIONS,
};
use crate::rng::{RunRng, StageRng};

use super::permutation::random_prefix_selection;
use super::{check_sifted_lengths, sift_and_split, Abort, SessionConfig};

/// Knobs of the post-processing that are not protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub block_bits: usize,
    pub degree_profile: DegreeProfile,
    pub rate_table: RateTable,
    pub max_decoder_iterations: usize,
    /// Seed of the code construction, shared by both parties.
    pub code_seed: u64,
    pub fluctuation: Fluctuation,
    pub optimizer: OptimizerOptions,
    /// Fock-space truncation of the photon-number model.
    pub n_max: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            block_bits: BLOCK_BITS,
            degree_profile: DegreeProfile::default(),
            rate_table: RateTable::default(),
            max_decoder_iterations: DEFAULT_MAX_ITERATIONS,
            code_seed: 1,
            fluctuation: Fluctuation::Full,
            optimizer: OptimizerOptions::default(),
            n_max: 40,
        }
    }
}

/// Where the session's observations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SessionInput {
    /// Sample pulses through a channel; without an explicit attack the
    /// channel acts honestly.
    Simulated {
        channel: ChannelModel,
        attack: Option<AttackModel>,
        total_pulses: u64,
    },
    /// Recorded counts with `H` over the check bits; bit payloads are
    /// synthesized at the recorded error rates.
    Replay { counts: SessionCounts },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOutcome {
    pub block_id: usize,
    pub decoded: bool,
    pub iterations: usize,
    /// Alice's decoded message equals Bob's. Only meaningful when decoded.
    pub agrees: bool,
    pub message: ReconciliationMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisOutcome {
    pub basis: Basis,
    pub signal_class: usize,
    pub check_bits: u64,
    pub check_errors: u64,
    #[serde(with = "decimal")]
    pub qber: f64,
    /// Rate requested from the table; 0 when no code fits.
    #[serde(with = "decimal")]
    pub table_rate: f64,
    /// Realized `l / n` of the code used.
    #[serde(with = "decimal")]
    pub coding_rate: f64,
    pub code_n: usize,
    pub code_l: usize,
    pub permutation_bits: u64,
    pub estimation: Option<EstimationResult>,
    pub blocks: Vec<BlockOutcome>,
    /// Disclosed by reconciliation: `n - l` per block.
    pub leaked_bits: u64,
    pub reconciled_bits: u64,
    /// `reconciled_bits - ceil(m_max)` before clamping.
    pub pre_cap_bits: i64,
    pub final_bits: u64,
    /// Toeplitz diagonals, hex, LSB-first within each byte.
    pub toeplitz_seed: Option<BitString>,
    pub keys_agree: bool,
    pub abort: Option<Abort>,
    #[serde(skip)]
    pub key: BitString,
}

/// Result of one session with everything needed to re-check it offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyOutput {
    pub abort: Option<Abort>,
    /// Observed counts with `H` over the disclosed check bits.
    pub counts: Option<SessionCounts>,
    /// × then +.
    pub bases: Vec<BasisOutcome>,
    pub total_final_bits: u64,
    #[serde(with = "decimal")]
    pub key_rate_bps: f64,
    /// Random bits drawn per stage.
    pub random_bits: BTreeMap<String, u64>,
    /// Wall-clock seconds per stage; kept out of reports so they stay
    /// reproducible.
    #[serde(skip)]
    pub stage_seconds: BTreeMap<String, f64>,
}

/// Key length after sizing: `min(N_bar, max(0, reconciled - ceil(m_max)))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalSize {
    pub pre_cap: i64,
    pub final_bits: u64,
}

pub fn compute_final_size(reconciled_bits: u64, m_max: f64, n_bar: u64) -> FinalSize {
    let pre_cap = reconciled_bits as i64 - m_max.max(0.0).ceil() as i64;
    FinalSize {
        pre_cap,
        final_bits: (pre_cap.max(0) as u64).min(n_bar),
    }
}

/// `N eta` rounded down to whole blocks: `floor(N / n) * l`.
pub fn nominal_reconciled_bits(raw_key_bits: u64, block_bits: usize, message_bits: usize) -> u64 {
    raw_key_bits / block_bits as u64 * message_bits as u64
}

struct Stages {
    run: RunRng,
    bits: BTreeMap<String, u64>,
    seconds: BTreeMap<String, f64>,
}

impl Stages {
    fn time<T>(&mut self, label: &str, f: impl FnOnce(&mut StageRng) -> T) -> T {
        let mut rng = self.run.stream(label);
        let start = Instant::now();
        let out = f(&mut rng);
        *self.seconds.entry(label.to_owned()).or_default() += start.elapsed().as_secs_f64();
        *self.bits.entry(label.to_owned()).or_default() += rng.bits_consumed();
        out
    }
}

/// Bob's copy of `alice` with exactly `errors` flipped positions.
fn with_errors<R: RngCore + ?Sized>(alice: &BitString, errors: u64, rng: &mut R) -> BitString {
    let mut bob = alice.clone();
    for pos in sample(rng, alice.len(), errors as usize) {
        bob.flip(pos);
    }
    bob
}

/// Raw key and check strings of one basis.
struct KeyMaterial {
    raw_alice: BitString,
    raw_bob: BitString,
    check_errors: u64,
    permutation_bits: u64,
}

pub fn run_session(
    config: &SessionConfig,
    input: &SessionInput,
    settings: &PipelineSettings,
    seed: u64,
) -> Result<KeyOutput> {
    config.validate()?;
    if (config.raw_key_bits as usize) < settings.block_bits {
        return Err(Error::Config(vec![format!(
            "raw key length {} is shorter than one reconciliation block of {}",
            config.raw_key_bits, settings.block_bits
        )]));
    }
    settings.rate_table.validate()?;
    settings.degree_profile.validate()?;
    let model = tagged_state_probs(&config.intensities, settings.n_max)?;
    let mut st = Stages {
        run: RunRng::new(seed),
        bits: BTreeMap::new(),
        seconds: BTreeMap::new(),
    };

    // Observed counts and the raw key material of both bases.
    let (counts, material) = match input {
        SessionInput::Simulated {
            channel,
            attack,
            total_pulses,
        } => {
            let attack = match attack {
                Some(a) => a.clone(),
                None => {
                    channel.validate()?;
                    honest_attack_from_channel(channel, &model)
                }
            };
            let counts = st.time("channel", |rng| sample_session(config, *total_pulses, &model, &attack, rng))?;
            if let Err(abort) = check_sifted_lengths(&counts) {
                return Ok(aborted(abort, Some(counts), st));
            }
            let (alice, bob): (Vec<BitString>, Vec<BitString>) = st.time("sifted_bits", |rng| {
                counts
                    .sifted
                    .iter()
                    .zip(&counts.errors)
                    .map(|(&e, &h)| {
                        let a = BitString::random(e as usize, rng);
                        let b = with_errors(&a, h, rng);
                        (a, b)
                    })
                    .unzip()
            });
            let sifted = st.time("permutation", |rng| sift_and_split(&counts, &alice, &bob, rng))?;
            let mut observed = counts.clone();
            observed.errors = sifted.check_errors(counts.num_classes());
            let material = sifted
                .bases
                .into_iter()
                .map(|b| KeyMaterial {
                    check_errors: b.check_errors(),
                    raw_alice: b.raw_alice,
                    raw_bob: b.raw_bob,
                    permutation_bits: b.permutation_bits,
                })
                .collect::<Vec<_>>();
            (observed, material)
        }
        SessionInput::Replay { counts } => {
            counts.validate()?;
            if counts.k != model.k() || counts.signal_index != config.intensities.signal_index() {
                return Err(Error::Format("counts do not match the configured intensities".into()));
            }
            if counts.raw_key_bits != config.raw_key_bits {
                return Err(Error::Format(format!(
                    "counts were split at N = {} but the configuration says {}",
                    counts.raw_key_bits, config.raw_key_bits
                )));
            }
            if let Err(abort) = check_sifted_lengths(counts) {
                return Ok(aborted(abort, Some(counts.clone()), st));
            }
            let n = counts.raw_key_bits as usize;
            let mut material = Vec::new();
            for basis in [Basis::Cross, Basis::Plus] {
                let class = counts.signal_class(basis);
                let tag = basis_tag(basis);
                let e = counts.sifted[class] as usize;
                // the permutation itself is not needed for synthetic bits,
                // but its randomness is consumed and accounted for
                let (_, used) = st.time(&format!("permutation.{tag}"), |rng| random_prefix_selection(e, n, rng));
                let rate = counts.error_ratio(class).unwrap_or(0.0);
                let raw_errors = (rate * n as f64).round() as u64;
                let (raw_alice, raw_bob) = st.time(&format!("sifted_bits.{tag}"), |rng| {
                    let a = BitString::random(n, rng);
                    let b = with_errors(&a, raw_errors.min(n as u64), rng);
                    (a, b)
                });
                material.push(KeyMaterial {
                    raw_alice,
                    raw_bob,
                    check_errors: counts.errors[class],
                    permutation_bits: used,
                });
            }
            (counts.clone(), material)
        }
    };

    let deltas = security_deltas(config.delta, config.max_final_bits);
    let mut bases = Vec::new();
    for (basis, mat) in [Basis::Cross, Basis::Plus].into_iter().zip(material) {
        bases.push(process_basis(basis, mat, &counts, &model, config, settings, deltas, &mut st)?);
    }
    let total_final_bits: u64 = bases.iter().map(|b| b.final_bits).sum();
    Ok(KeyOutput {
        abort: (total_final_bits == 0).then_some(Abort::NoFinalKey),
        counts: Some(counts),
        key_rate_bps: total_final_bits as f64 / config.time_slot_s,
        total_final_bits,
        bases,
        random_bits: st.bits,
        stage_seconds: st.seconds,
    })
}

fn basis_tag(basis: Basis) -> &'static str {
    match basis {
        Basis::Cross => "cross",
        Basis::Plus => "plus",
    }
}

fn aborted(abort: Abort, counts: Option<SessionCounts>, st: Stages) -> KeyOutput {
    KeyOutput {
        abort: Some(abort),
        counts,
        bases: Vec::new(),
        total_final_bits: 0,
        key_rate_bps: 0.0,
        random_bits: st.bits,
        stage_seconds: st.seconds,
    }
}

#[allow(clippy::too_many_arguments)]
fn process_basis(
    basis: Basis,
    mat: KeyMaterial,
    counts: &SessionCounts,
    model: &TaggedStateModel,
    config: &SessionConfig,
    settings: &PipelineSettings,
    deltas: crate::estimation::SecurityDeltas,
    st: &mut Stages,
) -> Result<BasisOutcome> {
    let class = counts.signal_class(basis);
    let check_bits = counts.check_bits(class);
    let qber = mat.check_errors as f64 / check_bits as f64;
    let mut out = BasisOutcome {
        basis,
        signal_class: class,
        check_bits,
        check_errors: mat.check_errors,
        qber,
        table_rate: settings.rate_table.rate_for(qber),
        coding_rate: 0.0,
        code_n: settings.block_bits,
        code_l: 0,
        permutation_bits: mat.permutation_bits,
        estimation: None,
        blocks: Vec::new(),
        leaked_bits: 0,
        reconciled_bits: 0,
        pre_cap_bits: 0,
        final_bits: 0,
        toeplitz_seed: None,
        keys_agree: true,
        abort: None,
        key: BitString::new(),
    };

    let label = |stage: &str| format!("{stage}.{}", basis_tag(basis));
    let estimate = st.time(&label("estimation"), |_| {
        KeyEstimator::for_basis(basis, counts, model, config.dark_count_prob, deltas, settings.fluctuation)
            .and_then(|e| e.maximize(&settings.optimizer))
    });
    let estimate = match estimate {
        Ok(e) => e,
        Err(err) => {
            out.abort = Some(Abort::EstimationFailed {
                basis,
                detail: err.to_string(),
            });
            return Ok(out);
        }
    };
    let m_max = estimate.m_max;
    out.estimation = Some(estimate);
    if out.table_rate == 0.0 {
        out.abort = Some(Abort::UncorrectableErrorRate { basis, qber });
        return Ok(out);
    }

    // Reconciliation, block by block. Bob's messages are drawn in order so
    // the transcript does not depend on scheduling.
    let code = st.time("code_construction", |_| {
        cached_code(settings.block_bits, out.table_rate, &settings.degree_profile, settings.code_seed)
    })?;
    out.coding_rate = code.rate();
    out.code_l = code.l();
    let n = code.n();
    let blocks = mat.raw_bob.len() / n;
    let prior = qber.clamp(1e-4, 0.45);
    let messages: Vec<(BitString, ReconciliationMessage)> = st.time(&label("reconciliation"), |rng| {
        (0..blocks)
            .map(|b| {
                let z = BitString::random(code.l(), rng);
                let x_prime = mat.raw_bob.slice(b * n, (b + 1) * n);
                let msg = reconcile_send(&code, &z, &x_prime, b).expect("block lengths match the code");
                (z, msg)
            })
            .collect()
    });
    let start = Instant::now();
    let decoded: Vec<_> = messages
        .par_iter()
        .map(|(_, msg)| {
            let b = msg.block_id;
            let x = mat.raw_alice.slice(b * n, (b + 1) * n);
            reconcile_recv(&code, msg, &x, prior, settings.max_decoder_iterations)
        })
        .collect::<Result<_>>()?;
    *st.seconds.entry(label("decoding")).or_default() += start.elapsed().as_secs_f64();

    let mut alice_key = Vec::new();
    let mut bob_key = Vec::new();
    for ((z, msg), res) in messages.into_iter().zip(decoded) {
        let outcome = match res {
            Ok(d) => {
                let agrees = d.z == z;
                alice_key.push(d.z);
                bob_key.push(z);
                BlockOutcome {
                    block_id: msg.block_id,
                    decoded: true,
                    iterations: d.iterations,
                    agrees,
                    message: msg,
                }
            }
            Err(fail) => BlockOutcome {
                block_id: msg.block_id,
                decoded: false,
                iterations: fail.iterations,
                agrees: false,
                message: msg,
            },
        };
        out.blocks.push(outcome);
    }
    out.leaked_bits = (blocks * (n - code.l())) as u64;
    out.reconciled_bits = (alice_key.len() * code.l()) as u64;
    let size = compute_final_size(out.reconciled_bits, m_max, config.max_final_bits);
    out.pre_cap_bits = size.pre_cap;
    out.final_bits = size.final_bits;
    if size.final_bits == 0 {
        out.abort = Some(Abort::NoFinalKey);
        return Ok(out);
    }

    let l = out.reconciled_bits as usize;
    let spec = st.time(&label("privacy"), |rng| draw_seed(l, l - size.final_bits as usize, rng))?;
    let alice_final = toeplitz_hash(&spec, &BitString::concat(&alice_key))?;
    let bob_final = toeplitz_hash(&spec, &BitString::concat(&bob_key))?;
    out.keys_agree = alice_final == bob_final;
    out.toeplitz_seed = Some(spec.seed);
    out.key = bob_final;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::REFERENCE_SEND_PROB;
    use crate::photon_source::IntensitySet;

    #[test]
    fn final_size_clamps() {
        assert_eq!(compute_final_size(50_000, 60_000.0, 4096).final_bits, 0);
        assert_eq!(compute_final_size(1_000_000 + 10, 9.5, 4096).final_bits, 4096);
        let s = compute_final_size(56_000, 44_314.2, 100_000);
        assert_eq!(s.pre_cap, 56_000 - 44_315);
        assert_eq!(s.final_bits, 11_685);
        assert_eq!(nominal_reconciled_bits(100_000, 10_000, 5_600), 56_000);
        assert_eq!(nominal_reconciled_bits(105_000, 10_000, 5_600), 56_000);
    }

    #[test]
    fn final_size_monotone() {
        let mut last = u64::MAX;
        for m in (0..100).map(|i| i as f64 * 700.0) {
            let s = compute_final_size(56_000, m, 1 << 20).final_bits;
            assert!(s <= last);
            last = s;
        }
        assert!(compute_final_size(50_000, 100.0, 1 << 20).final_bits < compute_final_size(56_000, 100.0, 1 << 20).final_bits);
    }

    fn small_config() -> SessionConfig {
        SessionConfig {
            intensities: IntensitySet::new(&[0.07, 0.35, 0.5], 3).unwrap(),
            send_prob: REFERENCE_SEND_PROB.to_vec(),
            raw_key_bits: 2_000,
            max_final_bits: 256,
            time_slot_s: 1.0,
            delta: 5,
            dark_count_prob: 1e-5,
        }
    }

    fn small_settings() -> PipelineSettings {
        PipelineSettings {
            block_bits: 1_000,
            optimizer: OptimizerOptions {
                grid: 16,
                ..OptimizerOptions::default()
            },
            ..PipelineSettings::default()
        }
    }

    #[test]
    fn near_lossless_session_gives_key() {
        let input = SessionInput::Simulated {
            channel: ChannelModel {
                transmittance: 0.9,
                dark_count_prob: 1e-5,
                misalignment: 0.005,
            },
            attack: None,
            total_pulses: 200_000,
        };
        let out = run_session(&small_config(), &input, &small_settings(), 7).unwrap();
        assert!(out.abort.is_none(), "{:?}", out.abort);
        assert_eq!(out.bases.len(), 2);
        for b in &out.bases {
            assert!(b.final_bits > 0, "{:?} pre-cap {}", b.basis, b.pre_cap_bits);
            assert!(b.keys_agree);
            assert_eq!(b.key.len() as u64, b.final_bits);
        }
        let again = run_session(&small_config(), &input, &small_settings(), 7).unwrap();
        assert_eq!(serde_json::to_string(&out).unwrap(), serde_json::to_string(&again).unwrap());
        assert_eq!(out.bases[1].key, again.bases[1].key);
    }

    #[test]
    fn too_few_pulses_abort() {
        let input = SessionInput::Simulated {
            channel: ChannelModel {
                transmittance: 0.9,
                dark_count_prob: 1e-5,
                misalignment: 0.005,
            },
            attack: None,
            total_pulses: 5_000,
        };
        let out = run_session(&small_config(), &input, &small_settings(), 7).unwrap();
        assert!(matches!(out.abort, Some(Abort::InsufficientSiftedBits { .. })));
        assert_eq!(out.total_final_bits, 0);
    }
}
