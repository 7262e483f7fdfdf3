//! Alice/Bob session logic: pulse scheduling, sifting, permutation,
//! raw-key/check-bit split, abort rules and final key sizing.

mod permutation;
mod session;
mod sifting;

pub use permutation::{random_permutation, random_prefix_selection};
pub use session::{
    compute_final_size, nominal_reconciled_bits, run_session, BasisOutcome, BlockOutcome, FinalSize, KeyOutput,
    PipelineSettings, SessionInput,
};
pub use sifting::{check_sifted_lengths, counts_after_split, sift_and_split, Abort, BasisSift, SiftedData};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::channel::multinomial_draw;
use crate::decimal;
use crate::error::{Error, Result};
use crate::photon_source::IntensitySet;

/// Session parameters shared by Alice and Bob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub intensities: IntensitySet,
    /// Sending probability per pulse class `0 ..= 2k`.
    #[serde(with = "decimal::vec")]
    pub send_prob: Vec<f64>,
    /// Raw key length `N` per basis.
    pub raw_key_bits: u64,
    /// Cap `N_bar` on the final key per basis.
    pub max_final_bits: u64,
    #[serde(with = "decimal")]
    pub time_slot_s: f64,
    /// Security exponent: leakage stays below `2^-delta`.
    pub delta: u32,
    #[serde(with = "decimal")]
    pub dark_count_prob: f64,
}

impl SessionConfig {
    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.intensities.num_classes();
        if self.send_prob.len() != n {
            out.push(format!(
                "send_prob has {} entries, expected 2k+1 = {n}",
                self.send_prob.len()
            ));
        }
        if let Some(i) = self.send_prob.iter().position(|p| !(*p >= 0.0 && p.is_finite())) {
            out.push(format!("send_prob[{i}] = {} is negative or not finite", self.send_prob[i]));
        }
        let total: f64 = self.send_prob.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            out.push(format!("send_prob sums to {total}, expected 1"));
        }
        if self.raw_key_bits < 1 {
            out.push("raw key length N must be at least 1".into());
        }
        if self.max_final_bits < 1 {
            out.push("N_bar must be at least 1".into());
        }
        if !(self.time_slot_s > 0.0 && self.time_slot_s.is_finite()) {
            out.push(format!("time slot {} s must be positive", self.time_slot_s));
        }
        if self.delta < 1 {
            out.push("delta must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dark_count_prob) {
            out.push(format!("dark count probability {} outside [0, 1)", self.dark_count_prob));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Per-class sent counts `A_i`: a multinomial draw of `total_pulses` over
/// `send_prob`.
pub fn schedule_pulses<R: RngCore + ?Sized>(config: &SessionConfig, total_pulses: u64, rng: &mut R) -> Vec<u64> {
    multinomial_draw(total_pulses, &config.send_prob, rng)
}

/// Sending ratios `0.125 : 0.1875 : 0.0625 : 0.1875` per basis pair, as
/// used for three decoy intensities.
pub const REFERENCE_SEND_PROB: [f64; 7] = [0.125, 0.1875, 0.0625, 0.1875, 0.1875, 0.0625, 0.1875];
