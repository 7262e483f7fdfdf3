//! Reverse reconciliation: Bob masks a random codeword with his raw bits,
//! Alice removes her raw bits and decodes.

mod code;
mod decoder;
mod rates;

use serde::{Deserialize, Serialize};

pub use code::{build_code, cached_code, DegreeProfile, LdpcCode};
pub use decoder::{bsc_llr, decode, DecodeResult, DEFAULT_MAX_ITERATIONS, LLR_CLAMP};
pub use rates::{coding_rate_for, RateTable};

use crate::bits::BitString;
use crate::error::{Error, Result};

/// Length of every reconciliation block.
pub const BLOCK_BITS: usize = 10_000;

/// The masked word `G Z + X'` for one block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconciliationMessage {
    pub block_id: usize,
    pub payload: BitString,
}

/// Decoder gave up; the block is discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("block {block_id} did not decode within {iterations} iterations")]
pub struct DecodeFailure {
    pub block_id: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub z: BitString,
    pub iterations: usize,
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

/// Bob's side: `payload = encode(z) ^ x_prime`.
pub fn reconcile_send(
    code: &LdpcCode,
    z: &BitString,
    x_prime: &BitString,
    block_id: usize,
) -> Result<ReconciliationMessage> {
    check_len(code.n(), x_prime.len())?;
    let payload = code.encode(z)?.xor(x_prime)?;
    Ok(ReconciliationMessage { block_id, payload })
}

/// Alice's side: decodes `payload ^ x`, a codeword seen through the error
/// pattern between the two raw strings.
pub fn reconcile_recv(
    code: &LdpcCode,
    message: &ReconciliationMessage,
    x: &BitString,
    channel_qber: f64,
    max_iterations: usize,
) -> Result<std::result::Result<Decoded, DecodeFailure>> {
    check_len(code.n(), x.len())?;
    check_len(code.n(), message.payload.len())?;
    if !(channel_qber > 0.0 && channel_qber < 0.5) {
        return Err(Error::InvalidParameter(format!("channel QBER {channel_qber} outside (0, 0.5)")));
    }
    let noisy = message.payload.xor(x)?;
    let res = decode(code, &bsc_llr(&noisy, channel_qber), max_iterations);
    Ok(if res.converged {
        Ok(Decoded {
            z: code.extract(&res.word),
            iterations: res.iterations,
        })
    } else {
        Err(DecodeFailure {
            block_id: message.block_id,
            iterations: res.iterations,
        })
    })
}
