//! Run reports and the files a run leaves behind.
//!
//! `report.json` holds everything that is a function of (config, seed) and
//! nothing else, so reruns are byte-identical. Wall-clock timings go to a
//! separate `timings.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::BitString;
use crate::error::Result;
use crate::photon_source::Basis;
use crate::protocol::{KeyOutput, SessionInput};

use super::config::HarnessConfig;

pub const REPORT_FORMAT: &str = "decoyqkd-run-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub command: Command,
    pub seed: u64,
    pub config: HarnessConfig,
    pub input: SessionInput,
    pub session: KeyOutput,
}

impl RunReport {
    pub fn new(command: Command, seed: u64, config: HarnessConfig, input: SessionInput, session: KeyOutput) -> Self {
        RunReport {
            format: REPORT_FORMAT.to_owned(),
            command,
            seed,
            config,
            input,
            session,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Short content hash naming the run in key sidecars.
    pub fn session_id(&self) -> String {
        hex::encode(&Sha256::digest(self.to_json().as_bytes())[..8])
    }

    pub fn is_abort(&self) -> bool {
        self.session.abort.is_some()
    }

    /// Final keys that reached nonzero length, × then +.
    pub fn keys(&self) -> Vec<(Basis, &BitString)> {
        self.session
            .bases
            .iter()
            .filter(|b| b.final_bits > 0)
            .map(|b| (b.basis, &b.key))
            .collect()
    }

    pub fn timings(&self) -> Timings {
        Timings {
            stage_seconds: self.session.stage_seconds.clone(),
            total_seconds: self.session.stage_seconds.values().sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stage_seconds: BTreeMap<String, f64>,
    pub total_seconds: f64,
}

/// Describes a `key_<basis>.bin` file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySidecar {
    pub basis: Basis,
    pub length_bits: usize,
    pub session_id: String,
    pub seed: u64,
    /// Packing of bits into the `.bin` bytes.
    pub bit_order: String,
}

fn basis_name(basis: Basis) -> &'static str {
    match basis {
        Basis::Cross => "cross",
        Basis::Plus => "plus",
    }
}

/// Writes the report, the timings and, unless the run aborted, one key file
/// with sidecar per basis. Returns the paths written.
pub fn write_outputs(dir: &Path, report: &RunReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    put("report.json".into(), report.to_json().as_bytes())?;
    let timings = serde_json::to_string_pretty(&report.timings()).expect("timings serialize");
    put("timings.json".into(), timings.as_bytes())?;
    if !report.is_abort() {
        let id = report.session_id();
        for (basis, key) in report.keys() {
            let name = basis_name(basis);
            put(format!("key_{name}.bin"), &key.to_bytes())?;
            let sidecar = KeySidecar {
                basis,
                length_bits: key.len(),
                session_id: id.clone(),
                seed: report.seed,
                bit_order: "lsb-first".into(),
            };
            let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
            text.push('\n');
            put(format!("key_{name}.json"), text.as_bytes())?;
        }
    }
    Ok(written)
}
