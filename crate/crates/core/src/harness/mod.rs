//! Runs driven by a config file and a seed: simulation, replay of recorded
//! counts, parameter sweeps and a quick self test.

mod config;
mod fixture;
mod report;
mod selftest;
mod sweep;

use std::path::Path;

pub use config::{
    ChannelSection, EstimationSection, HarnessConfig, ProtocolSection, ReconciliationSection, ResolvedConfig,
    SourceSection,
};
pub use fixture::{inject_qber, reference_counts, REFERENCE_CHECK_BITS, REFERENCE_DARK_COUNT_PROB, REFERENCE_QBER, REFERENCE_RECEIVED};
pub use report::{write_outputs, Command, KeySidecar, RunReport, Timings, REPORT_FORMAT};
pub use selftest::{run_selftest, SelfTestCheck};
pub use sweep::{parse_range, run_sweep, write_csv, SweepParam, SweepRow};

use crate::channel::SessionCounts;
use crate::error::Result;
use crate::protocol::{run_session, SessionInput};

/// Full pipeline on a sampled session.
pub fn simulate(config: &HarnessConfig, seed: u64) -> Result<RunReport> {
    let resolved = config.resolve()?;
    let input = resolved.simulated_input();
    let session = run_session(&resolved.session, &input, &resolved.settings, seed)?;
    Ok(RunReport::new(Command::Simulate, seed, config.clone(), input, session))
}

/// Pipeline on recorded counts with synthetic bit payloads.
pub fn replay(config: &HarnessConfig, counts: &SessionCounts, seed: u64) -> Result<RunReport> {
    let resolved = config.resolve()?;
    let input = SessionInput::Replay { counts: counts.clone() };
    let session = run_session(&resolved.session, &input, &resolved.settings, seed)?;
    Ok(RunReport::new(Command::Replay, seed, config.clone(), input, session))
}

pub fn load_counts(path: &Path) -> Result<SessionCounts> {
    SessionCounts::from_json(&std::fs::read_to_string(path)?)
}
