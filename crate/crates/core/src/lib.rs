//! Finite-statistics decoy-state BB84 post-processing: channel simulation,
//! parameter estimation, LDPC reverse reconciliation and Toeplitz privacy
//! amplification.

pub mod bits;
pub mod channel;
pub mod decimal;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod photon_source;
pub mod privacy;
pub mod protocol;
pub mod reconciliation;
pub mod rng;
pub mod stats;

pub use bits::BitString;
pub use channel::{AttackModel, ChannelModel, SessionCounts};
pub use error::{Error, Result};
pub use estimation::{EstimationResult, Fluctuation, KeyEstimator, OptimizerOptions, WorstCasePoint};
pub use harness::{HarnessConfig, RunReport};
pub use photon_source::{Basis, IntensitySet, TaggedStateModel};
pub use protocol::{Abort, KeyOutput, PipelineSettings, SessionConfig, SessionInput};
pub use reconciliation::{DegreeProfile, LdpcCode, RateTable};
pub use rng::{RunRng, StageRng};
