//! Discrete-event simulator of an unstructured peer-to-peer file-sharing
//! overlay with neighbor-level free-rider control (Q-Feed), reward-driven
//! replica placement (Q-replication) and k-random-walk search.
//!
//! Every run is a pure function of its configuration and seed.

pub mod config;
pub mod engine;
pub mod error;
pub mod export;
pub mod metrics;
pub mod model;
pub mod network;
pub mod qfeed;
pub mod qrepl;
pub mod search;

pub use config::{QFeedConfig, QueryModel, QReplConfig, ReplicationScheme, ReportingConfig, ScenarioConfig, SearchConfig, SimConfig};
pub use engine::{majority_status, run_series, run_simulation, without_qfeed, Simulation};
pub use error::{Result, SimError};
pub use export::{export, RunManifest};
pub use metrics::{finalize_run, Collector, Event, RunReport, SafetyAudit, StatusCounts};
pub use model::{KeywordId, NodeId, NodeProfile, ObjectId, ObjectRecord, Provenance, SharedStore, Topology};
pub use network::{Network, PeerBehavior, PeerNode};
pub use qfeed::{NeighborRecord, NeighborStatus, NeighborTable, PeriodStats, StatusCategory};
pub use search::{QueryMessage, QueryResult};
