//! Online admission control for time-critical event-triggered flows in
//! TSN networks that combine per-flow asynchronous traffic shaping with
//! per-class credit-based shapers.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: topology, flows, per-port class state and invariant checks.
//! * [`netcalc`]: arrival/service curves, delay bound and minimum idle slope.
//! * [`adjust`]: deadline-adaptive local-deadline adjustment.
//! * [`baselines`]: equal, load-based and bandwidth-based deadline reduction.
//! * [`routing`]: k-shortest candidate routes.
//! * [`engine`]: flow addition and removal.
//! * [`scenario`]: synthetic and realistic experiment inputs.
//! * [`harness`]: event-driven runs, metrics and result files.

pub mod adjust;
pub mod baselines;
pub mod engine;
pub mod harness;
pub mod model;
pub mod netcalc;
pub mod routing;
pub mod scenario;

pub use adjust::{adjust_local_deadlines, AdjustError, AdjustProblem, AdjustmentOutcome};
pub use baselines::StrategyKind;
pub use engine::{AdmissionDecision, AdmissionEngine, EngineError, RejectReason};
pub use model::{
    verify_config, ClassConfig, Flow, FlowId, InvariantReport, LinkId, NetworkConfig, NetworkGraph,
    NodeId, NodeKind,
};
pub use routing::{CandidateRouteTable, Route};
