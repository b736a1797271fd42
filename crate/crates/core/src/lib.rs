//! Deterministic simulation and analysis of register protocols in the
//! asynchronous message-passing model.
//!
//! * [`model`]: states, joint actions, the transition function, run validity.
//! * [`sim`]: seeded adversaries and the simulation engine.
//! * [`protocol`]: the protocol interface, ABD, and two fixtures.
//! * [`causality`]: message chains, past frontiers, local equivalence.
//! * [`transform`]: delaying the future, reordering operations.
//! * [`history`], [`linearize`]: operations, sequential histories, the
//!   linearizability checker.
//! * [`audit`]: observers, witnesses, chain audits, refutations.
//! * [`trace`], [`scenario`], [`fuzz`]: persistence and batch pipelines.

pub mod audit;
pub mod causality;
pub mod error;
pub mod fuzz;
pub mod history;
pub mod linearize;
pub mod model;
pub mod protocol;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod transform;

pub use audit::{audit, audit_chains, audit_quorum, observers, refute, witnesses, AuditReport, Finding, Refutation};
pub use causality::{build_index, corresponding_nodes, locally_equivalent, CausalIndex, PastFrontier};
pub use error::{Error, Result};
pub use history::{extract_operations, is_atomic_history, OpId, OperationInstance, SequentialHistory};
pub use linearize::{check_no_aba, find_linearization, LinearizationResult, Verdict};
pub use model::{replay, validate_run, Node, Run, SystemConfig, ValidationReport};
pub use protocol::{abd_protocol, broken_protocol, by_name, gossip_protocol, ProtocolSpec};
pub use sim::{simulate, AdversarySpec, Engine};
pub use transform::{delay_future, reorder_operations, shift, TransformCertificate};
