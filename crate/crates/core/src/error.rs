use crate::history::OpId;
use crate::model::{Node, ProcessId, Round};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed joint action in round {round}: {reason}")]
    MalformedJointAction { round: Round, reason: String },

    #[error("invalid system configuration: {0}")]
    Config(String),

    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),

    #[error("adversary cannot satisfy its constraints: {0}")]
    AdversaryExhausted(String),

    #[error("operation {0} is pending")]
    PendingOperation(OpId),

    #[error("unknown operation {0}")]
    UnknownOperation(OpId),

    #[error("runs have different configurations")]
    ConfigMismatch,

    #[error("runs are not locally equivalent (process {0} differs)")]
    NotEquivalent(ProcessId),

    #[error("constructed run is not a legal run: {0}")]
    ValidationFailure(String),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("protocol violation in round {round} at process {process}: {reason}")]
    ProtocolViolation {
        round: Round,
        process: ProcessId,
        reason: String,
    },

    #[error("history has {ops} operations, exhaustive search bound is {bound}")]
    HistoryTooLarge { ops: usize, bound: usize },

    #[error("node {0} lies outside the run horizon")]
    NodeOutOfRange(Node),

    #[error("trace: {0}")]
    Trace(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("scenario constraint: {0}")]
    Constraint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
