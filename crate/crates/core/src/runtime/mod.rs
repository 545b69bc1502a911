//! Transactional in-memory storage: tables of fixed-size rows, row locks,
//! key indexes and per-namespace transaction managers.

mod index;
mod record_ref;
mod segvec;
mod table;
mod txn;

pub use index::{IndexRegistry, InsertOutcome, KeyBytes, KeyIndex};
pub use record_ref::RecordRef;
pub use segvec::SegVec;
pub use table::{Column, Row, RowLock, Table, TableRegistry, DELETED, FREE, LIVE};
pub use txn::{
    get_or_create_txn_manager, Outcome, Stats, TraceEvent, TransactionContext, TxnManager, TxnStatus, TxnTrace,
    DEFAULT_NAMESPACE,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum RuntimeError {
    /// NO_WAIT lock conflict; the transaction must abort.
    #[error("lock conflict")]
    Conflict,
    #[error("invalid record reference {0}")]
    InvalidRef(RecordRef),
    #[error("null dereference")]
    NullDereference,
    #[error("invalid column {0}")]
    InvalidColumn(usize),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("access to {0} without a sufficient lock")]
    LockProtocolViolation(RecordRef),
    #[error("capacity exceeded in {0}")]
    CapacityExceeded(String),
    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: i64, len: usize },
    #[error("schema conflict for table {0}")]
    SchemaConflict(String),
    #[error("unknown index handle {0}")]
    InvalidIndex(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LockMode {
    Shared,
    Exclusive,
}

/// Reference to element `index` of an array whose first element is `base`.
pub fn array_element_ref(base: RecordRef, index: i64, len: usize) -> Result<RecordRef, RuntimeError> {
    if index < 0 || index as u64 >= len as u64 {
        return Err(RuntimeError::IndexOutOfBounds { index, len });
    }
    base.offset_by(index as u64).ok_or(RuntimeError::InvalidRef(base))
}
