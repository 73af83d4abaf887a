//! Link redundancy entity: frame duplication across channels and the
//! matching receive-side duplicate filter.

mod rx;
mod tx;

pub use rx::{Accepted, Flushed, RxCounters, RxPolicy, RxWindow};
pub use tx::{
    CompletionEffects, CopyStatus, DaMode, Enqueued, FrameFlag, FrameId, SelectionRule,
    SenderOutcome, TxCounters, TxError, TxFrame, TxPolicy, TxQueue,
};
