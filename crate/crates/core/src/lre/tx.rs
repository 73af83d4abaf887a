//! Transmitter side of the link redundancy entity: one shared transmission
//! buffer with per-channel copy status, duplicate avoidance on cross
//! acknowledgements, and dynamic duplicate deferral.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Micros;

pub type FrameId = u64;

/// Reaction to a cross acknowledgement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DaMode {
    /// Every copy is sent on every channel.
    Basic,
    /// Waiting copies are scrubbed from the buffer.
    RdaQ,
    /// Scrub plus retry-counter abort of copies already in a MAC.
    RdaR,
}

/// How a free MAC picks its next frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// Undeferrable, then ready, then deferrable frames.
    #[default]
    Flags,
    /// Oldest waiting frame, ignoring flags. Only valid with `d_th = 0`.
    HeadOfQueue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxPolicy {
    pub mode: DaMode,
    /// Duplicate deferral threshold; 0 disables deferral.
    pub d_th: u32,
    /// Maximum outstanding copies per channel.
    pub capacity: usize,
    pub selection: SelectionRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CopyStatus {
    Waiting,
    InMac,
    Delivered,
    Discarded,
    /// Scrubbed after a cross acknowledgement, never on air.
    Removed,
    /// Refused because this channel's share of the buffer was full.
    Overflowed,
}

impl CopyStatus {
    pub fn is_outstanding(self) -> bool {
        matches!(self, CopyStatus::Waiting | CopyStatus::InMac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FrameFlag {
    Undeferrable = 0,
    Ready = 1,
    Deferrable = 2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxFrame {
    pub id: FrameId,
    pub dest: u16,
    pub t_generated: Micros,
    pub status: Vec<CopyStatus>,
    pub flag: FrameFlag,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TxError {
    #[error("frame id {id} is not above the last enqueued id {last}")]
    NonIncreasingId { id: FrameId, last: FrameId },
    #[error("frame {0} is not in the transmission buffer")]
    UnknownFrame(FrameId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enqueued {
    /// Stored; at least one channel accepted a copy.
    Admitted,
    /// Every channel was full: the packet is lost.
    Overrun,
}

/// How the sender ended up with a frame once no copy is outstanding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenderOutcome {
    Acknowledged,
    Exhausted,
}

/// Effects of a MAC completion the caller must carry out.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompletionEffects {
    /// Channels whose MAC must be asked to abort the frame.
    pub abort_on: Vec<usize>,
    /// Set once the frame has left the buffer.
    pub resolved: Option<SenderOutcome>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TxCounters {
    pub admitted: u64,
    pub overruns: u64,
    pub overflowed_copies: u64,
    pub removed_copies: u64,
    pub xacks: u64,
    pub abort_requests: u64,
    pub deferrals: u64,
}

#[derive(Debug, Clone)]
pub struct TxQueue {
    policy: TxPolicy,
    channels: usize,
    entries: VecDeque<Option<TxFrame>>,
    base: FrameId,
    last_id: Option<FrameId>,
    /// Per channel, waiting ids bucketed by flag.
    waiting: Vec<[BTreeSet<FrameId>; 3]>,
    outstanding: Vec<usize>,
    counters: TxCounters,
}

impl TxQueue {
    pub fn new(policy: TxPolicy, channels: usize) -> Self {
        assert!(channels >= 1);
        Self {
            policy,
            channels,
            entries: VecDeque::new(),
            base: 0,
            last_id: None,
            waiting: (0..channels).map(|_| Default::default()).collect(),
            outstanding: vec![0; channels],
            counters: TxCounters::default(),
        }
    }

    pub fn policy(&self) -> &TxPolicy {
        &self.policy
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn counters(&self) -> &TxCounters {
        &self.counters
    }

    /// Copies on channel `k` that are waiting or in the MAC.
    pub fn outstanding(&self, k: usize) -> usize {
        self.outstanding[k]
    }

    /// Frames currently stored.
    pub fn len(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.outstanding.iter().all(|&o| o == 0)
    }

    pub fn has_waiting(&self, k: usize) -> bool {
        self.waiting[k].iter().any(|s| !s.is_empty())
    }

    pub fn get(&self, id: FrameId) -> Option<&TxFrame> {
        let idx = id.checked_sub(self.base)? as usize;
        self.entries.get(idx)?.as_ref()
    }

    fn get_mut(&mut self, id: FrameId) -> Result<&mut TxFrame, TxError> {
        let idx = id
            .checked_sub(self.base)
            .ok_or(TxError::UnknownFrame(id))? as usize;
        self.entries
            .get_mut(idx)
            .and_then(Option::as_mut)
            .ok_or(TxError::UnknownFrame(id))
    }

    fn initial_flag(&self) -> FrameFlag {
        if self.policy.d_th == 0 {
            FrameFlag::Undeferrable
        } else {
            FrameFlag::Ready
        }
    }

    /// Appends a frame with a waiting copy on every channel that has room.
    /// A refused frame does not consume its id.
    pub fn enqueue(&mut self, id: FrameId, dest: u16, t_generated: Micros) -> Result<Enqueued, TxError> {
        if let Some(last) = self.last_id {
            if id <= last {
                return Err(TxError::NonIncreasingId { id, last });
            }
        }
        let mut status = Vec::with_capacity(self.channels);
        for k in 0..self.channels {
            if self.outstanding[k] < self.policy.capacity {
                status.push(CopyStatus::Waiting);
            } else {
                status.push(CopyStatus::Overflowed);
            }
        }
        if !status.contains(&CopyStatus::Waiting) {
            self.counters.overruns += 1;
            return Ok(Enqueued::Overrun);
        }
        let flag = self.initial_flag();
        for (k, s) in status.iter().enumerate() {
            match s {
                CopyStatus::Waiting => {
                    self.outstanding[k] += 1;
                    self.waiting[k][flag as usize].insert(id);
                }
                _ => self.counters.overflowed_copies += 1,
            }
        }
        self.last_id = Some(id);
        if self.entries.is_empty() {
            self.base = id;
        }
        while self.base + (self.entries.len() as FrameId) < id {
            self.entries.push_back(None);
        }
        self.entries.push_back(Some(TxFrame {
            id,
            dest,
            t_generated,
            status,
            flag,
        }));
        self.counters.admitted += 1;
        Ok(Enqueued::Admitted)
    }

    fn set_flag(&mut self, id: FrameId, flag: FrameFlag) {
        let Ok(frame) = self.get_mut(id) else { return };
        let old = frame.flag;
        if old == flag {
            return;
        }
        frame.flag = flag;
        let waiting_on: Vec<usize> = frame
            .status
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == CopyStatus::Waiting)
            .map(|(k, _)| k)
            .collect();
        for k in waiting_on {
            self.waiting[k][old as usize].remove(&id);
            self.waiting[k][flag as usize].insert(id);
        }
    }

    /// Picks the next frame for the free MAC on channel `k` and marks its
    /// copy as handed to the MAC.
    pub fn select_next(&mut self, k: usize) -> Option<FrameId> {
        let buckets = &self.waiting[k];
        let id = match self.policy.selection {
            SelectionRule::HeadOfQueue => buckets.iter().filter_map(|b| b.first()).min().copied(),
            SelectionRule::Flags => {
                let picked = buckets.iter().find_map(|b| b.first()).copied();
                if let Some(id) = picked {
                    let head = buckets.iter().filter_map(|b| b.first()).min().copied();
                    if head != Some(id) {
                        self.counters.deferrals += 1;
                    }
                }
                picked
            }
        }?;
        let frame = self.get_mut(id).expect("waiting frame is stored");
        let flag = frame.flag;
        frame.status[k] = CopyStatus::InMac;
        self.waiting[k][flag as usize].remove(&id);
        let new_flag = if self.policy.d_th == 0 {
            FrameFlag::Undeferrable
        } else {
            FrameFlag::Deferrable
        };
        // a frame already undeferrable stays so
        if flag != FrameFlag::Undeferrable {
            self.set_flag(id, new_flag);
        }
        Some(id)
    }

    /// The MAC on channel `k` bumped its retry counter for `id` to `rc`.
    pub fn on_retry(&mut self, _k: usize, id: FrameId, rc: u32) {
        if rc >= self.policy.d_th {
            self.set_flag(id, FrameFlag::Undeferrable);
        }
    }

    /// Cross acknowledgement: `id` was acknowledged on channel `k`.
    /// Returns the channels whose MAC must be asked to abort it.
    pub fn on_xack(&mut self, k: usize, id: FrameId) -> Vec<usize> {
        self.counters.xacks += 1;
        let mode = self.policy.mode;
        if mode == DaMode::Basic {
            return Vec::new();
        }
        let Ok(frame) = self.get_mut(id) else {
            return Vec::new();
        };
        let flag = frame.flag;
        let mut scrubbed = Vec::new();
        let mut abort_on = Vec::new();
        for (g, s) in frame.status.iter_mut().enumerate() {
            if g == k {
                continue;
            }
            match *s {
                CopyStatus::Waiting => {
                    *s = CopyStatus::Removed;
                    scrubbed.push(g);
                }
                CopyStatus::InMac if mode == DaMode::RdaR => abort_on.push(g),
                _ => {}
            }
        }
        for g in scrubbed {
            self.waiting[g][flag as usize].remove(&id);
            self.outstanding[g] -= 1;
            self.counters.removed_copies += 1;
        }
        self.counters.abort_requests += abort_on.len() as u64;
        abort_on
    }

    fn finish_copy(&mut self, k: usize, id: FrameId, status: CopyStatus) -> Result<(), TxError> {
        let frame = self.get_mut(id)?;
        debug_assert_eq!(frame.status[k], CopyStatus::InMac);
        frame.status[k] = status;
        self.outstanding[k] -= 1;
        Ok(())
    }

    fn try_resolve(&mut self, id: FrameId) -> Option<SenderOutcome> {
        let frame = self.get(id)?;
        if frame.status.iter().any(|s| s.is_outstanding()) {
            return None;
        }
        let outcome = if frame.status.contains(&CopyStatus::Delivered) {
            SenderOutcome::Acknowledged
        } else {
            SenderOutcome::Exhausted
        };
        let idx = (id - self.base) as usize;
        self.entries[idx] = None;
        while let Some(None) = self.entries.front() {
            self.entries.pop_front();
            self.base += 1;
        }
        Some(outcome)
    }

    /// The MAC on channel `k` acknowledged `id`.
    pub fn on_delivered(&mut self, k: usize, id: FrameId) -> Result<CompletionEffects, TxError> {
        self.finish_copy(k, id, CopyStatus::Delivered)?;
        let abort_on = self.on_xack(k, id);
        Ok(CompletionEffects {
            abort_on,
            resolved: self.try_resolve(id),
        })
    }

    /// The MAC on channel `k` gave up on `id` (retry limit or abort).
    pub fn on_dropped(&mut self, k: usize, id: FrameId) -> Result<CompletionEffects, TxError> {
        self.finish_copy(k, id, CopyStatus::Discarded)?;
        self.set_flag(id, FrameFlag::Undeferrable);
        Ok(CompletionEffects {
            abort_on: Vec::new(),
            resolved: self.try_resolve(id),
        })
    }
}
