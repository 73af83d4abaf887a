//! Receiver side: duplicate discard and optional sliding-window reordering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tx::FrameId;
use crate::engine::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RxPolicy {
    /// Deliver in id order, waiting for gaps up to the reorder timeout.
    Ordered,
    /// Deliver each id at its first copy.
    Unordered,
}

/// Growable bitset over frame ids.
#[derive(Debug, Clone, Default)]
struct IdSet {
    words: Vec<u64>,
}

impl IdSet {
    fn contains(&self, id: FrameId) -> bool {
        let w = (id / 64) as usize;
        self.words.get(w).is_some_and(|x| x >> (id % 64) & 1 == 1)
    }

    fn insert(&mut self, id: FrameId) {
        let w = (id / 64) as usize;
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << (id % 64);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Accepted {
    /// Frames handed to the user, in delivery order.
    pub delivered: Vec<(FrameId, Micros)>,
    /// A reorder timer must be started for this id.
    pub start_timer: Option<FrameId>,
    /// The copy was a duplicate of an already delivered or buffered frame.
    pub duplicate: bool,
    /// The copy arrived after its id had been skipped by a timeout flush.
    pub late: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Flushed {
    pub delivered: Vec<(FrameId, Micros)>,
    /// Ids given up for good.
    pub skipped: Vec<FrameId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RxCounters {
    pub copies: u64,
    pub delivered: u64,
    pub duplicates: u64,
    pub late: u64,
    pub skipped: u64,
    pub timeouts: u64,
}

/// Per-link receive window. Buffered entries remember their arrival time.
#[derive(Debug, Clone)]
pub struct RxWindow {
    policy: RxPolicy,
    next_expected: FrameId,
    buffer: BTreeMap<FrameId, Micros>,
    delivered: IdSet,
    counters: RxCounters,
}

impl RxWindow {
    /// `first_id` is the id the ordered window waits for first.
    pub fn new(policy: RxPolicy, first_id: FrameId) -> Self {
        Self {
            policy,
            next_expected: first_id,
            buffer: BTreeMap::new(),
            delivered: IdSet::default(),
            counters: RxCounters::default(),
        }
    }

    pub fn policy(&self) -> RxPolicy {
        self.policy
    }

    pub fn next_expected(&self) -> FrameId {
        self.next_expected
    }

    pub fn buffered(&self) -> impl Iterator<Item = FrameId> + '_ {
        self.buffer.keys().copied()
    }

    pub fn counters(&self) -> &RxCounters {
        &self.counters
    }

    pub fn was_delivered(&self, id: FrameId) -> bool {
        self.delivered.contains(id)
    }

    fn deliver(&mut self, id: FrameId, now: Micros, out: &mut Vec<(FrameId, Micros)>) {
        self.delivered.insert(id);
        self.counters.delivered += 1;
        out.push((id, now));
    }

    /// Extracts the contiguous run starting at `next_expected`.
    fn drain_run(&mut self, now: Micros, out: &mut Vec<(FrameId, Micros)>) {
        while self.buffer.remove(&self.next_expected).is_some() {
            let id = self.next_expected;
            self.deliver(id, now, out);
            self.next_expected += 1;
        }
    }

    /// An uncorrupted copy of `id` arrived at `now`.
    pub fn accept(&mut self, id: FrameId, now: Micros) -> Accepted {
        self.counters.copies += 1;
        let mut res = Accepted::default();
        if self.delivered.contains(id) || self.buffer.contains_key(&id) {
            self.counters.duplicates += 1;
            res.duplicate = true;
            return res;
        }
        match self.policy {
            RxPolicy::Unordered => self.deliver(id, now, &mut res.delivered),
            RxPolicy::Ordered => {
                if id < self.next_expected {
                    self.counters.late += 1;
                    res.late = true;
                } else if id == self.next_expected {
                    self.buffer.insert(id, now);
                    self.drain_run(now, &mut res.delivered);
                } else {
                    self.buffer.insert(id, now);
                    res.start_timer = Some(id);
                }
            }
        }
        res
    }

    /// The reorder timer of `y` expired. A timer whose frame already left
    /// the buffer is ignored.
    pub fn on_timeout(&mut self, y: FrameId, now: Micros) -> Flushed {
        let mut res = Flushed::default();
        if !self.buffer.contains_key(&y) {
            return res;
        }
        self.counters.timeouts += 1;
        let below: Vec<FrameId> = self.buffer.range(..=y).map(|(&id, _)| id).collect();
        for id in below {
            for lost in self.next_expected..id {
                res.skipped.push(lost);
            }
            self.buffer.remove(&id);
            self.deliver(id, now, &mut res.delivered);
            self.next_expected = id + 1;
        }
        self.drain_run(now, &mut res.delivered);
        self.counters.skipped += res.skipped.len() as u64;
        res
    }
}
