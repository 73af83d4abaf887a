//! Deterministic discrete-event scheduler.
//!
//! Events are ordered by `(fire_time, seq)`: equal fire times dequeue in
//! insertion order. Virtual time is an integer number of microseconds.

use std::collections::BTreeMap;

use thiserror::Error;

/// Virtual time in microseconds.
pub type Micros = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("event scheduled in the past (fire_time {fire_time} < now {now})")]
    InPast { fire_time: Micros, now: Micros },
    #[error("run_until({t_end}) is before the current time {now}")]
    EndInPast { t_end: Micros, now: Micros },
}

/// Handle returned by [`Engine::schedule`], used to cancel a pending event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle {
    fire_time: Micros,
    seq: u64,
}

impl EventHandle {
    pub fn fire_time(&self) -> Micros {
        self.fire_time
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }
}

/// Pending-event set plus the virtual clock.
#[derive(Debug)]
pub struct Engine<E> {
    now: Micros,
    next_seq: u64,
    pending: BTreeMap<(Micros, u64), E>,
    processed: u64,
}

impl<E> Default for Engine<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Engine<E> {
    pub fn new() -> Self {
        Self {
            now: 0,
            next_seq: 0,
            pending: BTreeMap::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    /// Number of events dispatched so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn schedule(&mut self, fire_time: Micros, event: E) -> Result<EventHandle, EngineError> {
        if fire_time < self.now {
            return Err(EngineError::InPast {
                fire_time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.insert((fire_time, seq), event);
        Ok(EventHandle { fire_time, seq })
    }

    /// Schedules `delay` microseconds from now. Cannot fail.
    pub fn schedule_in(&mut self, delay: Micros, event: E) -> EventHandle {
        let fire_time = self.now + delay;
        self.schedule(fire_time, event)
            .expect("relative schedule is never in the past")
    }

    /// Returns true iff the event was still pending and has been removed.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending
            .remove(&(handle.fire_time, handle.seq))
            .is_some()
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains_key(&(handle.fire_time, handle.seq))
    }

    /// Fire time of the earliest pending event.
    pub fn peek_time(&self) -> Option<Micros> {
        self.pending.keys().next().map(|&(t, _)| t)
    }

    /// Pops the earliest event with `fire_time <= limit`, advancing the clock.
    pub fn pop_until(&mut self, limit: Micros) -> Option<(Micros, E)> {
        let entry = self.pending.first_entry()?;
        let (t, _) = *entry.key();
        if t > limit {
            return None;
        }
        let event = entry.remove();
        debug_assert!(t >= self.now);
        self.now = t;
        self.processed += 1;
        Some((t, event))
    }

    /// Processes every event with `fire_time <= t_end` in `(fire_time, seq)`
    /// order, then sets the clock to `t_end`.
    pub fn run_until<F>(&mut self, t_end: Micros, mut handler: F) -> Result<(), EngineError>
    where
        F: FnMut(&mut Self, E),
    {
        if t_end < self.now {
            return Err(EngineError::EndInPast {
                t_end,
                now: self.now,
            });
        }
        while let Some((_, event)) = self.pop_until(t_end) {
            handler(self, event);
        }
        self.now = t_end;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(engine: &mut Engine<u32>, t_end: Micros) -> Vec<u32> {
        let mut out = Vec::new();
        engine.run_until(t_end, |_, e| out.push(e)).unwrap();
        out
    }

    #[test]
    fn same_instant_before_next_microsecond() {
        let mut e = Engine::new();
        e.schedule(1, 2).unwrap();
        e.schedule(0, 1).unwrap();
        assert_eq!(drain(&mut e, 10), vec![1, 2]);
    }

    #[test]
    fn ties_break_by_insertion_order() {
        let mut e = Engine::new();
        let a = e.schedule(100, 5).unwrap();
        let b = e.schedule(100, 6).unwrap();
        assert!(a.seq() < b.seq());
        assert_eq!(drain(&mut e, 100), vec![5, 6]);
    }

    #[test]
    fn cancelled_event_never_fires() {
        let mut e = Engine::new();
        let h = e.schedule(10, 1).unwrap();
        e.schedule(20, 2).unwrap();
        assert!(e.cancel(h));
        assert!(!e.cancel(h), "double cancel");
        assert_eq!(drain(&mut e, 30), vec![2]);
    }

    #[test]
    fn cancel_after_fire_is_false() {
        let mut e = Engine::new();
        let h = e.schedule(10, 1).unwrap();
        drain(&mut e, 10);
        assert!(!e.cancel(h));
    }

    #[test]
    fn rejects_past_events() {
        let mut e: Engine<u32> = Engine::new();
        e.run_until(50, |_, _| {}).unwrap();
        assert_eq!(
            e.schedule(49, 0),
            Err(EngineError::InPast {
                fire_time: 49,
                now: 50
            })
        );
        assert!(e.schedule(50, 0).is_ok());
        assert!(e.run_until(10, |_, _| {}).is_err());
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut e: Engine<u32> = Engine::new();
        e.run_until(1234, |_, _| {}).unwrap();
        assert_eq!(e.now(), 1234);
    }

    #[test]
    fn chained_event_fires_within_same_instant() {
        let mut e = Engine::new();
        e.schedule(7, 1).unwrap();
        e.schedule(8, 3).unwrap();
        let mut seen = Vec::new();
        e.run_until(10, |eng, ev| {
            seen.push((eng.now(), ev));
            if ev == 1 {
                eng.schedule_in(0, 2);
            }
        })
        .unwrap();
        assert_eq!(seen, vec![(7, 1), (7, 2), (8, 3)]);
    }

    #[test]
    fn events_after_horizon_stay_pending() {
        let mut e = Engine::new();
        e.schedule(5, 1).unwrap();
        e.schedule(15, 2).unwrap();
        assert_eq!(drain(&mut e, 10), vec![1]);
        assert_eq!(e.pending_len(), 1);
        assert_eq!(e.peek_time(), Some(15));
    }
}
