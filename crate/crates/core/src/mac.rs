//! IEEE 802.11 DCF transmit automaton of one sub-station.
//!
//! The automaton does not own the medium. The caller feeds it carrier
//! transitions and timer expiries, and performs the air transmission when
//! the automaton asks for it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EventHandle, Micros};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacTimings {
    pub slot: Micros,
    pub sifs: Micros,
    pub difs: Micros,
    pub ack_airtime: Micros,
    pub ack_timeout: Micros,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    /// Draw a backoff after every completed frame even with an empty queue.
    /// When off, only a frame handed over at the completion instant contends.
    pub post_backoff: bool,
}

impl Default for MacTimings {
    fn default() -> Self {
        Self {
            slot: 20,
            sifs: 10,
            difs: 50,
            ack_airtime: 34,
            ack_timeout: 10 + 34 + 20,
            cw_min: 15,
            cw_max: 1023,
            retry_limit: 7,
            post_backoff: true,
        }
    }
}

impl MacTimings {
    pub fn validate(&self) -> Result<(), String> {
        if self.slot == 0 {
            return Err("slot must be positive".into());
        }
        if self.difs != self.sifs + 2 * self.slot {
            return Err(format!(
                "difs ({}) must equal sifs + 2*slot ({})",
                self.difs,
                self.sifs + 2 * self.slot
            ));
        }
        if self.ack_timeout < self.sifs + self.ack_airtime {
            return Err("ack_timeout shorter than sifs + ack airtime".into());
        }
        if self.cw_min > self.cw_max {
            return Err("cw_min exceeds cw_max".into());
        }
        if self.retry_limit == 0 {
            return Err("retry_limit must be at least 1".into());
        }
        Ok(())
    }

    /// Next contention-window value on the binary exponential ladder.
    pub fn next_cw(&self, cw: u32) -> u32 {
        (2 * (cw + 1) - 1).min(self.cw_max)
    }
}

/// What the MAC needs to know about a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacFrame {
    pub id: u64,
    pub airtime: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacState {
    Idle,
    Deferring,
    Backoff,
    Transmitting,
    AwaitingAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacTimer {
    Countdown,
    AckTimeout,
}

/// Timer service the automaton schedules its expiries on.
pub trait MacTimers {
    fn schedule(&mut self, at: Micros, timer: MacTimer) -> EventHandle;
    fn cancel(&mut self, handle: EventHandle) -> bool;
}

/// Carrier state as seen at the current instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Medium {
    Idle { since: Micros },
    Busy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacOutcome {
    Delivered { frame: MacFrame, attempts: u32 },
    Discarded { frame: MacFrame, attempts: u32 },
    Aborted { frame: MacFrame, attempts: u32 },
}

impl MacOutcome {
    pub fn frame(&self) -> MacFrame {
        match *self {
            MacOutcome::Delivered { frame, .. }
            | MacOutcome::Discarded { frame, .. }
            | MacOutcome::Aborted { frame, .. } => frame,
        }
    }

    pub fn attempts(&self) -> u32 {
        match *self {
            MacOutcome::Delivered { attempts, .. }
            | MacOutcome::Discarded { attempts, .. }
            | MacOutcome::Aborted { attempts, .. } => attempts,
        }
    }
}

/// Caller must put the current frame on air now.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacStep {
    Wait,
    Transmit(MacFrame),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeoutOutcome {
    Retrying { rc: u32 },
    Done(MacOutcome),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MacError {
    #[error("MAC already holds frame {current}")]
    Busy { current: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MacStats {
    pub air_attempts: u64,
    pub delivered: u64,
    pub discarded: u64,
    pub aborted: u64,
    pub stray_acks: u64,
    /// Largest number of air attempts spent on a single frame.
    pub max_attempts: u32,
}

#[derive(Debug, Clone, Copy)]
struct Countdown {
    from: Micros,
    handle: EventHandle,
}

#[derive(Debug, Clone)]
pub struct Mac {
    timings: MacTimings,
    state: MacState,
    frame: Option<MacFrame>,
    cw: u32,
    rc: u32,
    attempts: u32,
    abort_requested: bool,
    /// Remaining slots of a pending backoff (including post-backoff).
    backoff: Option<u32>,
    countdown: Option<Countdown>,
    ack_timer: Option<EventHandle>,
    finished_at: Option<Micros>,
    stats: MacStats,
}

impl Mac {
    pub fn new(timings: MacTimings) -> Self {
        Self {
            timings,
            state: MacState::Idle,
            frame: None,
            cw: timings.cw_min,
            rc: 0,
            attempts: 0,
            abort_requested: false,
            backoff: None,
            countdown: None,
            ack_timer: None,
            finished_at: None,
            stats: MacStats::default(),
        }
    }

    pub fn timings(&self) -> &MacTimings {
        &self.timings
    }

    pub fn state(&self) -> MacState {
        self.state
    }

    pub fn current_frame(&self) -> Option<MacFrame> {
        self.frame
    }

    pub fn is_free(&self) -> bool {
        self.frame.is_none()
    }

    pub fn cw(&self) -> u32 {
        self.cw
    }

    pub fn rc(&self) -> u32 {
        self.rc
    }

    pub fn abort_requested(&self) -> bool {
        self.abort_requested
    }

    pub fn backoff_remaining(&self) -> Option<u32> {
        self.backoff
    }

    pub fn stats(&self) -> &MacStats {
        &self.stats
    }

    fn grid_start(&self, now: Micros, idle_since: Micros) -> Micros {
        let base = idle_since + self.timings.difs;
        if now <= base {
            base
        } else {
            let slot = self.timings.slot;
            base + (now - base).div_ceil(slot) * slot
        }
    }

    fn start_countdown<T: MacTimers>(&mut self, now: Micros, idle_since: Micros, timers: &mut T) {
        debug_assert!(self.countdown.is_none());
        let Some(slots) = self.backoff else { return };
        let from = self.grid_start(now, idle_since);
        let handle = timers.schedule(
            from + Micros::from(slots) * self.timings.slot,
            MacTimer::Countdown,
        );
        self.countdown = Some(Countdown { from, handle });
    }

    fn draw_backoff(&mut self, rng: &mut RngStream) {
        self.backoff = Some(rng.uniform_inclusive(self.cw));
    }

    fn transmit(&mut self) -> MacStep {
        let frame = self.frame.expect("transmit without a frame");
        self.state = MacState::Transmitting;
        self.attempts += 1;
        self.stats.air_attempts += 1;
        self.stats.max_attempts = self.stats.max_attempts.max(self.attempts);
        MacStep::Transmit(frame)
    }

    /// Hands a frame to the MAC.
    pub fn submit<T: MacTimers>(
        &mut self,
        frame: MacFrame,
        now: Micros,
        medium: Medium,
        rng: &mut RngStream,
        timers: &mut T,
    ) -> Result<MacStep, MacError> {
        if let Some(current) = self.frame {
            return Err(MacError::Busy { current: current.id });
        }
        self.frame = Some(frame);
        self.rc = 0;
        self.attempts = 0;
        self.abort_requested = false;

        if self.backoff.is_some() {
            // post-backoff still running; the frame waits for it
            self.state = MacState::Backoff;
            return Ok(MacStep::Wait);
        }
        if self.finished_at.take() == Some(now) {
            // back-to-back frame without post-backoff
            self.state = MacState::Backoff;
            self.draw_backoff(rng);
            if let Medium::Idle { since } = medium {
                self.start_countdown(now, since, timers);
            }
            return Ok(MacStep::Wait);
        }
        match medium {
            Medium::Idle { since } if now >= since + self.timings.difs => Ok(self.transmit()),
            Medium::Idle { since } => {
                self.state = MacState::Deferring;
                self.backoff = Some(0);
                self.start_countdown(now, since, timers);
                Ok(MacStep::Wait)
            }
            Medium::Busy => {
                self.state = MacState::Backoff;
                self.draw_backoff(rng);
                Ok(MacStep::Wait)
            }
        }
    }

    /// The medium turned busy at `now`: freeze the countdown.
    pub fn on_medium_busy<T: MacTimers>(&mut self, now: Micros, rng: &mut RngStream, timers: &mut T) {
        let Some(cd) = self.countdown else { return };
        let slots = self.backoff.expect("countdown without backoff");
        let fire = cd.from + Micros::from(slots) * self.timings.slot;
        if fire == now {
            // counter reaches zero in this very slot: transmits anyway
            return;
        }
        timers.cancel(cd.handle);
        self.countdown = None;
        if now > cd.from {
            let elapsed = ((now - cd.from) / self.timings.slot) as u32;
            self.backoff = Some(slots - elapsed.min(slots));
        }
        if self.state == MacState::Deferring {
            // medium got busy before DIFS elapsed: contend with a backoff
            self.state = MacState::Backoff;
            self.draw_backoff(rng);
        }
    }

    /// The medium turned idle at `now`: resume the countdown after DIFS.
    pub fn on_medium_idle<T: MacTimers>(&mut self, now: Micros, timers: &mut T) {
        if self.countdown.is_none()
            && self.backoff.is_some()
            && matches!(self.state, MacState::Idle | MacState::Backoff)
        {
            self.start_countdown(now, now, timers);
        }
    }

    /// Countdown reached zero.
    pub fn on_countdown(&mut self) -> MacStep {
        self.countdown = None;
        self.backoff = None;
        match self.state {
            MacState::Backoff | MacState::Deferring if self.frame.is_some() => self.transmit(),
            _ => {
                self.state = MacState::Idle;
                MacStep::Wait
            }
        }
    }

    /// The data frame left the air; the ACK timeout starts.
    pub fn on_tx_end<T: MacTimers>(&mut self, now: Micros, timers: &mut T) {
        debug_assert_eq!(self.state, MacState::Transmitting);
        self.state = MacState::AwaitingAck;
        self.ack_timer = Some(timers.schedule(now + self.timings.ack_timeout, MacTimer::AckTimeout));
    }

    fn finish<T: MacTimers>(
        &mut self,
        now: Micros,
        medium: Medium,
        rng: &mut RngStream,
        timers: &mut T,
    ) -> (MacFrame, u32) {
        let frame = self.frame.take().expect("finish without a frame");
        let attempts = self.attempts;
        self.state = MacState::Idle;
        self.cw = self.timings.cw_min;
        self.rc = 0;
        self.attempts = 0;
        self.abort_requested = false;
        if self.timings.post_backoff {
            self.draw_backoff(rng);
            if let Medium::Idle { since } = medium {
                self.start_countdown(now, since, timers);
            }
        } else {
            self.finished_at = Some(now);
        }
        (frame, attempts)
    }

    /// A correct ACK for `frame_id` was received.
    pub fn on_ack_received<T: MacTimers>(
        &mut self,
        frame_id: u64,
        now: Micros,
        medium: Medium,
        rng: &mut RngStream,
        timers: &mut T,
    ) -> Option<MacOutcome> {
        let matches = self.state == MacState::AwaitingAck && self.frame.is_some_and(|f| f.id == frame_id);
        if !matches {
            self.stats.stray_acks += 1;
            return None;
        }
        if let Some(h) = self.ack_timer.take() {
            timers.cancel(h);
        }
        let (frame, attempts) = self.finish(now, medium, rng, timers);
        self.stats.delivered += 1;
        Some(MacOutcome::Delivered { frame, attempts })
    }

    /// ACK timeout expired without an ACK.
    pub fn on_ack_timeout<T: MacTimers>(
        &mut self,
        now: Micros,
        medium: Medium,
        rng: &mut RngStream,
        timers: &mut T,
    ) -> TimeoutOutcome {
        debug_assert_eq!(self.state, MacState::AwaitingAck);
        self.ack_timer = None;
        if self.abort_requested {
            let (frame, attempts) = self.finish(now, medium, rng, timers);
            self.stats.aborted += 1;
            return TimeoutOutcome::Done(MacOutcome::Aborted { frame, attempts });
        }
        self.rc += 1;
        if self.rc >= self.timings.retry_limit {
            let (frame, attempts) = self.finish(now, medium, rng, timers);
            self.stats.discarded += 1;
            return TimeoutOutcome::Done(MacOutcome::Discarded { frame, attempts });
        }
        self.cw = self.timings.next_cw(self.cw);
        self.state = MacState::Backoff;
        self.draw_backoff(rng);
        if let Medium::Idle { since } = medium {
            self.start_countdown(now, since, timers);
        }
        TimeoutOutcome::Retrying { rc: self.rc }
    }

    /// Forces the retry counter to the limit for `frame_id`: the attempt in
    /// progress (or about to start) completes, then the frame is dropped
    /// unless that attempt is acknowledged.
    pub fn request_abort(&mut self, frame_id: u64) -> bool {
        match self.frame {
            Some(f) if f.id == frame_id => {
                self.abort_requested = true;
                true
            }
            _ => false,
        }
    }
}
