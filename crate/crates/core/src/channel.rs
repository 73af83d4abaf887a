//! Radio medium of one channel: Gilbert-Elliott disturbance, collision
//! arbitration and carrier sense.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::engine::Micros;
use crate::rng::RngStream;

/// Two-state disturbance parameters; probabilities are per 1 µs step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeParams {
    pub p_gb: f64,
    pub p_bg: f64,
    pub p_g: f64,
    pub p_b: f64,
}

impl GeParams {
    pub const BENIGN: GeParams = GeParams {
        p_gb: 1.74e-4,
        p_bg: 1.74e-2,
        p_g: 0.0,
        p_b: 7.5e-2,
    };

    pub const HOSTILE: GeParams = GeParams {
        p_gb: 1.74e-4,
        p_bg: 1.74e-3,
        p_g: 0.0,
        p_b: 7.5e-2,
    };

    /// No disturbance at all.
    pub const CLEAN: GeParams = GeParams {
        p_gb: 0.0,
        p_bg: 1.0,
        p_g: 0.0,
        p_b: 0.0,
    };

    /// Long-run fraction of steps spent in the bad state.
    pub fn stationary_bad(&self) -> f64 {
        let denom = self.p_gb + self.p_bg;
        if denom == 0.0 {
            0.0
        } else {
            self.p_gb / denom
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("p_gb", self.p_gb),
            ("p_bg", self.p_bg),
            ("p_g", self.p_g),
            ("p_b", self.p_b),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} is not a probability"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeState {
    Good,
    Bad,
}

/// Probability that `bits` bits all survive with per-bit error `p_bit`.
pub fn per_step_bit_survival(p_bit: f64, bits: u32) -> f64 {
    (1.0 - p_bit).powi(bits as i32)
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    start: Micros,
    end: Micros,
    state: GeState,
}

/// Gilbert-Elliott process advanced lazily by whole sojourns.
///
/// The state path depends only on the initial state and `state_rng`; bit
/// error draws use a separate stream so queries never perturb the path.
#[derive(Debug)]
pub struct GilbertElliott {
    params: GeParams,
    segments: VecDeque<Segment>,
    state_rng: RngStream,
    bit_rng: RngStream,
    /// Sum of bad-state steps over every generated segment.
    bad_steps_total: u64,
}

impl GilbertElliott {
    pub fn new(params: GeParams, state_rng: RngStream, bit_rng: RngStream) -> Self {
        let mut ge = Self {
            params,
            segments: VecDeque::new(),
            state_rng,
            bit_rng,
            bad_steps_total: 0,
        };
        ge.push_segment(0, GeState::Good);
        ge
    }

    pub fn params(&self) -> &GeParams {
        &self.params
    }

    fn push_segment(&mut self, start: Micros, state: GeState) {
        let leave = match state {
            GeState::Good => self.params.p_gb,
            GeState::Bad => self.params.p_bg,
        };
        let len = self.state_rng.sojourn(leave).unwrap_or(u64::MAX / 2);
        let end = start.saturating_add(len);
        if state == GeState::Bad {
            self.bad_steps_total += end - start;
        }
        self.segments.push_back(Segment { start, end, state });
    }

    /// Generates the state path up to (excluding) step `t`.
    pub fn advance_to(&mut self, t: Micros) {
        while self.segments.back().map_or(true, |s| s.end < t) {
            let last = *self.segments.back().expect("never empty");
            let next = match last.state {
                GeState::Good => GeState::Bad,
                GeState::Bad => GeState::Good,
            };
            self.push_segment(last.end, next);
        }
    }

    /// Drops history that ends at or before `t`; later queries must not
    /// start before `t`.
    pub fn forget_before(&mut self, t: Micros) {
        while self.segments.len() > 1 && self.segments.front().is_some_and(|s| s.end <= t) {
            self.segments.pop_front();
        }
    }

    pub fn state_at(&mut self, t: Micros) -> GeState {
        self.advance_to(t + 1);
        self.segments
            .iter()
            .find(|s| s.start <= t && t < s.end)
            .map(|s| s.state)
            .expect("state history covers t")
    }

    /// Steps spent in `(Good, Bad)` over `[from, to)`.
    pub fn occupancy(&mut self, from: Micros, to: Micros) -> (u64, u64) {
        self.advance_to(to);
        let (mut good, mut bad) = (0, 0);
        for s in &self.segments {
            let lo = s.start.max(from);
            let hi = s.end.min(to);
            if lo < hi {
                match s.state {
                    GeState::Good => good += hi - lo,
                    GeState::Bad => bad += hi - lo,
                }
            }
        }
        (good, bad)
    }

    /// Total bad steps generated so far (covers `[0, horizon)`, possibly
    /// extending past it by one sojourn).
    pub fn bad_steps_generated(&self) -> u64 {
        self.bad_steps_total
    }

    /// Probability that a transmission over `[from, to)` with `bits_per_step`
    /// bits per µs arrives without bit errors.
    pub fn survival(&mut self, from: Micros, to: Micros, bits_per_step: u32) -> f64 {
        let (good, bad) = self.occupancy(from, to);
        let pg = per_step_bit_survival(self.params.p_g, bits_per_step);
        let pb = per_step_bit_survival(self.params.p_b, bits_per_step);
        pg.powf(good as f64) * pb.powf(bad as f64)
    }

    /// Draws whether a transmission over `[from, to)` suffers bit errors.
    pub fn corrupts(&mut self, from: Micros, to: Micros, bits_per_step: u32) -> bool {
        let survival = self.survival(from, to, bits_per_step);
        if survival >= 1.0 {
            return false;
        }
        if survival <= 0.0 {
            return true;
        }
        self.bit_rng.unit() >= survival
    }
}

/// Identifier of a transmission on a channel.
pub type TxId = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub id: TxId,
    pub source: usize,
    pub t_start: Micros,
    pub t_end: Micros,
    pub collided: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Collided,
    BitErrors,
}

/// Result of registering a transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxStart {
    pub id: TxId,
    /// The medium went from idle to busy with this transmission.
    pub became_busy: bool,
}

/// Result of retiring a transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxEnd {
    pub verdict: Verdict,
    /// The medium is idle after this transmission left it.
    pub became_idle: bool,
}

/// One collision domain with its disturbance process.
#[derive(Debug)]
pub struct Channel {
    index: usize,
    disturbance: GilbertElliott,
    bits_per_step: u32,
    max_airtime: Micros,
    active: Vec<Transmission>,
    next_tx: TxId,
    idle_since: Micros,
    busy_time: Micros,
    busy_since: Option<Micros>,
    collisions: u64,
}

impl Channel {
    pub fn new(
        index: usize,
        disturbance: GilbertElliott,
        bits_per_step: u32,
        max_airtime: Micros,
    ) -> Self {
        Self {
            index,
            disturbance,
            bits_per_step,
            max_airtime,
            active: Vec::new(),
            next_tx: 0,
            idle_since: 0,
            busy_time: 0,
            busy_since: None,
            collisions: 0,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn disturbance(&mut self) -> &mut GilbertElliott {
        &mut self.disturbance
    }

    /// True iff some transmission covers `t` (half-open intervals).
    pub fn carrier_busy(&self, t: Micros) -> bool {
        self.active.iter().any(|tx| tx.t_start <= t && t < tx.t_end)
    }

    /// Instant since which the medium has been idle, or `None` while busy.
    pub fn idle_since(&self) -> Option<Micros> {
        if self.active.is_empty() {
            Some(self.idle_since)
        } else {
            None
        }
    }

    pub fn busy_until(&self, now: Micros) -> Micros {
        self.active.iter().map(|tx| tx.t_end).max().unwrap_or(now)
    }

    pub fn active(&self) -> &[Transmission] {
        &self.active
    }

    pub fn busy_time(&self) -> Micros {
        self.busy_time
    }

    pub fn collisions(&self) -> u64 {
        self.collisions
    }

    /// Registers a transmission over `[now, now + airtime)`. Every transmission
    /// overlapping it is marked collided, including the new one.
    pub fn begin_transmission(&mut self, now: Micros, source: usize, airtime: Micros) -> TxStart {
        let id = self.next_tx;
        self.next_tx += 1;
        let became_busy = self.active.is_empty();
        let mut tx = Transmission {
            id,
            source,
            t_start: now,
            t_end: now + airtime,
            collided: false,
        };
        for other in self.active.iter_mut().filter(|o| o.t_end > now) {
            if !other.collided {
                self.collisions += 1;
            }
            other.collided = true;
            tx.collided = true;
        }
        if tx.collided {
            self.collisions += 1;
        }
        if became_busy {
            self.busy_since = Some(now);
        }
        self.active.push(tx);
        TxStart { id, became_busy }
    }

    /// Retires transmission `id` at its end time and decides its fate.
    pub fn end_transmission(&mut self, now: Micros, id: TxId) -> TxEnd {
        let pos = self
            .active
            .iter()
            .position(|tx| tx.id == id)
            .expect("ending an unknown transmission");
        let tx = self.active.swap_remove(pos);
        debug_assert_eq!(tx.t_end, now);
        let verdict = self.corruption_verdict(&tx);
        let became_idle = self.active.is_empty();
        if became_idle {
            self.idle_since = now;
            if let Some(since) = self.busy_since.take() {
                self.busy_time += now - since;
            }
        }
        TxEnd {
            verdict,
            became_idle,
        }
    }

    /// Collided if marked, otherwise bit errors drawn from the disturbance
    /// process over the transmission interval.
    pub fn corruption_verdict(&mut self, tx: &Transmission) -> Verdict {
        if tx.collided {
            return Verdict::Collided;
        }
        let corrupted = self
            .disturbance
            .corrupts(tx.t_start, tx.t_end, self.bits_per_step);
        self.disturbance
            .forget_before(tx.t_end.saturating_sub(self.max_airtime));
        if corrupted {
            Verdict::BitErrors
        } else {
            Verdict::Ok
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ge(params: GeParams, seed: u64) -> GilbertElliott {
        GilbertElliott::new(
            params,
            RngStream::new(seed, "ge/state"),
            RngStream::new(seed, "ge/bits"),
        )
    }

    fn channel(params: GeParams) -> Channel {
        Channel::new(0, ge(params, 1), 54, 254)
    }

    #[test]
    fn survival_closed_form() {
        assert_eq!(per_step_bit_survival(0.0, 54), 1.0);
        assert_eq!(per_step_bit_survival(1.0, 54), 0.0);
        assert_eq!(per_step_bit_survival(1.0, 0), 1.0);
        // 0.925^54 by repeated multiplication
        let mut direct = 1.0f64;
        for _ in 0..54 {
            direct *= 0.925;
        }
        assert!((per_step_bit_survival(7.5e-2, 54) - direct).abs() < 1e-15);
        assert!((per_step_bit_survival(7.5e-2, 54) - 0.014_85).abs() < 1e-5);
    }

    #[test]
    fn survival_matches_per_bit_monte_carlo() {
        let mut rng = RngStream::new(11, "mc");
        let trials = 400_000;
        let ok = (0..trials)
            .filter(|_| (0..54).all(|_| rng.unit() >= 7.5e-2))
            .count();
        let est = ok as f64 / trials as f64;
        let exact = per_step_bit_survival(7.5e-2, 54);
        let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!((est - exact).abs() < 5.0 * sigma, "{est} vs {exact}");
    }

    #[test]
    fn idle_channel_not_busy() {
        let c = channel(GeParams::CLEAN);
        assert!(!c.carrier_busy(0));
        assert_eq!(c.idle_since(), Some(0));
    }

    #[test]
    fn busy_during_interferer_frame_and_free_at_end() {
        let mut c = channel(GeParams::CLEAN);
        let s = c.begin_transmission(100, 1, 254);
        assert!(s.became_busy);
        assert!(c.carrier_busy(100));
        assert!(c.carrier_busy(353));
        assert!(!c.carrier_busy(354));
        assert_eq!(c.busy_until(100), 354);
        let end = c.end_transmission(354, s.id);
        assert_eq!(end.verdict, Verdict::Ok);
        assert!(end.became_idle);
        assert_eq!(c.idle_since(), Some(354));
        assert_eq!(c.busy_time(), 254);
    }

    #[test]
    fn overlap_by_one_microsecond_collides_both() {
        let mut c = channel(GeParams::CLEAN);
        let a = c.begin_transmission(0, 1, 38);
        let b = c.begin_transmission(37, 2, 38);
        assert!(!b.became_busy);
        assert_eq!(c.end_transmission(38, a.id).verdict, Verdict::Collided);
        assert_eq!(c.end_transmission(75, b.id).verdict, Verdict::Collided);
    }

    #[test]
    fn nested_transmission_collides_both() {
        let mut c = channel(GeParams::CLEAN);
        let a = c.begin_transmission(0, 1, 254);
        let b = c.begin_transmission(100, 2, 38);
        assert_eq!(c.end_transmission(138, b.id).verdict, Verdict::Collided);
        let end = c.end_transmission(254, a.id);
        assert_eq!(end.verdict, Verdict::Collided);
        assert!(end.became_idle);
    }

    #[test]
    fn back_to_back_does_not_collide() {
        let mut c = channel(GeParams::CLEAN);
        let a = c.begin_transmission(0, 1, 38);
        // starts exactly at the end of `a`, before `a` is retired
        let b = c.begin_transmission(38, 2, 38);
        assert_eq!(c.end_transmission(38, a.id).verdict, Verdict::Ok);
        assert_eq!(c.end_transmission(76, b.id).verdict, Verdict::Ok);
    }

    #[test]
    fn certain_bit_error_in_bad_state() {
        let always_bad = GeParams {
            p_gb: 1.0,
            p_bg: 0.0,
            p_g: 0.0,
            p_b: 1.0,
        };
        let mut c = channel(always_bad);
        // step 0 is good, every later step is bad
        let a = c.begin_transmission(10, 1, 38);
        assert_eq!(c.end_transmission(48, a.id).verdict, Verdict::BitErrors);
    }

    #[test]
    fn good_state_without_errors_is_clean() {
        let never_bad = GeParams {
            p_gb: 0.0,
            p_bg: 1.0,
            p_g: 0.0,
            p_b: 1.0,
        };
        let mut c = channel(never_bad);
        for i in 0..100 {
            let a = c.begin_transmission(i * 1000, 1, 254);
            assert_eq!(c.end_transmission(i * 1000 + 254, a.id).verdict, Verdict::Ok);
        }
    }

    #[test]
    fn stationary_values() {
        assert!((GeParams::BENIGN.stationary_bad() - 0.009_90).abs() < 1e-5);
        assert!((GeParams::HOSTILE.stationary_bad() - 0.090_91).abs() < 1e-5);
    }

    #[test]
    fn state_path_is_independent_of_queries() {
        let mut a = ge(GeParams::HOSTILE, 9);
        let mut b = ge(GeParams::HOSTILE, 9);
        // `a` is queried for corruption along the way, `b` is not
        for i in 0..200 {
            a.corrupts(i * 500, i * 500 + 254, 54);
        }
        assert_eq!(a.occupancy(0, 100_000), b.occupancy(0, 100_000));
    }

    #[test]
    fn verdict_replays_under_same_seed() {
        let run = || {
            let mut c = Channel::new(0, ge(GeParams::HOSTILE, 5), 54, 254);
            (0..500)
                .map(|i| {
                    let s = c.begin_transmission(i * 400, 1, 254);
                    c.end_transmission(i * 400 + 254, s.id).verdict
                })
                .collect::<Vec<_>>()
        };
        let first = run();
        assert_eq!(first, run());
        assert!(first.contains(&Verdict::BitErrors));
        assert!(first.contains(&Verdict::Ok));
    }

    #[test]
    fn queries_may_reach_back_one_airtime() {
        let mut g = ge(GeParams::HOSTILE, 2);
        let before = g.occupancy(1000, 1254);
        g.advance_to(50_000);
        g.forget_before(49_746);
        g.advance_to(60_000);
        let mut h = ge(GeParams::HOSTILE, 2);
        assert_eq!(before, h.occupancy(1000, 1254));
        assert_eq!(g.occupancy(49_746, 50_000), h.occupancy(49_746, 50_000));
    }
}
