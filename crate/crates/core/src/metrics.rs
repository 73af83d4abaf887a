//! Per-packet latency and loss bookkeeping and the run summary.

use serde::{Deserialize, Serialize};

use crate::engine::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Delivered,
    LostOverrun,
    LostRetryLimit,
    LostReorderSkip,
}

/// Life of one generated packet, filled in as it progresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketRecord {
    pub id: u64,
    pub t_generated: Micros,
    /// Earliest start of a data transmission on any channel.
    pub t_first_tx: Option<Micros>,
    /// First correct reception at the peer MAC.
    pub t_peer_rx: Option<Micros>,
    /// Hand-over to the receiving user.
    pub t_user: Option<Micros>,
    pub outcome: Outcome,
}

impl PacketRecord {
    /// Latency and its queueing, transmission and reordering parts.
    pub fn components(&self) -> Option<(Micros, Micros, Micros)> {
        if self.outcome != Outcome::Delivered {
            return None;
        }
        let tx = self.t_first_tx?;
        let rx = self.t_peer_rx?;
        let user = self.t_user?;
        Some((tx - self.t_generated, rx - tx, user - rx))
    }
}

/// Nearest-rank percentile of a sorted sample: the value at 1-based rank
/// `ceil(p * n)`. `None` on an empty sample.
pub fn percentile(sorted: &[Micros], p: f64) -> Option<Micros> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    // guard against 0.95 * 100 = 95.00000000000001
    let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Some(sorted[rank.min(n) - 1])
}

/// Time-weighted mean of a piecewise-constant quantity over `[start, end]`.
#[derive(Debug, Clone, Copy)]
pub struct TimeAverage {
    start: Micros,
    last: Micros,
    value: u64,
    area: u128,
}

impl TimeAverage {
    pub fn new(start: Micros) -> Self {
        Self {
            start,
            last: 0,
            value: 0,
            area: 0,
        }
    }

    fn accumulate(&mut self, t: Micros) {
        let from = self.last.max(self.start);
        if t > from {
            self.area += u128::from(self.value) * u128::from(t - from);
        }
        self.last = self.last.max(t);
    }

    /// The quantity changes to `value` at `t`.
    pub fn set(&mut self, t: Micros, value: u64) {
        self.accumulate(t);
        self.value = value;
    }

    pub fn mean(&self, end: Micros) -> f64 {
        let mut done = *self;
        done.accumulate(end);
        let span = end.saturating_sub(self.start);
        if span == 0 {
            0.0
        } else {
            done.area as f64 / span as f64
        }
    }
}

/// Counters reported alongside the latency statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub air_attempts: u64,
    pub max_attempts: u32,
    pub duplicates: u64,
    pub late_copies: u64,
    pub scrubbed: u64,
    pub abort_requests: u64,
    pub aborted: u64,
    pub overflowed_copies: u64,
    pub collisions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub generated: u64,
    /// Packets generated inside the measurement window.
    pub measured: u64,
    pub delivered: u64,
    pub lost_overrun: u64,
    pub lost_retry_limit: u64,
    pub lost_reorder_skip: u64,
    /// Unresolved at the end of the drain phase; excluded from ratios.
    pub in_flight: u64,
    pub d_mean: Option<f64>,
    pub d_std: Option<f64>,
    pub d_min: Option<Micros>,
    pub d_p95: Option<Micros>,
    pub d_p99: Option<Micros>,
    pub d_p99_5: Option<Micros>,
    pub d_p99_9: Option<Micros>,
    pub d_max: Option<Micros>,
    pub dq_mean: Option<f64>,
    pub dt_mean: Option<f64>,
    pub dr_mean: Option<f64>,
    pub p_gt_dmin: Option<f64>,
    pub p_gt_1ms: Option<f64>,
    pub p_gt_10ms: Option<f64>,
    pub p_gt_100ms: Option<f64>,
    pub p_lost: Option<f64>,
    pub q_mean: Vec<f64>,
    pub counters: EventCounters,
}

impl RunReport {
    pub fn lost(&self) -> u64 {
        self.lost_overrun + self.lost_retry_limit + self.lost_reorder_skip
    }
}

/// Accumulates finished packet records generated at or after `warmup_end`.
#[derive(Debug, Clone)]
pub struct Collector {
    warmup_end: Micros,
    d_min_threshold: Micros,
    latencies: Vec<Micros>,
    sum_q: u128,
    sum_t: u128,
    sum_r: u128,
    lost_overrun: u64,
    lost_retry_limit: u64,
    lost_reorder_skip: u64,
    generated: u64,
}

impl Collector {
    /// `d_min_threshold` is the airtime of one data frame, the lower edge of
    /// the first delay bucket.
    pub fn new(warmup_end: Micros, d_min_threshold: Micros) -> Self {
        Self {
            warmup_end,
            d_min_threshold,
            latencies: Vec::new(),
            sum_q: 0,
            sum_t: 0,
            sum_r: 0,
            lost_overrun: 0,
            lost_retry_limit: 0,
            lost_reorder_skip: 0,
            generated: 0,
        }
    }

    pub fn warmup_end(&self) -> Micros {
        self.warmup_end
    }

    /// Counts one generated packet, measured or not.
    pub fn note_generated(&mut self) {
        self.generated += 1;
    }

    pub fn in_window(&self, t_generated: Micros) -> bool {
        t_generated >= self.warmup_end
    }

    pub fn record(&mut self, rec: &PacketRecord) {
        if !self.in_window(rec.t_generated) {
            return;
        }
        match rec.outcome {
            Outcome::Delivered => {
                let (q, t, r) = rec
                    .components()
                    .expect("delivered packet with missing timestamps");
                self.sum_q += u128::from(q);
                self.sum_t += u128::from(t);
                self.sum_r += u128::from(r);
                self.latencies.push(q + t + r);
            }
            Outcome::LostOverrun => self.lost_overrun += 1,
            Outcome::LostRetryLimit => self.lost_retry_limit += 1,
            Outcome::LostReorderSkip => self.lost_reorder_skip += 1,
        }
    }

    pub fn delivered(&self) -> u64 {
        self.latencies.len() as u64
    }

    /// Builds the summary; `in_flight` counts measured packets still unresolved.
    pub fn finish(
        mut self,
        measured_in_flight: u64,
        q_mean: Vec<f64>,
        counters: EventCounters,
    ) -> RunReport {
        self.latencies.sort_unstable();
        let lat = &self.latencies;
        let n = lat.len() as u64;
        let lost = self.lost_overrun + self.lost_retry_limit + self.lost_reorder_skip;
        let resolved = n + lost;
        let measured = resolved + measured_in_flight;

        let mean_of = |sum: u128| (n > 0).then(|| sum as f64 / n as f64);
        let sum_d = self.sum_q + self.sum_t + self.sum_r;
        let d_mean = mean_of(sum_d);
        let d_std = d_mean.map(|m| {
            let ss: f64 = lat.iter().map(|&d| (d as f64 - m).powi(2)).sum();
            (ss / n as f64).sqrt()
        });
        let exceed = |x: Micros| {
            (resolved > 0).then(|| {
                // first index with latency > x
                let above = n - lat.partition_point(|&d| d <= x) as u64;
                (above + lost) as f64 / resolved as f64
            })
        };

        RunReport {
            generated: self.generated,
            measured,
            delivered: n,
            lost_overrun: self.lost_overrun,
            lost_retry_limit: self.lost_retry_limit,
            lost_reorder_skip: self.lost_reorder_skip,
            in_flight: measured_in_flight,
            d_mean,
            d_std,
            d_min: lat.first().copied(),
            d_p95: percentile(lat, 0.95),
            d_p99: percentile(lat, 0.99),
            d_p99_5: percentile(lat, 0.995),
            d_p99_9: percentile(lat, 0.999),
            d_max: lat.last().copied(),
            dq_mean: mean_of(self.sum_q),
            dt_mean: mean_of(self.sum_t),
            dr_mean: mean_of(self.sum_r),
            p_gt_dmin: exceed(self.d_min_threshold),
            p_gt_1ms: exceed(1_000),
            p_gt_10ms: exceed(10_000),
            p_gt_100ms: exceed(100_000),
            p_lost: (resolved > 0).then(|| lost as f64 / resolved as f64),
            q_mean,
            counters,
        }
    }
}
