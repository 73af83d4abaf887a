//! The assembled testbed: source, peer, interferers and channels driven by
//! one event engine.

use std::collections::{HashMap, VecDeque};

use crate::channel::{Channel, GilbertElliott, TxId, Verdict};
use crate::engine::{Engine, EventHandle, Micros};
use crate::lre::{
    CompletionEffects, Enqueued, FrameId, RxWindow, SenderOutcome, TxPolicy, TxQueue,
};
use crate::mac::{Mac, MacFrame, MacOutcome, MacStep, MacTimer, MacTimers, Medium, TimeoutOutcome};
use crate::metrics::{Collector, EventCounters, Outcome, PacketRecord, RunReport, TimeAverage};
use crate::rng::RngStream;
use crate::traffic::{BurstSchedule, InterfererProfile, SourceProfile};

use super::config::{ConfigError, Direction, ScenarioConfig};

#[derive(Debug, Clone, Copy)]
enum OnAir {
    Data { station: usize, frame: u64 },
    Ack { station: usize, frame: u64 },
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Generate,
    GenerationEnd,
    InterfererSubmit(usize),
    Mac { station: usize, timer: MacTimer },
    TxEnd { channel: usize, tx: TxId, what: OnAir },
    AckStart { channel: usize, station: usize, frame: u64 },
    ReorderTimeout { dest: usize, id: FrameId, deferred: bool },
}

struct StationTimers<'a> {
    engine: &'a mut Engine<Ev>,
    station: usize,
}

impl MacTimers for StationTimers<'_> {
    fn schedule(&mut self, at: Micros, timer: MacTimer) -> EventHandle {
        self.engine
            .schedule(at, Ev::Mac {
                station: self.station,
                timer,
            })
            .expect("MAC timers never point to the past")
    }

    fn cancel(&mut self, handle: EventHandle) -> bool {
        self.engine.cancel(handle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    /// Sub-station of the monitored link on the given channel.
    Link(usize),
    Interferer(usize),
}

struct Station {
    channel: usize,
    mac: Mac,
    rng: RngStream,
    role: Role,
}

/// Delivery counts of one interferer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InterfererStats {
    pub channel: usize,
    pub submitted: u64,
    pub dropped: u64,
    pub delivered: u64,
    pub discarded: u64,
    pub first_attempt_ok: u64,
}

struct Interferer {
    station: usize,
    queue: VecDeque<u64>,
    next_id: u64,
    schedule: BurstSchedule,
    rng: RngStream,
    profile: InterfererProfile,
    stats: InterfererStats,
}

struct Link {
    txq: TxQueue,
    profile: SourceProfile,
    airtime: Micros,
    rx: Vec<RxWindow>,
    rng: RngStream,
    pending: HashMap<FrameId, PacketRecord>,
    next_frame: FrameId,
    generated: u64,
    collector: Collector,
    queue_avg: Vec<TimeAverage>,
    reorder_timeout: Micros,
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: RunReport,
    /// Hash over every data transmission start: time, station and frame.
    pub trace_hash: u64,
    pub events: u64,
    pub end_time: Micros,
    /// Generation horizon the warm-up fraction refers to.
    pub horizon: Micros,
    pub interferers: Vec<InterfererStats>,
    /// Largest number of air attempts any MAC spent on one frame.
    pub max_attempts_any: u32,
    /// Bad-state steps generated per channel.
    pub bad_steps: Vec<u64>,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

fn fnv_mix(mut h: u64, words: &[u64]) -> u64 {
    for w in words {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// A built scenario, ready to run.
pub struct Simulation {
    engine: Engine<Ev>,
    channels: Vec<Channel>,
    stations: Vec<Station>,
    on_channel: Vec<Vec<usize>>,
    link_station: Vec<usize>,
    interferers: Vec<Interferer>,
    link: Link,
    ack_airtime: Micros,
    interferer_airtime: Micros,
    sifs: Micros,
    horizon: Micros,
    duration_bound: bool,
    packet_limit: u64,
    drain: Micros,
    gen_done: bool,
    deadline: Option<Micros>,
    q_snapshot: Option<Vec<f64>>,
    trace_hash: u64,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let seed = cfg.run.seed;
        let n_ch = cfg.lre.scheme.channels();
        let env = &cfg.environment;
        let timings = cfg.mac;
        let max_airtime = cfg
            .traffic
            .airtime
            .max(env.interferer_airtime)
            .max(timings.ack_airtime);

        let channels = (0..n_ch)
            .map(|k| {
                let ge = GilbertElliott::new(
                    env.ge_params(),
                    RngStream::new(seed, format!("jammer/{k}/state")),
                    RngStream::new(seed, format!("jammer/{k}/bits")),
                );
                Channel::new(k, ge, env.bits_per_step, max_airtime)
            })
            .collect();

        let mut stations = Vec::new();
        let mut on_channel = vec![Vec::new(); n_ch];
        let mut link_station = Vec::new();
        for (k, list) in on_channel.iter_mut().enumerate() {
            list.push(stations.len());
            link_station.push(stations.len());
            stations.push(Station {
                channel: k,
                mac: Mac::new(timings),
                rng: RngStream::new(seed, format!("mac/link/{k}")),
                role: Role::Link(k),
            });
        }

        let profile = env.interferer_profile();
        let mut interferers = Vec::new();
        for (k, list) in on_channel.iter_mut().enumerate() {
            for j in 0..env.interferer_count() {
                let s = stations.len();
                list.push(s);
                stations.push(Station {
                    channel: k,
                    mac: Mac::new(timings),
                    rng: RngStream::new(seed, format!("mac/interferer/{k}/{j}")),
                    role: Role::Interferer(interferers.len()),
                });
                interferers.push(Interferer {
                    station: s,
                    queue: VecDeque::new(),
                    next_id: 0,
                    schedule: BurstSchedule::new(profile),
                    rng: RngStream::new(seed, format!("interferer/{k}/{j}")),
                    profile,
                    stats: InterfererStats {
                        channel: k,
                        ..Default::default()
                    },
                });
            }
        }

        let source = cfg.traffic.profile();
        let horizon = cfg
            .run
            .duration
            .unwrap_or(cfg.run.packets.saturating_mul(source.mean_period));
        let warmup_end = (horizon as f64 * cfg.run.warmup_fraction).floor() as Micros;
        let dests = match cfg.traffic.direction {
            Direction::Uplink => 1,
            Direction::Downlink => usize::from(cfg.traffic.destinations),
        };
        let rx_policy = cfg.effective_rx_policy();
        let link = Link {
            txq: TxQueue::new(
                TxPolicy {
                    mode: cfg.lre.scheme.da_mode(),
                    d_th: cfg.lre.d_th,
                    capacity: cfg.lre.capacity,
                    selection: cfg.lre.selection,
                },
                n_ch,
            ),
            profile: source,
            airtime: cfg.traffic.airtime,
            rx: (0..dests).map(|_| RxWindow::new(rx_policy, 0)).collect(),
            rng: RngStream::new(seed, "traffic"),
            pending: HashMap::new(),
            next_frame: 0,
            generated: 0,
            collector: Collector::new(warmup_end, cfg.traffic.airtime),
            queue_avg: vec![TimeAverage::new(warmup_end); n_ch],
            reorder_timeout: cfg.lre.reorder_timeout,
        };

        let mut sim = Self {
            engine: Engine::new(),
            channels,
            stations,
            on_channel,
            link_station,
            interferers,
            link,
            ack_airtime: timings.ack_airtime,
            interferer_airtime: env.interferer_airtime,
            sifs: timings.sifs,
            horizon,
            duration_bound: cfg.run.duration.is_some(),
            packet_limit: cfg.run.packets,
            drain: cfg.run.drain,
            gen_done: false,
            deadline: None,
            q_snapshot: None,
            trace_hash: FNV_OFFSET,
        };
        sim.prime();
        Ok(sim)
    }

    fn prime(&mut self) {
        for i in 0..self.interferers.len() {
            let it = &mut self.interferers[i];
            let t = it.schedule.first(&mut it.rng);
            self.engine
                .schedule(t, Ev::InterfererSubmit(i))
                .expect("start times are non-negative");
        }
        let first = self.link.profile.next_arrival(&mut self.link.rng);
        if self.may_generate_at(first, 0) {
            self.engine.schedule(first, Ev::Generate).expect("future");
        }
        if self.duration_bound || self.packet_limit == 0 {
            let end = if self.duration_bound { self.horizon } else { 0 };
            self.engine.schedule(end, Ev::GenerationEnd).expect("future");
        }
    }

    fn may_generate_at(&self, t: Micros, generated: u64) -> bool {
        if self.duration_bound {
            t < self.horizon
        } else {
            generated < self.packet_limit
        }
    }

    /// Runs to completion and summarizes.
    pub fn run(mut self) -> SimOutput {
        loop {
            let limit = self.deadline.unwrap_or(Micros::MAX);
            let Some((_, ev)) = self.engine.pop_until(limit) else {
                break;
            };
            self.handle(ev);
            if self.gen_done && self.link.pending.is_empty() {
                break;
            }
        }
        self.finish()
    }

    fn finish(mut self) -> SimOutput {
        let link = self.link;
        let in_flight = link
            .pending
            .values()
            .filter(|r| link.collector.in_window(r.t_generated))
            .count() as u64;
        let q_mean = self.q_snapshot.unwrap_or_else(|| {
            link.queue_avg
                .iter()
                .map(|a| a.mean(self.engine.now()))
                .collect()
        });
        let mut counters = EventCounters::default();
        for &s in &self.link_station {
            let st = self.stations[s].mac.stats();
            counters.air_attempts += st.air_attempts;
            counters.max_attempts = counters.max_attempts.max(st.max_attempts);
            counters.aborted += st.aborted;
        }
        for w in &link.rx {
            counters.duplicates += w.counters().duplicates;
            counters.late_copies += w.counters().late;
        }
        let tc = link.txq.counters();
        counters.scrubbed = tc.removed_copies;
        counters.abort_requests = tc.abort_requests;
        counters.overflowed_copies = tc.overflowed_copies;
        counters.collisions = self.channels.iter().map(Channel::collisions).sum();

        let max_attempts_any = self
            .stations
            .iter()
            .map(|s| s.mac.stats().max_attempts)
            .max()
            .unwrap_or(0);
        let bad_steps = self
            .channels
            .iter_mut()
            .map(|c| c.disturbance().bad_steps_generated())
            .collect();
        let mut report = link.collector.finish(in_flight, q_mean, counters);
        report.generated = link.generated;
        SimOutput {
            report,
            trace_hash: self.trace_hash,
            events: self.engine.processed(),
            end_time: self.engine.now(),
            horizon: self.horizon,
            interferers: self.interferers.iter().map(|i| i.stats).collect(),
            max_attempts_any,
            bad_steps,
        }
    }

    fn medium(&self, ch: usize) -> Medium {
        match self.channels[ch].idle_since() {
            Some(since) => Medium::Idle { since },
            None => Medium::Busy,
        }
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Generate => self.on_generate(),
            Ev::GenerationEnd => self.end_generation(),
            Ev::InterfererSubmit(i) => self.on_interferer_submit(i),
            Ev::Mac { station, timer } => match timer {
                MacTimer::Countdown => {
                    let step = self.stations[station].mac.on_countdown();
                    self.apply_step(station, step);
                }
                MacTimer::AckTimeout => self.on_ack_timeout(station),
            },
            Ev::TxEnd { channel, tx, what } => self.on_tx_end(channel, tx, what),
            Ev::AckStart {
                channel,
                station,
                frame,
            } => self.on_ack_start(channel, station, frame),
            Ev::ReorderTimeout { dest, id, deferred } => {
                if deferred {
                    self.on_reorder_timeout(dest, id);
                } else {
                    // let arrivals at this same instant go first
                    self.engine.schedule_in(
                        0,
                        Ev::ReorderTimeout {
                            dest,
                            id,
                            deferred: true,
                        },
                    );
                }
            }
        }
    }

    fn end_generation(&mut self) {
        if self.gen_done {
            return;
        }
        let now = self.engine.now();
        self.gen_done = true;
        self.deadline = Some(now.saturating_add(self.drain));
        self.q_snapshot = Some(self.link.queue_avg.iter().map(|a| a.mean(now)).collect());
    }

    fn sample_queues(&mut self) {
        let now = self.engine.now();
        for (k, avg) in self.link.queue_avg.iter_mut().enumerate() {
            avg.set(now, self.link.txq.outstanding(k) as u64);
        }
    }

    fn on_generate(&mut self) {
        let now = self.engine.now();
        let link = &mut self.link;
        link.generated += 1;
        link.collector.note_generated();
        let id = link.next_frame;
        let dest = (id % link.rx.len() as u64) as u16;
        match link.txq.enqueue(id, dest, now).expect("ids increase") {
            Enqueued::Admitted => {
                link.next_frame += 1;
                link.pending.insert(
                    id,
                    PacketRecord {
                        id,
                        t_generated: now,
                        t_first_tx: None,
                        t_peer_rx: None,
                        t_user: None,
                        outcome: Outcome::Delivered,
                    },
                );
            }
            Enqueued::Overrun => link.collector.record(&PacketRecord {
                id,
                t_generated: now,
                t_first_tx: None,
                t_peer_rx: None,
                t_user: None,
                outcome: Outcome::LostOverrun,
            }),
        }
        let next = now + link.profile.next_arrival(&mut link.rng);
        let generated = link.generated;
        if self.may_generate_at(next, generated) {
            self.engine.schedule(next, Ev::Generate).expect("future");
        } else if !self.duration_bound {
            self.end_generation();
        }
        self.sample_queues();
        for k in 0..self.link_station.len() {
            self.dispatch(k);
        }
    }

    /// Hands the next frame to the link MAC on channel `k` if it is free.
    fn dispatch(&mut self, k: usize) {
        let s = self.link_station[k];
        if !self.stations[s].mac.is_free() || !self.link.txq.has_waiting(k) {
            return;
        }
        let Some(id) = self.link.txq.select_next(k) else {
            return;
        };
        let frame = MacFrame {
            id,
            airtime: self.link.airtime,
        };
        self.submit(s, frame);
    }

    fn submit(&mut self, s: usize, frame: MacFrame) {
        let now = self.engine.now();
        let medium = self.medium(self.stations[s].channel);
        let st = &mut self.stations[s];
        let step = st
            .mac
            .submit(
                frame,
                now,
                medium,
                &mut st.rng,
                &mut StationTimers {
                    engine: &mut self.engine,
                    station: s,
                },
            )
            .expect("only free MACs are fed");
        self.apply_step(s, step);
    }

    fn apply_step(&mut self, s: usize, step: MacStep) {
        let MacStep::Transmit(frame) = step else {
            return;
        };
        let now = self.engine.now();
        let ch = self.stations[s].channel;
        let start = self.channels[ch].begin_transmission(now, s, frame.airtime);
        self.engine.schedule_in(
            frame.airtime,
            Ev::TxEnd {
                channel: ch,
                tx: start.id,
                what: OnAir::Data {
                    station: s,
                    frame: frame.id,
                },
            },
        );
        self.trace_hash = fnv_mix(self.trace_hash, &[now, s as u64, frame.id]);
        if let Role::Link(_) = self.stations[s].role {
            if let Some(rec) = self.link.pending.get_mut(&frame.id) {
                rec.t_first_tx.get_or_insert(now);
            }
        }
        if start.became_busy {
            self.notify_busy(ch);
        }
    }

    fn notify_busy(&mut self, ch: usize) {
        let now = self.engine.now();
        for &s in &self.on_channel[ch] {
            let st = &mut self.stations[s];
            st.mac.on_medium_busy(
                now,
                &mut st.rng,
                &mut StationTimers {
                    engine: &mut self.engine,
                    station: s,
                },
            );
        }
    }

    fn notify_idle(&mut self, ch: usize) {
        let now = self.engine.now();
        for &s in &self.on_channel[ch] {
            self.stations[s].mac.on_medium_idle(
                now,
                &mut StationTimers {
                    engine: &mut self.engine,
                    station: s,
                },
            );
        }
    }

    fn on_tx_end(&mut self, ch: usize, tx: TxId, what: OnAir) {
        let now = self.engine.now();
        let end = self.channels[ch].end_transmission(now, tx);
        match what {
            OnAir::Data { station, frame } => {
                self.stations[station].mac.on_tx_end(
                    now,
                    &mut StationTimers {
                        engine: &mut self.engine,
                        station,
                    },
                );
                if end.verdict == Verdict::Ok {
                    self.engine.schedule_in(
                        self.sifs,
                        Ev::AckStart {
                            channel: ch,
                            station,
                            frame,
                        },
                    );
                    if let Role::Link(_) = self.stations[station].role {
                        self.peer_receive(frame, now);
                    }
                }
            }
            OnAir::Ack { station, frame } => {
                if end.verdict == Verdict::Ok {
                    let medium = self.medium(ch);
                    let st = &mut self.stations[station];
                    let outcome = st.mac.on_ack_received(
                        frame,
                        now,
                        medium,
                        &mut st.rng,
                        &mut StationTimers {
                            engine: &mut self.engine,
                            station,
                        },
                    );
                    if let Some(o) = outcome {
                        self.on_outcome(station, o);
                    }
                }
            }
        }
        if end.became_idle {
            self.notify_idle(ch);
        }
    }

    fn on_ack_start(&mut self, ch: usize, station: usize, frame: u64) {
        let now = self.engine.now();
        let start = self.channels[ch].begin_transmission(now, usize::MAX, self.ack_airtime);
        self.engine.schedule_in(
            self.ack_airtime,
            Ev::TxEnd {
                channel: ch,
                tx: start.id,
                what: OnAir::Ack { station, frame },
            },
        );
        if start.became_busy {
            self.notify_busy(ch);
        }
    }

    fn on_ack_timeout(&mut self, s: usize) {
        let now = self.engine.now();
        let medium = self.medium(self.stations[s].channel);
        let st = &mut self.stations[s];
        let frame = st.mac.current_frame();
        let res = st.mac.on_ack_timeout(
            now,
            medium,
            &mut st.rng,
            &mut StationTimers {
                engine: &mut self.engine,
                station: s,
            },
        );
        match res {
            TimeoutOutcome::Retrying { rc } => {
                if let (Role::Link(k), Some(f)) = (self.stations[s].role, frame) {
                    self.link.txq.on_retry(k, f.id, rc);
                }
            }
            TimeoutOutcome::Done(o) => self.on_outcome(s, o),
        }
    }

    fn on_outcome(&mut self, s: usize, outcome: MacOutcome) {
        match self.stations[s].role {
            Role::Link(k) => {
                let id = outcome.frame().id;
                let fx = match outcome {
                    MacOutcome::Delivered { .. } => self.link.txq.on_delivered(k, id),
                    MacOutcome::Discarded { .. } | MacOutcome::Aborted { .. } => {
                        self.link.txq.on_dropped(k, id)
                    }
                }
                .expect("MAC frames are buffered");
                self.apply_effects(id, fx);
                self.sample_queues();
                self.dispatch(k);
            }
            Role::Interferer(i) => {
                let it = &mut self.interferers[i];
                it.queue.pop_front();
                match outcome {
                    MacOutcome::Delivered { attempts, .. } => {
                        it.stats.delivered += 1;
                        if attempts == 1 {
                            it.stats.first_attempt_ok += 1;
                        }
                    }
                    _ => it.stats.discarded += 1,
                }
                self.feed_interferer(i);
            }
        }
    }

    fn apply_effects(&mut self, id: FrameId, fx: CompletionEffects) {
        for g in fx.abort_on {
            let s = self.link_station[g];
            self.stations[s].mac.request_abort(id);
        }
        if fx.resolved == Some(SenderOutcome::Exhausted) {
            let lost = self
                .link
                .pending
                .get(&id)
                .is_some_and(|r| r.t_peer_rx.is_none());
            if lost {
                let mut rec = self.link.pending.remove(&id).expect("checked");
                rec.outcome = Outcome::LostRetryLimit;
                self.link.collector.record(&rec);
            }
        }
    }

    fn peer_receive(&mut self, id: FrameId, now: Micros) {
        let link = &mut self.link;
        if let Some(rec) = link.pending.get_mut(&id) {
            rec.t_peer_rx.get_or_insert(now);
        }
        let dest = (id % link.rx.len() as u64) as usize;
        let acc = link.rx[dest].accept(id, now);
        for (d, t) in acc.delivered {
            Self::deliver_user(link, d, t);
        }
        if let Some(y) = acc.start_timer {
            let at = now + link.reorder_timeout;
            self.engine
                .schedule(
                    at,
                    Ev::ReorderTimeout {
                        dest,
                        id: y,
                        deferred: false,
                    },
                )
                .expect("future");
        }
    }

    fn deliver_user(link: &mut Link, id: FrameId, t: Micros) {
        if let Some(mut rec) = link.pending.remove(&id) {
            rec.t_user = Some(t);
            rec.outcome = Outcome::Delivered;
            link.collector.record(&rec);
        }
    }

    fn on_reorder_timeout(&mut self, dest: usize, id: FrameId) {
        let now = self.engine.now();
        let link = &mut self.link;
        let flushed = link.rx[dest].on_timeout(id, now);
        for skipped in flushed.skipped {
            if let Some(mut rec) = link.pending.remove(&skipped) {
                rec.outcome = Outcome::LostReorderSkip;
                link.collector.record(&rec);
            }
        }
        for (d, t) in flushed.delivered {
            Self::deliver_user(link, d, t);
        }
    }

    fn on_interferer_submit(&mut self, i: usize) {
        let it = &mut self.interferers[i];
        it.stats.submitted += 1;
        if it.queue.len() < it.profile.queue_capacity {
            it.queue.push_back(it.next_id);
            it.next_id += 1;
        } else {
            it.stats.dropped += 1;
        }
        let delay = it.schedule.after_submit(&mut it.rng);
        self.engine.schedule_in(delay, Ev::InterfererSubmit(i));
        self.feed_interferer(i);
    }

    fn feed_interferer(&mut self, i: usize) {
        let it = &self.interferers[i];
        let s = it.station;
        let Some(&id) = it.queue.front() else {
            return;
        };
        if !self.stations[s].mac.is_free() {
            return;
        }
        let airtime = self.interferer_airtime;
        self.submit(s, MacFrame { id, airtime });
    }
}
