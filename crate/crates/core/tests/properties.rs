use std::collections::BTreeSet;

use proptest::prelude::*;

use wired_core::engine::Engine;
use wired_core::lre::{
    CopyStatus, DaMode, Enqueued, RxPolicy, RxWindow, SelectionRule, TxPolicy, TxQueue,
};
use wired_core::metrics::{percentile, TimeAverage};
use wired_core::report::format_ratio;
use wired_core::scenario::{ScenarioConfig, Scheme};

proptest! {
    #[test]
    fn engine_pops_in_time_then_insertion_order(times in prop::collection::vec(0u64..50, 1..60)) {
        let mut engine = Engine::new();
        for (i, &t) in times.iter().enumerate() {
            engine.schedule(t, i).unwrap();
        }
        let mut expected: Vec<(u64, usize)> = times.iter().copied().zip(0..).collect();
        expected.sort();
        let mut got = Vec::new();
        while let Some((t, i)) = engine.pop_until(u64::MAX) {
            got.push((t, i));
        }
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn cancelled_events_never_fire(times in prop::collection::vec(0u64..50, 1..40), mask in prop::collection::vec(any::<bool>(), 40)) {
        let mut engine = Engine::new();
        let handles: Vec<_> = times.iter().enumerate().map(|(i, &t)| engine.schedule(t, i).unwrap()).collect();
        let mut kept = BTreeSet::new();
        for (i, h) in handles.into_iter().enumerate() {
            if mask[i] {
                prop_assert!(engine.cancel(h));
            } else {
                kept.insert(i);
            }
        }
        let mut fired = BTreeSet::new();
        engine.run_until(100, |_, i| { fired.insert(i); }).unwrap();
        prop_assert_eq!(fired, kept);
    }

    #[test]
    fn unordered_window_delivers_each_id_once(trace in prop::collection::vec(0u64..30, 0..120)) {
        let mut w = RxWindow::new(RxPolicy::Unordered, 0);
        let mut delivered = Vec::new();
        for (t, &id) in trace.iter().enumerate() {
            delivered.extend(w.accept(id, t as u64).delivered.into_iter().map(|(id, _)| id));
        }
        let sent: BTreeSet<u64> = trace.iter().copied().collect();
        let unique: BTreeSet<u64> = delivered.iter().copied().collect();
        prop_assert_eq!(unique.len(), delivered.len());
        prop_assert_eq!(unique, sent);
    }

    #[test]
    fn ordered_window_output_is_increasing(trace in prop::collection::vec(0u64..30, 0..120), flush_at in 0usize..120) {
        let mut w = RxWindow::new(RxPolicy::Ordered, 0);
        let mut out = Vec::new();
        for (t, &id) in trace.iter().enumerate() {
            let acc = w.accept(id, t as u64);
            out.extend(acc.delivered.into_iter().map(|(id, _)| id));
            if t == flush_at {
                if let Some(y) = w.buffered().last() {
                    out.extend(w.on_timeout(y, t as u64).delivered.into_iter().map(|(id, _)| id));
                }
            }
        }
        prop_assert!(out.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn tx_queue_respects_capacity_and_status(
        ops in prop::collection::vec((0u8..4, 0usize..2), 1..200),
        mode in prop::sample::select(vec![DaMode::Basic, DaMode::RdaQ, DaMode::RdaR]),
        d_th in 0u32..4,
        capacity in 1usize..6,
    ) {
        let mut q = TxQueue::new(TxPolicy { mode, d_th, capacity, selection: SelectionRule::Flags }, 2);
        let mut next_id = 0;
        let mut in_mac: [Option<u64>; 2] = [None, None];
        for (op, k) in ops {
            match op {
                0 => {
                    if q.enqueue(next_id, 0, 0).unwrap() == Enqueued::Admitted {
                        next_id += 1;
                    }
                }
                1 if in_mac[k].is_none() => {
                    if let Some(id) = q.select_next(k) {
                        prop_assert_eq!(q.get(id).unwrap().status[k], CopyStatus::InMac);
                        in_mac[k] = Some(id);
                    }
                }
                2 => {
                    if let Some(id) = in_mac[k].take() {
                        let fx = q.on_delivered(k, id).unwrap();
                        if mode != DaMode::Basic {
                            if let Some(f) = q.get(id) {
                                prop_assert!(f.status.iter().all(|s| *s != CopyStatus::Waiting));
                            }
                        }
                        if mode != DaMode::RdaR {
                            prop_assert!(fx.abort_on.is_empty());
                        }
                    }
                }
                3 => {
                    if let Some(id) = in_mac[k].take() {
                        q.on_dropped(k, id).unwrap();
                    }
                }
                _ => {}
            }
            for ch in 0..2 {
                prop_assert!(q.outstanding(ch) <= capacity);
            }
        }
    }

    #[test]
    fn percentiles_are_monotone(mut xs in prop::collection::vec(0u64..10_000, 1..300)) {
        xs.sort_unstable();
        let ps = [0.5, 0.95, 0.99, 0.995, 0.999, 1.0];
        let vals: Vec<u64> = ps.iter().map(|&p| percentile(&xs, p).unwrap()).collect();
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*vals.last().unwrap(), *xs.last().unwrap());
    }

    #[test]
    fn time_average_of_constant_is_constant(v in 0u64..1000, start in 0u64..100, len in 1u64..1000) {
        let mut avg = TimeAverage::new(start);
        avg.set(0, v);
        prop_assert!((avg.mean(start + len) - v as f64).abs() < 1e-9);
    }

    #[test]
    fn ratio_text_round_trips(x in 0.0f64..=1.0) {
        let s = format_ratio(x);
        prop_assert_eq!(s.parse::<f64>().unwrap(), x);
    }

    #[test]
    fn config_survives_toml(
        scheme in prop::sample::select(vec![Scheme::Dcf, Scheme::Basic, Scheme::RdaQ, Scheme::RdaR]),
        d_th in 0u32..8,
        seed in 0u64..=i64::MAX as u64,
        cw_min in prop::sample::select(vec![7u32, 15, 31]),
        capacity in 1usize..5000,
    ) {
        let mut cfg = ScenarioConfig::default();
        cfg.lre.scheme = scheme;
        cfg.lre.d_th = d_th;
        cfg.run.seed = seed;
        cfg.mac.cw_min = cw_min;
        cfg.lre.capacity = capacity;
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
