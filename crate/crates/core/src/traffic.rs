//! Packet sources: the monitored stream and bursty interferers.

use serde::{Deserialize, Serialize};

use crate::engine::Micros;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalLaw {
    Cyclic,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceProfile {
    pub law: ArrivalLaw,
    /// Mean inter-arrival time.
    pub mean_period: Micros,
    /// Payload in bytes.
    pub payload: u32,
}

impl SourceProfile {
    /// Cyclic, one packet per millisecond.
    pub const C1: SourceProfile = SourceProfile {
        law: ArrivalLaw::Cyclic,
        mean_period: 1000,
        payload: 50,
    };
    /// Poisson, mean one packet per millisecond.
    pub const E1: SourceProfile = SourceProfile {
        law: ArrivalLaw::Exponential,
        mean_period: 1000,
        payload: 50,
    };
    /// Poisson, mean one packet every half millisecond.
    pub const E05: SourceProfile = SourceProfile {
        law: ArrivalLaw::Exponential,
        mean_period: 500,
        payload: 50,
    };

    /// Parses the short labels `c(1)`, `e(1)` and `e(0.5)`.
    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "c(1)" | "c1" => Some(Self::C1),
            "e(1)" | "e1" => Some(Self::E1),
            "e(0.5)" | "e05" => Some(Self::E05),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        let ms = self.mean_period as f64 / 1000.0;
        let law = match self.law {
            ArrivalLaw::Cyclic => 'c',
            ArrivalLaw::Exponential => 'e',
        };
        format!("{law}({ms})")
    }

    /// Gap to the next packet, rounded to whole microseconds.
    pub fn next_arrival(&self, rng: &mut RngStream) -> Micros {
        match self.law {
            ArrivalLaw::Cyclic => self.mean_period,
            ArrivalLaw::Exponential => rng.exponential(self.mean_period as f64).round() as Micros,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfererProfile {
    pub frames_per_burst: u32,
    pub payload: u32,
    pub intra_burst_period: Micros,
    /// Mean of the exponential pause between bursts.
    pub mean_gap: Micros,
    /// Frames the interferer may hold before dropping new ones
    /// (256 kbit of 1500 B frames).
    pub queue_capacity: usize,
}

impl Default for InterfererProfile {
    fn default() -> Self {
        Self {
            frames_per_burst: 700,
            payload: 1500,
            intra_burst_period: 500,
            mean_gap: 1_000_000,
            queue_capacity: 21,
        }
    }
}

impl InterfererProfile {
    /// Fraction of airtime one interferer claims, retransmissions excluded,
    /// given the per-frame channel cost `airtime + sifs + ack + difs`.
    pub fn offered_load(&self, frame_cost: Micros) -> f64 {
        let busy = f64::from(self.frames_per_burst) * frame_cost as f64;
        let cycle = f64::from(self.frames_per_burst) * self.intra_burst_period as f64
            + self.mean_gap as f64;
        busy / cycle
    }

    pub fn gap(&self, rng: &mut RngStream) -> Micros {
        rng.exponential(self.mean_gap as f64).round() as Micros
    }
}

/// Burst clock of one interferer.
#[derive(Debug, Clone)]
pub struct BurstSchedule {
    profile: InterfererProfile,
    sent_in_burst: u32,
}

impl BurstSchedule {
    pub fn new(profile: InterfererProfile) -> Self {
        Self {
            profile,
            sent_in_burst: 0,
        }
    }

    /// First submission instant: a random phase drawn as one pause.
    pub fn first(&mut self, rng: &mut RngStream) -> Micros {
        self.profile.gap(rng)
    }

    /// Called at each submission; returns the delay to the next one.
    pub fn after_submit(&mut self, rng: &mut RngStream) -> Micros {
        self.sent_in_burst += 1;
        if self.sent_in_burst >= self.profile.frames_per_burst {
            self.sent_in_burst = 0;
            self.profile.intra_burst_period + self.profile.gap(rng)
        } else {
            self.profile.intra_burst_period
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_is_constant() {
        let mut r = RngStream::new(1, "t");
        assert!((0..100).all(|_| SourceProfile::C1.next_arrival(&mut r) == 1000));
    }

    #[test]
    fn exponential_mean() {
        let mut r = RngStream::new(2, "t");
        let n = 1_000_000;
        let sum: u64 = (0..n).map(|_| SourceProfile::E05.next_arrival(&mut r)).sum();
        let mean = sum as f64 / n as f64;
        assert!((mean - 500.0).abs() < 5.0, "mean {mean}");
    }

    #[test]
    fn exponential_is_memoryless() {
        let mut r = RngStream::new(3, "t");
        let xs: Vec<f64> = (0..400_000).map(|_| r.exponential(1000.0)).collect();
        let frac = |pred: &dyn Fn(f64) -> bool| xs.iter().filter(|&&x| pred(x)).count() as f64;
        let (a, b) = (700.0, 400.0);
        let cond = frac(&|x| x > a + b) / frac(&|x| x > b);
        let plain = frac(&|x| x > a) / xs.len() as f64;
        assert!((cond - plain).abs() < 0.01, "{cond} vs {plain}");
    }

    #[test]
    fn labels_round_trip() {
        for p in [SourceProfile::C1, SourceProfile::E1, SourceProfile::E05] {
            assert_eq!(SourceProfile::from_label(&p.label()), Some(p));
        }
        assert_eq!(SourceProfile::from_label("x(2)"), None);
    }

    #[test]
    fn interferer_offered_load() {
        let p = InterfererProfile::default();
        // 254 airtime + 10 SIFS + 34 ACK + 50 DIFS
        let load = p.offered_load(348);
        assert!((load - 700.0 * 348.0 / 1_350_000.0).abs() < 1e-12);
        assert!((load - 0.18).abs() < 0.005);
    }

    #[test]
    fn burst_schedule_pauses_after_last_frame() {
        let p = InterfererProfile {
            frames_per_burst: 3,
            ..Default::default()
        };
        let mut s = BurstSchedule::new(p);
        let mut r = RngStream::new(4, "t");
        assert_eq!(s.after_submit(&mut r), 500);
        assert_eq!(s.after_submit(&mut r), 500);
        assert!(s.after_submit(&mut r) > 500);
        assert_eq!(s.after_submit(&mut r), 500);
    }
}
