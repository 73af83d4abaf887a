//! Discrete-event simulator of a duplex seamless-redundant IEEE 802.11 link.
//!
//! A source duplicates packets over two channels, each served by its own
//! DCF sub-station; the receiver discards duplicates and optionally restores
//! the original order. Channels carry bursty interferers and a
//! Gilbert-Elliott disturbance process.

pub mod channel;
pub mod engine;
pub mod lre;
pub mod mac;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod traffic;
