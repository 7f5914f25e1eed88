//! Discrete-event simulation of LTE licensed-assisted access (LAA) and Wi-Fi
//! sharing one unlicensed 20 MHz channel.
//!
//! The crate is `no_std` with `alloc`: it owns the event engine, the radio
//! environment, both channel-access state machines, the traffic and transport
//! models and the metric accumulators. File formats, configuration parsing and
//! the command line live in the `coexsim` crate.
//!
//! A single run is strictly single-threaded and deterministic for a given
//! [`config::SimConfig`].

#![no_std]
#![deny(rust_2018_idioms)]

#[cfg(any(test, feature = "std"))]
extern crate std;

extern crate alloc;

pub mod config;
pub mod contention;
pub mod kernel;
pub mod laa;
pub mod link;
pub mod log;
pub mod math;
pub mod metrics;
pub mod radio;
pub mod scenario;
pub mod sim;
pub mod time;
pub mod traffic;
pub mod wifi;

pub use config::SimConfig;
pub use sim::{RunResult, Simulation};
pub use time::SimTime;
