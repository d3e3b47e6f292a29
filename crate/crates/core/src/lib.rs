//! Deterministic simulator for gradient clock synchronization in clocked
//! hardware: drifting oscillators, threshold-based offset measurement with
//! metastable bits, and a Kleene-logic mode controller, together with skew
//! analytics and baseline clocking schemes.
//!
//! Time is integer femtoseconds ([`time::Fs`]); clock phases are exact
//! fixed-point values ([`time::Phase`]).

pub mod analytics;
pub mod baselines;
pub mod clocks;
pub mod engine;
pub mod logic;
pub mod params;
pub mod pipeline;
pub mod scenario;
pub mod time;
pub mod topology;
pub mod trace;
pub mod tri;
