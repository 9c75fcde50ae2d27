//! Discrete-event Monte Carlo simulation of weak coherent light on a
//! beam splitter, detected by four single-photon counters behind two further
//! splitters and analysed with a coincidence unit.

pub mod algebra;
pub mod coincidence;
pub mod config;
pub mod detector;
pub mod events;
pub mod experiment;
pub mod report;
pub mod rng;
pub mod routing;
pub mod source;
pub mod stats;
