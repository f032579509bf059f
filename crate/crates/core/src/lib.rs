//! Context-aware group buying in dense small-cell networks.
//!
//! Graphical coalition formation games with three preference orders, plus
//! the scenarios built on them: cooperative caching with Shapley cost
//! sharing, spectrum group buying through a double auction, and local
//! cooperative channel selection.

pub mod auction;
pub mod caching;
pub mod coalition;
pub mod harness;
pub mod lcg;
pub mod rng;
pub mod shapley;
pub mod topology;
