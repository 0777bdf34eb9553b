//! Front tracking for the p-system `v_t - u_x = 0`, `u_t + p(v)_x = 0` with
//! `p(v) = 1/(3v^3)`, written in the (u, ρ) variables with ρ = 1/v.
//!
//! The crate is organised bottom-up:
//!
//! * [`riemann`] — wave curves, Riemann invariants and the exact Riemann solver;
//! * [`interaction`] — crossing maps for a small wave hitting a shock, and the
//!   amplification factors derived from them;
//! * [`tracking`] — the event-driven engine that moves fronts with prescribed
//!   speeds but resolves every collision with exact strengths;
//! * [`scenarios`] — builders and runners for the constructions in which the
//!   total variation of such approximate solutions grows without bound;
//! * [`output`] — CSV, JSON and SVG emitters.

pub mod error;
pub mod interaction;
pub mod output;
pub mod riemann;
pub mod roots;
pub mod scenarios;
pub mod tracking;

pub use error::{Error, Result};
