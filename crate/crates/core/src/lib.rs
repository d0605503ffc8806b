//! Anytime-reliable linear tree codes over erasure channels, and closed-loop
//! stabilization of linear plants through them.

pub mod channel;
pub mod code;
pub mod decoder;
pub mod estimation;
pub mod gf2;
pub mod simulate;
pub mod thresholds;
