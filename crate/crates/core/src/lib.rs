//! Infinite-server queues modulated by a semi-Markov environment.
//!
//! The crate simulates the count process directly and samples its
//! time-asymptotic law, a Poisson mixture whose mixing variables solve an
//! affine perpetuity `V = C·V + D` built from regeneration cycles of the
//! environment.

pub mod cli;
pub mod error;
pub mod feedback;
pub mod io;
pub mod limit_law;
pub mod presets;
pub mod queue;
pub mod rng;
pub mod semi_markov;
pub mod sojourn;
pub mod sre;
pub mod stats;

pub use error::{Error, Result};
