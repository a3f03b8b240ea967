//! Bounded-dimensional semi-quantum certification games.
//!
//! The crate builds the score operator of a measurement-device-independent
//! game from a target two-qubit state, evaluates effective POVM elements and
//! average scores, maximises the score by see-saw over states and
//! measurements, and checks the resulting strategies against local-unitary
//! equivalence classes. The same machinery runs the dual entanglement
//! swapping game, where sources and the joint measurement trade places.
//!
//! Modules, bottom-up:
//!
//! - [`qlin`]: labelled tensor-product linear algebra and seeded sampling.
//! - [`witness`]: score operator construction and input-state decomposition.
//! - [`game`]: effective elements, scores, ideal strategy.
//! - [`certify`]: analytic bound, see-saw, certification verdicts.
//! - [`swap`]: dual swapping game and complete-BSM checker.
//! - [`oracle`]: sampled brute-force checks of the structural lemmas.

pub mod error;
pub mod qlin;
pub mod witness;
pub mod game;
pub mod certify;
pub mod swap;
pub mod oracle;

pub use error::{Error, Result};
