//! Joint nonparametric latent factor model over customers' viewing histories and
//! their locations on the sphere.
//!
//! Interaction clusters couple a per-cluster mixture over von Mises-Fisher
//! location factors with a per-cluster mixture over multinomial video topics.
//! Both mixtures draw their atoms from shared global Dirichlet processes.
//! Inference is collapsed Gibbs sampling in the direct-assignment
//! representation, with an approximate shard-parallel variant.

pub mod categorical;
pub mod dirmult;
pub mod error;
pub mod eval;
pub mod geo;
pub mod io;
pub mod parallel;
pub mod sampler;
pub mod state;
pub mod synth;
pub mod vmf;

pub use error::{Error, Result};
