//! Sojourn relations and high-frequency Poisson kernel asymptotics on
//! scattering and asymptotically hyperbolic model manifolds.

pub mod error;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod sojourn;
pub mod ode;
pub mod poisson;
pub mod radiation;
pub mod scenario;

pub use error::{Error, Result};
