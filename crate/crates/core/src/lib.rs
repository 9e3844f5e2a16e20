//! Natural bargaining dynamics on weighted exchange networks.
//!
//! Players sit on the nodes of a weighted graph and may split an edge's
//! weight with one neighbor. The crate simulates a damped local
//! message-passing process, certifies its fixed points as Nash bargaining
//! solutions through LP duality, decomposes solutions into structures with
//! slack levels, and provides the comparison processes used to reason about
//! convergence on paths.

pub mod bipartite;
pub mod dynamics;
pub mod error;
pub mod instance;
pub mod kt;
pub mod matching;
pub mod nb;
pub mod path;
pub mod pipeline;

pub use error::{Error, Result};
pub use instance::Instance;
