//! Joint UAV navigation and channel-knowledge-map completion.
//!
//! The crate builds a lattice map of expected downlink SINR over a synthetic
//! urban airspace, completes a partially known map with ordinary Kriging, and
//! plans flights that trade completion length, outage exposure and the number
//! of newly measured cells:
//!
//! - [`env`]: city realization and link-level radio quantities.
//! - [`ckm`]: lattice discretization and the map itself.
//! - [`kriging`]: semivariogram fitting, Kriging weights, variance, MSE.
//! - [`geom`]: sphere-per-cell intersection geometry and round objectives.
//! - [`spp`]: shortest-path planner on the directed 6-neighbor lattice.
//! - [`tsp`]: greedy measurement selection and open-TSP trajectory.
//! - [`sim`]: multi-round campaigns and parameter sweeps.
//! - [`io`]: JSON/CSV persistence.

pub mod ckm;
pub mod env;
pub mod error;
pub mod geom;
pub mod grid;
pub mod io;
pub mod kriging;
mod linalg;
pub mod sim;
pub mod spp;
pub mod tsp;
pub mod vec3;

pub use ckm::ChannelKnowledgeMap;
pub use error::{Error, Result};
pub use grid::{GridIndex, GridSpec};

// The guide's code blocks run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/map.md")]
    mod map {}
    #[doc = include_str!("../../../book/src/kriging.md")]
    mod kriging {}
    #[doc = include_str!("../../../book/src/objectives.md")]
    mod objectives {}
    #[doc = include_str!("../../../book/src/spp.md")]
    mod spp {}
    #[doc = include_str!("../../../book/src/tsp.md")]
    mod tsp {}
    #[doc = include_str!("../../../book/src/campaigns.md")]
    mod campaigns {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
