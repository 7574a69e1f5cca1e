//! Loss probabilities of GI/M/m/n queues.
//!
//! The exact route solves a first-passage recurrence over the number of
//! customers seen by arrivals ([`recurrence`]); an embedded-chain stationary
//! solve ([`mcoracle`]) and a discrete-event simulator ([`sim`]) check it
//! independently, and [`asymptotics`] gives the large-buffer behaviour.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision,
    clippy::needless_range_loop
)]

pub mod asymptotics;
pub mod cli;
pub mod dist;
pub mod error;
pub mod kernel;
pub mod mcoracle;
pub mod model;
pub mod quad;
pub mod recurrence;
pub mod root;
pub mod sim;
pub mod sum;

pub use dist::{Family, InterarrivalDistribution, MomentSet};
pub use error::{Error, Result};
pub use model::QueueModel;
