//! Event-driven contact process on the graphical representation.

pub mod decompose;
pub mod engine;
pub mod lazy_tree;
pub mod observables;
pub mod timeline;

pub use decompose::{decomposed_simulate, Decomposition};
pub use engine::{run, simulate, validate_trajectory, Channel, Flip, Mode, Network, Outcome, SimGraph, SimParams, Status, Trajectory};
pub use observables::{
    count_infections, end_infection_count, excursion_time, leaf_infection_count, reparametrized_simulate, survival_time, Count, CountVariant,
};
pub use lazy_tree::LazyGwTree;
pub use timeline::{Cursor, EventTimeline, StreamId};
