//! Flow-based community detection with the map equation.

mod detect;
mod flow;
mod mapeq;
mod sweep;

pub use detect::detect_communities;
pub use flow::{stationary_flow, FlowGraph, DEFAULT_TELEPORT};
pub use mapeq::{brute_force_minimum, for_each_partition, map_equation, plogp};
pub use sweep::{
    average_community_size, mark_pareto, markov_times, mean_community_visits, sweep_markov_time,
    write_sweep_csv, CommunityGraph, Partition, SweepPoint,
};
