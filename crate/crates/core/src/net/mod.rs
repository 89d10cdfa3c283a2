//! Topology, interference and schedule construction.

pub mod interference;
pub mod schedule;
pub mod topology;

pub use interference::{InterferenceKind, InterferenceModel};
pub use schedule::{
    broadcast_links, extra_activation, greedy_maximal_schedule, is_conflict_free, is_maximal,
    max_weight_schedule_oracle, Activation, BroadcastId, BroadcastLink, Schedule, ScheduleBuilder, SchedulerKind,
    ScheduleSpace, ORACLE_LIMIT,
};
pub use topology::{Link, LinkId, NodeId, Topology, TopologySpec};
