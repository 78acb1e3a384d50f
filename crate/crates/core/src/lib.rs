//! Trace-driven simulation and scheduling for multi-tenant GPU clusters
//! where jobs may share GPUs.
//!
//! The crate models distributed training jobs with closed-form cost models
//! (linear compute, latency-bandwidth all-reduce, a p-norm overlap term and
//! gradient accumulation), decides share-vs-wait for job pairs by comparing
//! the two endpoint schedules, and runs whole traces through a discrete-event
//! engine under five policies: FIFO, SJF, a discretized-LAS Tiresias,
//! first-fit sharing (SJF-FFS) and benefit-aware sharing (SJF-BSBF).
//!
//! Everything is deterministic for a fixed seed; randomness only enters
//! through workload generation and sampled interference tables.

pub mod cluster;
pub mod defaults;
pub mod pair_sched;
pub mod perf_model;
pub mod policies;
pub mod report;
pub mod simulator;
pub mod trace;

pub use cluster::{ClusterSpec, ClusterState, GpuId, GPU_CAPACITY};
pub use pair_sched::{
    batch_size_scaling, best_pair_schedule, brute_force_kappa, pair_jct, JobSnapshot, PairSchedule,
    ShareDecision,
};
pub use perf_model::{
    comm_time, comp_time, fit_profile, iter_time, shared_iter_time, throughput, InterferenceTable,
    ModelProfile, ProfileSet,
};
pub use policies::{schedule_pass, PolicyKind, TiresiasKnobs};
pub use simulator::{run, SimMetrics, SimOptions, SimOutcome};
pub use trace::{generate_workload, load_trace, save_trace, JobSpec, WorkloadSpec};
