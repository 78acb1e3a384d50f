//! Discrete-event simulation of a job trace against a cluster and a policy.
//!
//! Jobs progress as fluid work: a running job completes iterations at
//! `1 / (solo_iter * xi)` per second, where `xi` is the worst interference
//! ratio across its current co-runners (gang synchronization makes the
//! slowest worker pace the whole job). Rates only change at events (job
//! arrivals, completions and preemptions), so integrating progress piecewise
//! is exact. At every event the engine releases finished gangs, admits
//! arrivals, runs one scheduling pass, recomputes rates and audits the gang
//! and capacity invariants.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{ClusterError, ClusterSpec, ClusterState, GpuId};
use crate::perf_model::{InterferenceTable, ProfileSet};
use crate::policies::{
    schedule_pass, solo_config, Action, JobInfo, Phase, PolicyError, PolicyKind, SchedContext,
};
use crate::trace::JobSpec;

/// Progress within this many iterations of the total counts as complete.
const COMPLETION_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("invariant violated at t={time}: {reason}")]
    Invariant { time: f64, reason: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Live simulation state of one job, alongside its scheduler-facing
/// [`JobInfo`].
#[derive(Debug, Clone)]
pub struct RunState {
    /// Iterations completed, fractional mid-flight.
    pub progress: f64,
    /// Iterations per second; zero while not running.
    pub rate: f64,
    /// Interference ratio currently applied (1 when running alone).
    pub xi: f64,
    pub start_time: Option<f64>,
    pub completion_time: Option<f64>,
    pub preemptions: u32,
    pub shared_ever: bool,
    /// Seconds spent actually running (excludes pending stretches).
    pub run_seconds: f64,
    /// Every gang allocation this job received, with its start timestamp.
    pub gpu_history: Vec<(f64, Vec<GpuId>)>,
}

impl RunState {
    fn new() -> Self {
        RunState {
            progress: 0.0,
            rate: 0.0,
            xi: 1.0,
            start_time: None,
            completion_time: None,
            preemptions: 0,
            shared_ever: false,
            run_seconds: 0.0,
            gpu_history: Vec::new(),
        }
    }
}

/// Advance fluid progress over `[from_t, to_t]` at a constant rate, clamped
/// to the job's total iterations.
pub fn progress_update(
    progress: f64,
    rate: f64,
    from_t: f64,
    to_t: f64,
    total_iters: f64,
) -> Result<f64, SimError> {
    if to_t < from_t {
        return Err(SimError::Invariant {
            time: to_t,
            reason: format!("negative progress interval [{from_t}, {to_t}]"),
        });
    }
    let advanced = progress + rate * (to_t - from_t);
    Ok(if advanced > total_iters - COMPLETION_EPS {
        total_iters
    } else {
        advanced
    })
}

/// Predicted completion timestamp of a running job.
pub fn completion_time_of(
    total_iters: f64,
    progress: f64,
    rate: f64,
    now: f64,
) -> Result<f64, SimError> {
    if rate <= 0.0 {
        return Err(SimError::Invariant {
            time: now,
            reason: format!("completion query with non-positive rate {rate}"),
        });
    }
    Ok(now + (total_iters - progress).max(0.0) / rate)
}

/// Aggregate outcomes for one job class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassAgg {
    pub count: usize,
    pub average_jct: f64,
    pub average_queuing: f64,
}

impl ClassAgg {
    fn from_jobs<'a>(jobs: impl Iterator<Item = &'a JobResult>) -> ClassAgg {
        let mut count = 0;
        let mut jct = 0.0;
        let mut queuing = 0.0;
        for j in jobs {
            count += 1;
            jct += j.jct;
            queuing += j.queuing;
        }
        if count == 0 {
            return ClassAgg::default();
        }
        ClassAgg {
            count,
            average_jct: jct / count as f64,
            average_queuing: queuing / count as f64,
        }
    }
}

/// Per-run aggregate metrics. Jobs requesting more than 4 GPUs count as
/// large.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub jobs: usize,
    pub average_jct: f64,
    pub average_queuing: f64,
    pub makespan: f64,
    pub large: ClassAgg,
    pub small: ClassAgg,
    pub per_task: BTreeMap<String, ClassAgg>,
}

/// Final record for one job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub job_id: String,
    pub task_name: String,
    pub gpus: u32,
    pub batch_per_gpu: u32,
    pub iterations: u64,
    pub arrival: f64,
    pub start: f64,
    pub completion: f64,
    pub jct: f64,
    pub queuing: f64,
    pub sub_batch: u32,
    pub accum_steps: u32,
    pub shared: bool,
    pub preemptions: u32,
    /// Every gang placement the job received, as (start time, GPU set).
    /// Exactly one entry for non-preemptive policies.
    pub gpu_history: Vec<(f64, Vec<GpuId>)>,
}

/// A constant-rate stretch of one job's execution, for timelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSegment {
    pub job_id: String,
    pub from: f64,
    pub to: f64,
    pub xi: f64,
    pub gpus: Vec<GpuId>,
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Record per-job constant-rate segments for visualization.
    pub record_timeline: bool,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub metrics: SimMetrics,
    pub per_job: Vec<JobResult>,
    pub timeline: Vec<JobSegment>,
    pub events_processed: usize,
    pub seed: u64,
}

/// Run one simulation to completion.
///
/// The trace is re-sorted by (arrival, position) internally. Fails fast on
/// configuration problems: a task without a profile, a profile without the
/// job's GPU count, a job that cannot fit GPU memory even at sub-batch 1, or
/// a gang larger than the cluster.
pub fn run(
    trace: &[JobSpec],
    cluster_spec: &ClusterSpec,
    policy: &PolicyKind,
    profiles: &ProfileSet,
    interference: &InterferenceTable,
    seed: u64,
    options: &SimOptions,
) -> Result<SimOutcome, SimError> {
    let mut engine = Engine::new(trace, cluster_spec, policy, profiles, interference, options)?;
    engine.run_to_completion()?;
    engine.finish(seed)
}

struct Engine<'a> {
    policy: &'a PolicyKind,
    profiles: &'a ProfileSet,
    interference: &'a InterferenceTable,
    options: &'a SimOptions,
    state: ClusterState,
    infos: Vec<JobInfo>,
    runs: Vec<RunState>,
    /// Arrival order: indices into `infos` sorted by (arrival, seq).
    arrival_queue: Vec<usize>,
    next_arrival: usize,
    clock: f64,
    events: usize,
    finished: usize,
    timeline: Vec<JobSegment>,
    /// Open timeline segment per job: (segment start, xi at that time).
    open_segment: Vec<Option<(f64, f64)>>,
}

impl<'a> Engine<'a> {
    fn new(
        trace: &[JobSpec],
        cluster_spec: &ClusterSpec,
        policy: &'a PolicyKind,
        profiles: &'a ProfileSet,
        interference: &'a InterferenceTable,
        options: &'a SimOptions,
    ) -> Result<Self, SimError> {
        profiles
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        let mut order: Vec<usize> = (0..trace.len()).collect();
        order.sort_by(|&a, &b| {
            trace[a]
                .arrival
                .total_cmp(&trace[b].arrival)
                .then(a.cmp(&b))
        });

        let mut infos = Vec::with_capacity(trace.len());
        for (seq, &idx) in order.iter().enumerate() {
            let spec = trace[idx].clone();
            let profile = profiles
                .get(&spec.task_name)
                .map_err(|e| SimError::Config(e.to_string()))?;
            profile
                .entry(spec.gpus)
                .map_err(|e| SimError::Config(e.to_string()))?;
            if spec.gpus > cluster_spec.total_gpus() {
                return Err(SimError::Config(format!(
                    "job {} requests {} GPUs but the cluster has {}",
                    spec.job_id,
                    spec.gpus,
                    cluster_spec.total_gpus()
                )));
            }
            let remaining = spec.iterations as f64;
            let info = JobInfo {
                seq: seq as u64,
                phase: Phase::NotArrived,
                remaining_iters: remaining,
                attained_service: 0.0,
                sub_batch: 0,
                accum_steps: 0,
                solo_iter: 0.0,
                spec,
            };
            // fail now if the job can never fit GPU memory
            solo_config(&info, profiles, cluster_spec.gpu_memory)
                .map_err(|e| SimError::Config(e.to_string()))?;
            infos.push(info);
        }

        let n = infos.len();
        Ok(Engine {
            policy,
            profiles,
            interference,
            options,
            state: ClusterState::new(*cluster_spec),
            infos,
            runs: vec![RunState::new(); n],
            arrival_queue: (0..n).collect(),
            next_arrival: 0,
            clock: 0.0,
            events: 0,
            finished: 0,
            timeline: Vec::new(),
            open_segment: vec![None; n],
        })
    }

    fn run_to_completion(&mut self) -> Result<(), SimError> {
        while self.finished < self.infos.len() {
            let next_arrival_t = self
                .arrival_queue
                .get(self.next_arrival)
                .map(|&i| self.infos[i].spec.arrival);
            let next_completion_t = self.next_completion()?;
            let t = match (next_arrival_t, next_completion_t) {
                (Some(a), Some(c)) => a.min(c),
                (Some(a), None) => a,
                (None, Some(c)) => c,
                (None, None) => {
                    return Err(SimError::Invariant {
                        time: self.clock,
                        reason: format!(
                            "stalled with {} jobs unfinished and nothing running",
                            self.infos.len() - self.finished
                        ),
                    });
                }
            };

            self.advance_to(t)?;
            self.events += 1;

            // completions first: release resources before placing anything
            self.process_completions()?;
            // then arrivals at this timestamp
            while self
                .arrival_queue
                .get(self.next_arrival)
                .is_some_and(|&i| self.infos[i].spec.arrival <= self.clock)
            {
                let idx = self.arrival_queue[self.next_arrival];
                self.infos[idx].phase = Phase::Pending;
                self.next_arrival += 1;
            }
            // then a single scheduling pass
            let actions = {
                let ctx = SchedContext {
                    cluster: &self.state,
                    jobs: &self.infos,
                    profiles: self.profiles,
                    interference: self.interference,
                    clock: self.clock,
                };
                schedule_pass(self.policy, &ctx)?
            };
            self.apply_actions(&actions)?;
            self.recompute_rates();
            self.audit()?;
        }
        Ok(())
    }

    fn next_completion(&self) -> Result<Option<f64>, SimError> {
        let mut next: Option<f64> = None;
        for (info, run) in self.infos.iter().zip(&self.runs) {
            if info.phase != Phase::Running {
                continue;
            }
            let t = completion_time_of(
                info.spec.iterations as f64,
                run.progress,
                run.rate,
                self.clock,
            )?;
            next = Some(match next {
                Some(cur) => cur.min(t),
                None => t,
            });
        }
        Ok(next)
    }

    fn advance_to(&mut self, t: f64) -> Result<(), SimError> {
        let dt = t - self.clock;
        if dt < 0.0 {
            return Err(SimError::Invariant {
                time: t,
                reason: format!("time went backwards from {}", self.clock),
            });
        }
        for (info, run) in self.infos.iter_mut().zip(&mut self.runs) {
            if info.phase != Phase::Running {
                continue;
            }
            run.progress = progress_update(
                run.progress,
                run.rate,
                self.clock,
                t,
                info.spec.iterations as f64,
            )?;
            info.remaining_iters = (info.spec.iterations as f64 - run.progress).max(0.0);
            info.attained_service += info.spec.gpus as f64 * dt;
            run.run_seconds += dt;
        }
        self.clock = t;
        Ok(())
    }

    fn process_completions(&mut self) -> Result<(), SimError> {
        for idx in 0..self.infos.len() {
            if self.infos[idx].phase != Phase::Running {
                continue;
            }
            let total = self.infos[idx].spec.iterations as f64;
            if self.runs[idx].progress >= total - COMPLETION_EPS {
                self.runs[idx].progress = total;
                self.infos[idx].remaining_iters = 0.0;
                self.infos[idx].phase = Phase::Finished;
                self.runs[idx].completion_time = Some(self.clock);
                self.close_segment(idx);
                self.state.release(self.infos[idx].seq)?;
                self.finished += 1;
            }
        }
        Ok(())
    }

    fn apply_actions(&mut self, actions: &[Action]) -> Result<(), SimError> {
        for action in actions {
            match action {
                Action::Start { job, gpus, config } => {
                    let idx = *job as usize;
                    self.state
                        .allocate(*job, self.infos[idx].spec.gpus, gpus, self.clock)?;
                    let info = &mut self.infos[idx];
                    info.phase = Phase::Running;
                    info.sub_batch = config.sub_batch;
                    info.accum_steps = config.accum_steps;
                    info.solo_iter = config.solo_iter;
                    let run = &mut self.runs[idx];
                    run.start_time.get_or_insert(self.clock);
                    run.shared_ever |= config.shared;
                    run.gpu_history.push((self.clock, {
                        let mut g = gpus.clone();
                        g.sort();
                        g
                    }));
                }
                Action::Preempt { job } => {
                    let idx = *job as usize;
                    let penalty = match self.policy {
                        PolicyKind::Tiresias(knobs) => knobs.preemption_penalty,
                        _ => {
                            return Err(SimError::Invariant {
                                time: self.clock,
                                reason: format!(
                                    "policy {} emitted a preempt action",
                                    self.policy.name()
                                ),
                            });
                        }
                    };
                    self.state.release(*job)?;
                    self.close_segment(idx);
                    let info = &mut self.infos[idx];
                    let run = &mut self.runs[idx];
                    // preemption burns finished work: roll progress back by
                    // the penalty expressed in solo iterations
                    let lost = penalty / info.solo_iter;
                    run.progress = (run.progress - lost).max(0.0);
                    info.remaining_iters = info.spec.iterations as f64 - run.progress;
                    info.phase = Phase::Pending;
                    run.rate = 0.0;
                    run.xi = 1.0;
                    run.preemptions += 1;
                }
                Action::Defer { .. } => {}
            }
        }
        Ok(())
    }

    /// Re-derive every running job's interference ratio and rate from the
    /// current occupancy. A job sharing with several co-runners takes the
    /// worst pairwise ratio: gang synchronization is paced by the slowest
    /// worker.
    fn recompute_rates(&mut self) {
        for idx in 0..self.infos.len() {
            if self.infos[idx].phase != Phase::Running {
                continue;
            }
            let seq = self.infos[idx].seq;
            let mut xi: f64 = 1.0;
            for co in self.state.co_runners(seq) {
                let other = &self.infos[co as usize];
                xi = xi.max(
                    self.interference
                        .xi_of(&self.infos[idx].spec.task_name, &other.spec.task_name),
                );
            }
            let rate = 1.0 / (self.infos[idx].solo_iter * xi);
            if self.runs[idx].xi != xi || self.runs[idx].rate != rate {
                self.close_segment(idx);
            }
            self.runs[idx].xi = xi;
            self.runs[idx].rate = rate;
            if self.options.record_timeline && self.open_segment[idx].is_none() {
                self.open_segment[idx] = Some((self.clock, xi));
            }
        }
    }

    fn close_segment(&mut self, idx: usize) {
        if let Some((from, xi)) = self.open_segment[idx].take() {
            if self.clock > from {
                let gpus = self.runs[idx]
                    .gpu_history
                    .last()
                    .map(|(_, g)| g.clone())
                    .unwrap_or_default();
                self.timeline.push(JobSegment {
                    job_id: self.infos[idx].spec.job_id.clone(),
                    from,
                    to: self.clock,
                    xi,
                    gpus,
                });
            }
        }
    }

    /// Gang, capacity and progress invariants, checked at every event.
    fn audit(&self) -> Result<(), SimError> {
        self.state.audit().map_err(|reason| SimError::Invariant {
            time: self.clock,
            reason,
        })?;
        for (info, run) in self.infos.iter().zip(&self.runs) {
            match info.phase {
                Phase::Running => {
                    let alloc =
                        self.state
                            .allocation(info.seq)
                            .ok_or_else(|| SimError::Invariant {
                                time: self.clock,
                                reason: format!("running job {} has no allocation", info.seq),
                            })?;
                    if alloc.gpus.len() != info.spec.gpus as usize {
                        return Err(SimError::Invariant {
                            time: self.clock,
                            reason: format!(
                                "job {} holds {} GPUs, gang needs {}",
                                info.seq,
                                alloc.gpus.len(),
                                info.spec.gpus
                            ),
                        });
                    }
                }
                Phase::Pending | Phase::NotArrived | Phase::Finished => {
                    if self.state.allocation(info.seq).is_some() {
                        return Err(SimError::Invariant {
                            time: self.clock,
                            reason: format!("non-running job {} holds GPUs", info.seq),
                        });
                    }
                }
            }
            if run.progress > info.spec.iterations as f64 + 1e-6 {
                return Err(SimError::Invariant {
                    time: self.clock,
                    reason: format!("job {} progressed past its iteration count", info.seq),
                });
            }
        }
        Ok(())
    }

    fn finish(self, seed: u64) -> Result<SimOutcome, SimError> {
        let mut per_job = Vec::with_capacity(self.infos.len());
        for (info, run) in self.infos.iter().zip(&self.runs) {
            let total = info.spec.iterations as f64;
            if (run.progress - total).abs() > 1e-6 {
                return Err(SimError::Invariant {
                    time: self.clock,
                    reason: format!(
                        "job {} finished with progress {} of {}",
                        info.seq, run.progress, total
                    ),
                });
            }
            let start = run.start_time.expect("finished job started");
            let completion = run.completion_time.expect("finished job completed");
            // queuing is total pending time; without preemptions that is
            // exactly the wait before the first start
            let queuing = if run.preemptions == 0 {
                start - info.spec.arrival
            } else {
                (completion - info.spec.arrival - run.run_seconds).max(0.0)
            };
            per_job.push(JobResult {
                job_id: info.spec.job_id.clone(),
                task_name: info.spec.task_name.clone(),
                gpus: info.spec.gpus,
                batch_per_gpu: info.spec.batch_per_gpu,
                iterations: info.spec.iterations,
                arrival: info.spec.arrival,
                start,
                completion,
                jct: completion - info.spec.arrival,
                queuing,
                sub_batch: info.sub_batch,
                accum_steps: info.accum_steps,
                shared: run.shared_ever,
                preemptions: run.preemptions,
                gpu_history: run.gpu_history.clone(),
            });
        }

        let metrics = compute_metrics(&per_job);
        Ok(SimOutcome {
            metrics,
            per_job,
            timeline: self.timeline,
            events_processed: self.events,
            seed,
        })
    }
}

/// Aggregate per-job results into [`SimMetrics`].
pub fn compute_metrics(per_job: &[JobResult]) -> SimMetrics {
    if per_job.is_empty() {
        return SimMetrics::default();
    }
    let all = ClassAgg::from_jobs(per_job.iter());
    let large = ClassAgg::from_jobs(per_job.iter().filter(|j| j.gpus > 4));
    let small = ClassAgg::from_jobs(per_job.iter().filter(|j| j.gpus <= 4));
    let min_arrival = per_job
        .iter()
        .map(|j| j.arrival)
        .fold(f64::INFINITY, f64::min);
    let max_completion = per_job.iter().map(|j| j.completion).fold(0.0, f64::max);
    let mut per_task: BTreeMap<String, ClassAgg> = BTreeMap::new();
    let mut tasks: Vec<&str> = per_job.iter().map(|j| j.task_name.as_str()).collect();
    tasks.sort_unstable();
    tasks.dedup();
    for task in tasks {
        per_task.insert(
            task.to_string(),
            ClassAgg::from_jobs(per_job.iter().filter(|j| j.task_name == task)),
        );
    }
    SimMetrics {
        jobs: per_job.len(),
        average_jct: all.average_jct,
        average_queuing: all.average_queuing,
        makespan: max_completion - min_arrival,
        large,
        small,
        per_task,
    }
}
