//! Scheduling policies: FIFO, SJF, a discretized-LAS Tiresias, and the two
//! GPU-sharing policies SJF-FFS and SJF-BSBF.
//!
//! A policy is a pure function from (pending queue, cluster state, clock) to
//! placement actions, invoked by the simulator at event boundaries. The
//! sharing policies walk the pending list shortest-expected-remaining first;
//! when free GPUs cannot cover a job they evaluate every job resident on a
//! one-job GPU as a sharing candidate. SJF-BSBF runs the sub-batch search and
//! keeps only candidates whose pair schedule says sharing beats waiting;
//! SJF-FFS is the same machinery with the search disabled: it always shares
//! at the largest memory-feasible sub-batch.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{ClusterState, GpuId};
use crate::pair_sched::{self, batch_size_scaling, JobSnapshot, PairContext, PairError};
use crate::perf_model::{self, InterferenceTable, PerfError, ProfileSet};
use crate::trace::JobSpec;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error(transparent)]
    Pair(#[from] PairError),
    #[error("job {job} cannot run at all: sub-batch 1 of `{task}` needs {need:.2e} B > {cap:.2e} B GPU memory")]
    NeverFeasible {
        job: u64,
        task: String,
        need: f64,
        cap: f64,
    },
}

/// Tiresias knobs: queue thresholds over attained service (GPU-seconds) and
/// the work re-done after a preemption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiresiasKnobs {
    pub queue_thresholds: Vec<f64>,
    pub preemption_penalty: f64,
}

impl Default for TiresiasKnobs {
    fn default() -> Self {
        // two queues split at one GPU-hour, 30 s of lost work per preemption
        TiresiasKnobs {
            queue_thresholds: vec![3600.0],
            preemption_penalty: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyKind {
    Fifo,
    Sjf,
    Tiresias(TiresiasKnobs),
    SjfFfs,
    SjfBsbf,
}

impl PolicyKind {
    /// CLI spelling of the policy.
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Fifo => "fifo",
            PolicyKind::Sjf => "sjf",
            PolicyKind::Tiresias(_) => "tiresias",
            PolicyKind::SjfFfs => "sjf-ffs",
            PolicyKind::SjfBsbf => "sjf-bsbf",
        }
    }

    pub fn parse(name: &str) -> Option<PolicyKind> {
        match name {
            "fifo" => Some(PolicyKind::Fifo),
            "sjf" => Some(PolicyKind::Sjf),
            "tiresias" => Some(PolicyKind::Tiresias(TiresiasKnobs::default())),
            "sjf-ffs" => Some(PolicyKind::SjfFfs),
            "sjf-bsbf" => Some(PolicyKind::SjfBsbf),
            _ => None,
        }
    }

    pub const ALL_NAMES: [&'static str; 5] = ["fifo", "sjf", "tiresias", "sjf-ffs", "sjf-bsbf"];

    pub fn is_preemptive(&self) -> bool {
        matches!(self, PolicyKind::Tiresias(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// In the trace but not yet arrived; invisible to policies.
    NotArrived,
    Pending,
    Running,
    Finished,
}

/// Scheduler-facing view of one job, maintained by the simulator.
#[derive(Debug, Clone)]
pub struct JobInfo {
    pub spec: JobSpec,
    /// Dense id; doubles as the final arrival-order tie-break.
    pub seq: u64,
    pub phase: Phase,
    pub remaining_iters: f64,
    /// GPU-seconds consumed so far (Tiresias priority input).
    pub attained_service: f64,
    /// Current configuration; meaningful while running.
    pub sub_batch: u32,
    pub accum_steps: u32,
    pub solo_iter: f64,
}

/// Read-only context handed to a scheduling pass.
pub struct SchedContext<'a> {
    pub cluster: &'a ClusterState,
    pub jobs: &'a [JobInfo],
    pub profiles: &'a ProfileSet,
    pub interference: &'a InterferenceTable,
    pub clock: f64,
}

/// Start configuration decided by a pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StartConfig {
    pub sub_batch: u32,
    pub accum_steps: u32,
    pub solo_iter: f64,
    /// True when the placement put the job on at least one occupied GPU.
    pub shared: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Start {
        job: u64,
        gpus: Vec<GpuId>,
        config: StartConfig,
    },
    Preempt {
        job: u64,
    },
    Defer {
        job: u64,
    },
}

/// Largest memory-feasible solo configuration: walks the halving ladder from
/// the requested batch and returns (sub_batch, accum_steps) of the first
/// sub-batch that fits GPU memory alone.
pub fn solo_config(
    job: &JobInfo,
    profiles: &ProfileSet,
    gpu_memory: f64,
) -> Result<(u32, u32), PolicyError> {
    let profile = profiles.get(&job.spec.task_name)?;
    let requested = job.spec.batch_per_gpu;
    let mut b = requested as f64;
    loop {
        let c = b.ceil() as u32;
        let steps = requested.div_ceil(c);
        let eff = requested.div_ceil(steps);
        if profile.mem_footprint(eff) <= gpu_memory {
            return Ok((eff, steps));
        }
        if c == 1 {
            return Err(PolicyError::NeverFeasible {
                job: job.seq,
                task: job.spec.task_name.clone(),
                need: profile.mem_footprint(1),
                cap: gpu_memory,
            });
        }
        b /= 2.0;
    }
}

/// Expected remaining solo runtime L = t_iter * remaining iterations, at the
/// job's largest memory-feasible solo configuration.
pub fn expected_remaining(
    job: &JobInfo,
    profiles: &ProfileSet,
    gpu_memory: f64,
) -> Result<f64, PolicyError> {
    let profile = profiles.get(&job.spec.task_name)?;
    let (_, steps) = solo_config(job, profiles, gpu_memory)?;
    let iter = perf_model::iter_time(job.spec.batch_per_gpu, steps, profile, job.spec.gpus)?;
    Ok(iter * job.remaining_iters)
}

/// Discretized-LAS queue index: the number of thresholds the job's attained
/// service has crossed. Queue 0 is the highest priority.
pub fn tiresias_priority(attained_service: f64, knobs: &TiresiasKnobs) -> usize {
    knobs
        .queue_thresholds
        .partition_point(|&t| attained_service >= t)
}

/// One scheduling pass. Pure: mutations happen on an internal scratch copy of
/// the cluster; the caller applies the returned actions.
pub fn schedule_pass(
    policy: &PolicyKind,
    ctx: &SchedContext<'_>,
) -> Result<Vec<Action>, PolicyError> {
    match policy {
        PolicyKind::Fifo => fifo_pass(ctx),
        PolicyKind::Sjf => sjf_pass(ctx, ShareMode::None),
        PolicyKind::SjfFfs => sjf_pass(ctx, ShareMode::FirstFit),
        PolicyKind::SjfBsbf => sjf_pass(ctx, ShareMode::BestBenefit),
        PolicyKind::Tiresias(knobs) => tiresias_pass(ctx, knobs),
    }
}

fn pending_ids(ctx: &SchedContext<'_>) -> Vec<u64> {
    ctx.jobs
        .iter()
        .filter(|j| j.phase == Phase::Pending)
        .map(|j| j.seq)
        .collect()
}

/// Strict FIFO: start jobs in arrival order on free GPUs; the first job that
/// does not fit blocks the queue (head-of-line semantics).
fn fifo_pass(ctx: &SchedContext<'_>) -> Result<Vec<Action>, PolicyError> {
    let mut order = pending_ids(ctx);
    order.sort_by(|&a, &b| {
        let (ja, jb) = (&ctx.jobs[a as usize], &ctx.jobs[b as usize]);
        ja.spec
            .arrival
            .total_cmp(&jb.spec.arrival)
            .then(ja.seq.cmp(&jb.seq))
    });
    let mut scratch = ctx.cluster.clone();
    let mut actions = Vec::new();
    let mut blocked = false;
    for id in order {
        let job = &ctx.jobs[id as usize];
        let free = scratch.free_gpus();
        if !blocked && free.len() >= job.spec.gpus as usize {
            let gpus: Vec<GpuId> = free[..job.spec.gpus as usize].to_vec();
            let config = solo_start(job, ctx)?;
            scratch
                .allocate(id, job.spec.gpus, &gpus, ctx.clock)
                .expect("scratch allocate");
            actions.push(Action::Start {
                job: id,
                gpus,
                config,
            });
        } else {
            blocked = true;
            actions.push(Action::Defer { job: id });
        }
    }
    Ok(actions)
}

fn solo_start(job: &JobInfo, ctx: &SchedContext<'_>) -> Result<StartConfig, PolicyError> {
    let gpu_memory = ctx.cluster.spec().gpu_memory;
    let profile = ctx.profiles.get(&job.spec.task_name)?;
    let (sub_batch, accum_steps) = solo_config(job, ctx.profiles, gpu_memory)?;
    let solo_iter =
        perf_model::iter_time(job.spec.batch_per_gpu, accum_steps, profile, job.spec.gpus)?;
    Ok(StartConfig {
        sub_batch,
        accum_steps,
        solo_iter,
        shared: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ShareMode {
    /// Exclusive GPUs only.
    None,
    /// Share unconditionally at the largest feasible sub-batch.
    FirstFit,
    /// Search sub-batches and share only when the pair schedule wins.
    BestBenefit,
}

/// Shortest-expected-remaining-first pass, optionally extended with the
/// GPU-sharing path when free GPUs cannot cover a job.
fn sjf_pass(ctx: &SchedContext<'_>, mode: ShareMode) -> Result<Vec<Action>, PolicyError> {
    let gpu_memory = ctx.cluster.spec().gpu_memory;
    let mut order: Vec<(f64, u64)> = Vec::new();
    for id in pending_ids(ctx) {
        let job = &ctx.jobs[id as usize];
        order.push((expected_remaining(job, ctx.profiles, gpu_memory)?, id));
    }
    order.sort_by(|a, b| {
        let (ja, jb) = (&ctx.jobs[a.1 as usize], &ctx.jobs[b.1 as usize]);
        a.0.total_cmp(&b.0)
            .then(ja.spec.arrival.total_cmp(&jb.spec.arrival))
            .then(a.1.cmp(&b.1))
    });

    let mut scratch = ctx.cluster.clone();
    let mut actions = Vec::new();
    // configs of jobs started earlier in this very pass, so they can serve
    // as sharing candidates with live numbers
    let mut started: BTreeMap<u64, StartConfig> = BTreeMap::new();
    for (_, id) in order {
        let job = &ctx.jobs[id as usize];
        let needed = job.spec.gpus as usize;
        let free = scratch.free_gpus();
        if free.len() >= needed {
            let gpus: Vec<GpuId> = free[..needed].to_vec();
            let config = solo_start(job, ctx)?;
            scratch
                .allocate(id, job.spec.gpus, &gpus, ctx.clock)
                .expect("scratch allocate");
            started.insert(id, config.clone());
            actions.push(Action::Start {
                job: id,
                gpus,
                config,
            });
            continue;
        }
        if mode != ShareMode::None {
            let one_job = scratch.one_job_gpus();
            if free.len() + one_job.len() >= needed {
                if let Some((gpus, config)) = sharing_plan(ctx, &scratch, &started, job, mode)? {
                    scratch
                        .allocate(id, job.spec.gpus, &gpus, ctx.clock)
                        .expect("scratch allocate");
                    started.insert(id, config.clone());
                    actions.push(Action::Start {
                        job: id,
                        gpus,
                        config,
                    });
                    continue;
                }
            }
        }
        actions.push(Action::Defer { job: id });
    }
    Ok(actions)
}

/// A sharing candidate: one job resident on one-job GPUs, with its evaluated
/// pair schedule.
struct Candidate {
    scan_rank: usize,
    gpus: Vec<GpuId>,
    sub_batch: u32,
    avg_jct: f64,
}

/// Build the sharing placement for `job`: evaluate every resident of a
/// one-job GPU as a pair, filter and order the candidates, then take whole
/// candidate GPU sets (prefix of the last) until the gang is covered, topping
/// up from free GPUs only if the candidates alone fall short.
fn sharing_plan(
    ctx: &SchedContext<'_>,
    scratch: &ClusterState,
    started: &BTreeMap<u64, StartConfig>,
    job: &JobInfo,
    mode: ShareMode,
) -> Result<Option<(Vec<GpuId>, StartConfig)>, PolicyError> {
    let gpu_memory = ctx.cluster.spec().gpu_memory;
    let profile = ctx.profiles.get(&job.spec.task_name)?;
    let needed = job.spec.gpus as usize;
    let requested = job.spec.batch_per_gpu;

    // Distinct resident jobs in GPU scan order, each with its one-job GPUs.
    let mut residents: Vec<(u64, Vec<GpuId>)> = Vec::new();
    for gpu in scratch.one_job_gpus() {
        let owner = scratch.occupants(gpu)[0];
        match residents.iter_mut().find(|(id, _)| *id == owner) {
            Some((_, gpus)) => gpus.push(gpu),
            None => residents.push((owner, vec![gpu])),
        }
    }

    let mut candidates: Vec<Candidate> = Vec::new();
    for (scan_rank, (owner, gpus)) in residents.into_iter().enumerate() {
        let resident = &ctx.jobs[owner as usize];
        let resident_profile = ctx.profiles.get(&resident.spec.task_name)?;
        // a resident started earlier in this pass carries its config in the
        // overlay, not yet in ctx.jobs
        let (res_solo_iter, res_sub_batch) = match started.get(&owner) {
            Some(c) => (c.solo_iter, c.sub_batch),
            None => (resident.solo_iter, resident.sub_batch),
        };
        let (xi_resident, xi_arriving) = ctx
            .interference
            .lookup(&resident.spec.task_name, &job.spec.task_name);
        let running = JobSnapshot::new(
            res_solo_iter,
            resident.remaining_iters.max(0.0),
            xi_resident,
        )?;
        let pair_ctx = PairContext {
            running,
            running_mem: resident_profile.mem_footprint(res_sub_batch),
            arriving_profile: profile,
            arriving_gpus: job.spec.gpus,
            arriving_iters: job.remaining_iters.ceil() as u64,
            arriving_xi: xi_arriving,
            memory_cap: gpu_memory,
        };
        let schedule = match mode {
            ShareMode::BestBenefit => match batch_size_scaling(&pair_ctx, requested) {
                Ok(s) => {
                    if !s.decision.share {
                        continue;
                    }
                    s
                }
                // no sub-batch fits next to this resident: its GPUs are unavailable
                Err(PairError::InfeasiblePair { .. }) => continue,
                Err(e) => return Err(e.into()),
            },
            ShareMode::FirstFit => match first_fit_schedule(&pair_ctx, requested)? {
                Some(s) => s,
                None => continue,
            },
            ShareMode::None => unreachable!("sharing_plan requires a sharing mode"),
        };
        candidates.push(Candidate {
            scan_rank,
            gpus,
            sub_batch: schedule.sub_batch,
            avg_jct: schedule.decision.avg_jct,
        });
    }

    candidates.sort_by(|a, b| {
        a.avg_jct
            .total_cmp(&b.avg_jct)
            .then(a.scan_rank.cmp(&b.scan_rank))
    });

    let mut gpus: Vec<GpuId> = Vec::new();
    let mut sub_batch = u32::MAX;
    for cand in &candidates {
        if gpus.len() >= needed {
            break;
        }
        let take = (needed - gpus.len()).min(cand.gpus.len());
        gpus.extend_from_slice(&cand.gpus[..take]);
        sub_batch = sub_batch.min(cand.sub_batch);
    }
    if gpus.is_empty() {
        return Ok(None);
    }
    if gpus.len() < needed {
        // candidates alone cannot cover the gang; draw the remainder from
        // free GPUs (they impose no pairing of their own)
        for gpu in scratch.free_gpus() {
            if gpus.len() >= needed {
                break;
            }
            gpus.push(gpu);
        }
    }
    if gpus.len() < needed {
        return Ok(None);
    }

    let accum_steps = requested.div_ceil(sub_batch);
    let sub_batch = requested.div_ceil(accum_steps);
    let solo_iter = perf_model::iter_time(requested, accum_steps, profile, job.spec.gpus)?;
    Ok(Some((
        gpus,
        StartConfig {
            sub_batch,
            accum_steps,
            solo_iter,
            shared: true,
        },
    )))
}

/// First-fit configuration for one pair: the largest sub-batch that fits GPU
/// memory, shared unconditionally at kappa = 0. The pair schedule is still
/// evaluated to give the candidate its ordering key.
fn first_fit_schedule(
    ctx: &PairContext<'_>,
    requested: u32,
) -> Result<Option<pair_sched::PairSchedule>, PolicyError> {
    let mut b = requested as f64;
    loop {
        let c = b.ceil() as u32;
        let steps = requested.div_ceil(c);
        let eff = requested.div_ceil(steps);
        if ctx.running_mem + ctx.arriving_profile.mem_footprint(eff) <= ctx.memory_cap {
            let solo =
                perf_model::iter_time(requested, steps, ctx.arriving_profile, ctx.arriving_gpus)?;
            let arriving = JobSnapshot::new(solo, ctx.arriving_iters as f64, ctx.arriving_xi)?;
            let (jct_running, jct_arriving) = pair_sched::pair_jct(&ctx.running, &arriving, 0.0)?;
            let decision = pair_sched::ShareDecision {
                share: true,
                kappa: 0.0,
                avg_jct: 0.5 * (jct_running + jct_arriving),
                jct_running,
                jct_arriving,
            };
            return Ok(Some(pair_sched::PairSchedule {
                decision,
                sub_batch: eff,
                accum_steps: steps,
            }));
        }
        if c == 1 {
            return Ok(None);
        }
        b /= 2.0;
    }
}

/// First-fit GPU selection: one-job GPUs in scan order
/// until the gang is covered, topped up from free GPUs; `None` when free plus
/// one-job GPUs cannot cover it. The SJF-FFS policy itself orders candidates
/// like SJF-BSBF (it is that policy minus the configuration search), so this
/// helper is the simpler reference shape of the sharing path.
pub fn first_fit_share(gpus_needed: u32, state: &ClusterState) -> Option<Vec<GpuId>> {
    let needed = gpus_needed as usize;
    let one_job = state.one_job_gpus();
    let free = state.free_gpus();
    if one_job.len() + free.len() < needed {
        return None;
    }
    let mut gpus: Vec<GpuId> = one_job.into_iter().take(needed).collect();
    let short = needed - gpus.len();
    gpus.extend(free.into_iter().take(short));
    Some(gpus)
}

/// Preemptive discretized-LAS pass: order every incomplete job by (queue,
/// arrival, id), admit greedily by GPU count, preempt running jobs that fell
/// out of the admitted set, then place admitted pending jobs on the freed
/// GPUs.
fn tiresias_pass(
    ctx: &SchedContext<'_>,
    knobs: &TiresiasKnobs,
) -> Result<Vec<Action>, PolicyError> {
    let mut order: Vec<u64> = ctx
        .jobs
        .iter()
        .filter(|j| matches!(j.phase, Phase::Pending | Phase::Running))
        .map(|j| j.seq)
        .collect();
    order.sort_by(|&a, &b| {
        let (ja, jb) = (&ctx.jobs[a as usize], &ctx.jobs[b as usize]);
        let (qa, qb) = (
            tiresias_priority(ja.attained_service, knobs),
            tiresias_priority(jb.attained_service, knobs),
        );
        qa.cmp(&qb)
            .then(ja.spec.arrival.total_cmp(&jb.spec.arrival))
            .then(a.cmp(&b))
    });

    // Admission by count: Tiresias runs jobs exclusively, so capacity is just
    // the total GPU count.
    let total = ctx.cluster.spec().total_gpus() as usize;
    let mut available = total;
    let mut admitted = Vec::new();
    for &id in &order {
        let g = ctx.jobs[id as usize].spec.gpus as usize;
        if g <= available {
            admitted.push(id);
            available -= g;
        }
    }

    let mut actions = Vec::new();
    let mut scratch = ctx.cluster.clone();
    for job in ctx.jobs {
        if job.phase == Phase::Running && !admitted.contains(&job.seq) {
            scratch
                .release(job.seq)
                .expect("running job has allocation");
            actions.push(Action::Preempt { job: job.seq });
        }
    }
    for &id in &admitted {
        let job = &ctx.jobs[id as usize];
        if job.phase != Phase::Pending {
            continue;
        }
        let free = scratch.free_gpus();
        let needed = job.spec.gpus as usize;
        // count-based admission guarantees this fits
        let gpus: Vec<GpuId> = free[..needed].to_vec();
        let config = solo_start(job, ctx)?;
        scratch
            .allocate(id, job.spec.gpus, &gpus, ctx.clock)
            .expect("scratch allocate");
        actions.push(Action::Start {
            job: id,
            gpus,
            config,
        });
    }
    for job in ctx.jobs {
        if job.phase == Phase::Pending && !admitted.contains(&job.seq) {
            actions.push(Action::Defer { job: job.seq });
        }
    }
    Ok(actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ClusterSpec;
    use crate::defaults::{default_profiles, DEFAULT_GPU_MEMORY};
    use crate::perf_model::InterferenceTable;

    fn mk_job(seq: u64, task: &str, arrival: f64, gpus: u32, batch: u32, iters: u64) -> JobInfo {
        JobInfo {
            spec: JobSpec {
                job_id: format!("job-{seq}"),
                task_name: task.into(),
                arrival,
                gpus,
                batch_per_gpu: batch,
                iterations: iters,
            },
            seq,
            phase: Phase::Pending,
            remaining_iters: iters as f64,
            attained_service: 0.0,
            sub_batch: 0,
            accum_steps: 0,
            solo_iter: 0.0,
        }
    }

    fn cluster(servers: u32, gpus: u32) -> ClusterState {
        ClusterState::new(ClusterSpec {
            num_servers: servers,
            gpus_per_server: gpus,
            gpu_memory: DEFAULT_GPU_MEMORY,
        })
    }

    fn start_running(
        state: &mut ClusterState,
        job: &mut JobInfo,
        gpus: &[GpuId],
        profiles: &ProfileSet,
    ) {
        let (sub, steps) = solo_config(job, profiles, state.spec().gpu_memory).unwrap();
        job.phase = Phase::Running;
        job.sub_batch = sub;
        job.accum_steps = steps;
        job.solo_iter = perf_model::iter_time(
            job.spec.batch_per_gpu,
            steps,
            profiles.get(&job.spec.task_name).unwrap(),
            job.spec.gpus,
        )
        .unwrap();
        state.allocate(job.seq, job.spec.gpus, gpus, 0.0).unwrap();
    }

    fn starts(actions: &[Action]) -> Vec<u64> {
        actions
            .iter()
            .filter_map(|a| match a {
                Action::Start { job, .. } => Some(*job),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn fifo_starts_in_arrival_order() {
        let profiles = default_profiles();
        let interference = InterferenceTable::new(1.3).unwrap();
        let jobs = vec![
            mk_job(0, "cifar10", 0.0, 2, 128, 100),
            mk_job(1, "ncf", 1.0, 2, 256, 100),
        ];
        let state = cluster(1, 4);
        let ctx = SchedContext {
            cluster: &state,
            jobs: &jobs,
            profiles: &profiles,
            interference: &interference,
            clock: 2.0,
        };
        let actions = schedule_pass(&PolicyKind::Fifo, &ctx).unwrap();
        assert_eq!(starts(&actions), vec![0, 1]);
    }

    #[test]
    fn fifo_blocks_at_head_of_line() {
        let profiles = default_profiles();
        let interference = InterferenceTable::new(1.3).unwrap();
        let jobs = vec![
            mk_job(0, "cifar10", 0.0, 8, 128, 100), // does not fit a 4-GPU cluster
            mk_job(1, "ncf", 1.0, 1, 256, 100),
        ];
        let state = cluster(1, 4);
        let ctx = SchedContext {
            cluster: &state,
            jobs: &jobs,
            profiles: &profiles,
            interference: &interference,
            clock: 2.0,
        };
        let actions = schedule_pass(&PolicyKind::Fifo, &ctx).unwrap();
        assert!(
            starts(&actions).is_empty(),
            "HOL job must block the queue: {actions:?}"
        );
    }

    #[test]
    fn sjf_orders_by_expected_remaining() {
        let profiles = default_profiles();
        let interference = InterferenceTable::new(1.3).unwrap();
        // same task, same batch: fewer iterations means smaller L
        let jobs = vec![
            mk_job(0, "cifar10", 0.0, 4, 128, 3000),
            mk_job(1, "cifar10", 1.0, 4, 128, 1000),
        ];
        let state = cluster(1, 4); // only one fits at a time
        let ctx = SchedContext {
            cluster: &state,
            jobs: &jobs,
            profiles: &profiles,
            interference: &interference,
            clock: 2.0,
        };
        let actions = schedule_pass(&PolicyKind::Sjf, &ctx).unwrap();
        assert_eq!(starts(&actions), vec![1], "{actions:?}");
        // sjf keeps trying later pending jobs after a miss
        let jobs2 = vec![
            mk_job(0, "cifar10", 0.0, 8, 128, 1000),
            mk_job(1, "cifar10", 1.0, 4, 128, 3000),
        ];
        let ctx2 = SchedContext {
            jobs: &jobs2,
            ..ctx
        };
        let actions = schedule_pass(&PolicyKind::Sjf, &ctx2).unwrap();
        assert_eq!(starts(&actions), vec![1], "no HOL blocking under sjf");
    }

    #[test]
    fn bsbf_shares_under_mild_interference_and_defers_under_heavy() {
        let profiles = default_profiles();
        // running job twice the arriving job's length: the canonical regime
        // where xi=1.2 favors sharing and xi=2.5 favors waiting
        let mut jobs = vec![
            mk_job(0, "cifar10", 0.0, 2, 128, 1000),
            mk_job(1, "cifar10", 10.0, 2, 128, 500),
        ];
        let mut state = cluster(1, 2);
        let gpus: Vec<GpuId> = state.free_gpus()[..2].to_vec();
        start_running(&mut state, &mut jobs[0], &gpus, &profiles);

        for (xi, expect_share) in [(1.2, true), (2.5, false)] {
            let interference = InterferenceTable::new(xi).unwrap();
            let ctx = SchedContext {
                cluster: &state,
                jobs: &jobs,
                profiles: &profiles,
                interference: &interference,
                clock: 10.0,
            };
            let actions = schedule_pass(&PolicyKind::SjfBsbf, &ctx).unwrap();
            if expect_share {
                match &actions[0] {
                    Action::Start {
                        job: 1,
                        gpus,
                        config,
                    } => {
                        assert_eq!(gpus.len(), 2);
                        assert!(config.shared);
                    }
                    other => panic!("expected shared start, got {other:?}"),
                }
            } else {
                assert_eq!(actions, vec![Action::Defer { job: 1 }], "xi={xi}");
            }
        }
    }

    #[test]
    fn ffs_shares_even_when_harmful() {
        let profiles = default_profiles();
        let mut jobs = vec![
            mk_job(0, "cifar10", 0.0, 2, 128, 5000),
            mk_job(1, "cifar10", 10.0, 2, 128, 500),
        ];
        let mut state = cluster(1, 2);
        let gpus: Vec<GpuId> = state.free_gpus()[..2].to_vec();
        start_running(&mut state, &mut jobs[0], &gpus, &profiles);
        let interference = InterferenceTable::new(2.5).unwrap();
        let ctx = SchedContext {
            cluster: &state,
            jobs: &jobs,
            profiles: &profiles,
            interference: &interference,
            clock: 10.0,
        };
        let actions = schedule_pass(&PolicyKind::SjfFfs, &ctx).unwrap();
        match &actions[0] {
            Action::Start { job: 1, config, .. } => assert!(config.shared),
            other => panic!("expected shared start, got {other:?}"),
        }
    }

    #[test]
    fn ffs_tops_up_with_free_gpus() {
        let profiles = default_profiles();
        let mut jobs = vec![
            mk_job(0, "cifar10", 0.0, 2, 128, 5000),
            mk_job(1, "ncf", 10.0, 4, 256, 500),
        ];
        let mut state = cluster(1, 4);
        let gpus = vec![GpuId { server: 0, gpu: 0 }, GpuId { server: 0, gpu: 1 }];
        start_running(&mut state, &mut jobs[0], &gpus, &profiles);
        let interference = InterferenceTable::new(1.2).unwrap();
        let ctx = SchedContext {
            cluster: &state,
            jobs: &jobs,
            profiles: &profiles,
            interference: &interference,
            clock: 10.0,
        };
        let actions = schedule_pass(&PolicyKind::SjfFfs, &ctx).unwrap();
        match &actions[0] {
            Action::Start { job: 1, gpus, .. } => {
                assert_eq!(gpus.len(), 4, "2 shared + 2 free");
            }
            other => panic!("expected start, got {other:?}"),
        }
    }

    #[test]
    fn sharing_start_can_span_two_residents() {
        // two residents with 2 one-job GPUs each; the arriving 4-GPU job
        // must take whole candidate sets from both, keep the smaller
        // sub-batch of the two pair evaluations, and prefer the candidate
        // with the smaller pair JCT first
        let profiles = default_profiles();
        let mut jobs = vec![
            mk_job(0, "cifar10", 0.0, 2, 128, 4000), // long resident
            mk_job(1, "ncf", 0.0, 2, 256, 800),      // short resident
            mk_job(2, "cifar10", 5.0, 4, 128, 300),
        ];
        let mut state = cluster(1, 4);
        let left = vec![GpuId { server: 0, gpu: 0 }, GpuId { server: 0, gpu: 1 }];
        let right = vec![GpuId { server: 0, gpu: 2 }, GpuId { server: 0, gpu: 3 }];
        start_running(&mut state, &mut jobs[0], &left, &profiles);
        start_running(&mut state, &mut jobs[1], &right, &profiles);
        let interference = InterferenceTable::new(1.1).unwrap();
        let ctx = SchedContext {
            cluster: &state,
            jobs: &jobs,
            profiles: &profiles,
            interference: &interference,
            clock: 5.0,
        };
        let actions = schedule_pass(&PolicyKind::SjfBsbf, &ctx).unwrap();
        match &actions[0] {
            Action::Start {
                job: 2,
                gpus,
                config,
            } => {
                assert_eq!(gpus.len(), 4);
                // the shorter resident's pair has the smaller average JCT,
                // so its GPUs come first
                assert_eq!(gpus[..2], right[..]);
                assert_eq!(gpus[2..], left[..]);
                assert!(config.shared);
                // memory: two cifar10 jobs at b=128 fit one GPU, so the
                // pairing imposes no sub-batch cut
                assert_eq!(config.sub_batch, 128);
            }
            other => panic!("expected spanning start, got {other:?}"),
        }
    }

    #[test]
    fn first_fit_share_selects_one_job_then_free() {
        let profiles = default_profiles();
        let mut jobs = vec![mk_job(0, "cifar10", 0.0, 2, 128, 5000)];
        let mut state = cluster(1, 4);
        let gpus = vec![GpuId { server: 0, gpu: 0 }, GpuId { server: 0, gpu: 1 }];
        start_running(&mut state, &mut jobs[0], &gpus, &profiles);

        let picked = first_fit_share(4, &state).unwrap();
        assert_eq!(picked[..2], gpus[..], "one-job slots come first");
        assert_eq!(picked.len(), 4);
        assert!(first_fit_share(5, &state).is_none());
    }

    #[test]
    fn tiresias_prefers_low_attained_service() {
        let knobs = TiresiasKnobs::default();
        assert_eq!(tiresias_priority(0.0, &knobs), 0);
        assert_eq!(
            tiresias_priority(
                10.0,
                &TiresiasKnobs {
                    queue_thresholds: vec![100.0],
                    ..knobs.clone()
                }
            ),
            0
        );
        assert_eq!(
            tiresias_priority(
                1000.0,
                &TiresiasKnobs {
                    queue_thresholds: vec![100.0],
                    ..knobs
                }
            ),
            1
        );
    }

    #[test]
    fn tiresias_preempts_low_queue_job_for_fresh_arrival() {
        let profiles = default_profiles();
        let interference = InterferenceTable::new(1.3).unwrap();
        let mut jobs = vec![
            mk_job(0, "cifar10", 0.0, 4, 128, 5000),
            mk_job(1, "ncf", 100.0, 4, 256, 500),
        ];
        let mut state = cluster(1, 4);
        let gpus: Vec<GpuId> = state.free_gpus();
        start_running(&mut state, &mut jobs[0], &gpus, &profiles);
        jobs[0].attained_service = 5000.0; // beyond the 1000 GPU-second threshold
        let knobs = TiresiasKnobs {
            queue_thresholds: vec![1000.0],
            preemption_penalty: 30.0,
        };
        let ctx = SchedContext {
            cluster: &state,
            jobs: &jobs,
            profiles: &profiles,
            interference: &interference,
            clock: 100.0,
        };
        let actions = schedule_pass(&PolicyKind::Tiresias(knobs), &ctx).unwrap();
        assert_eq!(actions.len(), 2, "{actions:?}");
        assert_eq!(actions[0], Action::Preempt { job: 0 });
        assert!(
            matches!(&actions[1], Action::Start { job: 1, .. }),
            "{actions:?}"
        );
    }

    #[test]
    fn non_preemptive_policies_never_preempt() {
        let profiles = default_profiles();
        let interference = InterferenceTable::new(1.2).unwrap();
        let mut jobs = vec![
            mk_job(0, "cifar10", 0.0, 2, 128, 5000),
            mk_job(1, "ncf", 5.0, 2, 256, 100),
            mk_job(2, "bert", 6.0, 1, 32, 200),
        ];
        let mut state = cluster(1, 2);
        let gpus: Vec<GpuId> = state.free_gpus();
        start_running(&mut state, &mut jobs[0], &gpus, &profiles);
        for policy in [
            PolicyKind::Fifo,
            PolicyKind::Sjf,
            PolicyKind::SjfFfs,
            PolicyKind::SjfBsbf,
        ] {
            let ctx = SchedContext {
                cluster: &state,
                jobs: &jobs,
                profiles: &profiles,
                interference: &interference,
                clock: 6.0,
            };
            let actions = schedule_pass(&policy, &ctx).unwrap();
            assert!(
                actions.iter().all(|a| !matches!(a, Action::Preempt { .. })),
                "{policy:?} emitted a preempt"
            );
        }
    }

    #[test]
    fn ffs_and_bsbf_act_identically_without_interference() {
        // xi = 1 everywhere and ample memory: every sharing is beneficial,
        // so the benefit filter never bites and the two policies coincide
        let profiles = default_profiles();
        let interference = InterferenceTable::new(1.0).unwrap();
        let mut jobs = vec![
            mk_job(0, "cifar10", 0.0, 2, 16, 4000),
            mk_job(1, "ncf", 0.0, 2, 16, 2500),
            mk_job(2, "bert", 3.0, 2, 4, 700),
            mk_job(3, "imagenet", 4.0, 4, 8, 900),
            mk_job(4, "yolov3", 5.0, 1, 4, 50),
        ];
        let mut state = cluster(1, 4);
        let gpus = vec![GpuId { server: 0, gpu: 0 }, GpuId { server: 0, gpu: 1 }];
        start_running(&mut state, &mut jobs[0], &gpus, &profiles);
        let gpus = vec![GpuId { server: 0, gpu: 2 }, GpuId { server: 0, gpu: 3 }];
        start_running(&mut state, &mut jobs[1], &gpus, &profiles);
        let ctx = SchedContext {
            cluster: &state,
            jobs: &jobs,
            profiles: &profiles,
            interference: &interference,
            clock: 6.0,
        };
        let ffs = schedule_pass(&PolicyKind::SjfFfs, &ctx).unwrap();
        let bsbf = schedule_pass(&PolicyKind::SjfBsbf, &ctx).unwrap();
        assert_eq!(ffs, bsbf);
        assert!(!starts(&ffs).is_empty(), "scenario should place something");
    }

    #[test]
    fn schedule_pass_is_deterministic() {
        let profiles = default_profiles();
        let interference = crate::defaults::default_interference();
        let mut jobs = vec![
            mk_job(0, "cifar10", 0.0, 2, 128, 4000),
            mk_job(1, "ncf", 1.0, 2, 256, 2500),
            mk_job(2, "bert", 3.0, 2, 32, 700),
            mk_job(3, "imagenet", 4.0, 4, 32, 900),
        ];
        let mut state = cluster(1, 4);
        let gpus = vec![GpuId { server: 0, gpu: 0 }, GpuId { server: 0, gpu: 1 }];
        start_running(&mut state, &mut jobs[0], &gpus, &profiles);
        for policy in [
            PolicyKind::Fifo,
            PolicyKind::Sjf,
            PolicyKind::Tiresias(TiresiasKnobs::default()),
            PolicyKind::SjfFfs,
            PolicyKind::SjfBsbf,
        ] {
            let ctx = SchedContext {
                cluster: &state,
                jobs: &jobs,
                profiles: &profiles,
                interference: &interference,
                clock: 5.0,
            };
            let first = schedule_pass(&policy, &ctx).unwrap();
            let second = schedule_pass(&policy, &ctx).unwrap();
            assert_eq!(first, second, "{policy:?}");
        }
    }

    #[test]
    fn after_sharing_pass_no_pending_job_fits_free_gpus() {
        let profiles = default_profiles();
        let interference = InterferenceTable::new(1.2).unwrap();
        let jobs = vec![
            mk_job(0, "cifar10", 0.0, 4, 128, 1000),
            mk_job(1, "ncf", 0.5, 2, 256, 100),
            mk_job(2, "bert", 0.6, 1, 32, 50),
        ];
        let state = cluster(1, 4);
        let ctx = SchedContext {
            cluster: &state,
            jobs: &jobs,
            profiles: &profiles,
            interference: &interference,
            clock: 1.0,
        };
        for policy in [PolicyKind::Sjf, PolicyKind::SjfFfs, PolicyKind::SjfBsbf] {
            let actions = schedule_pass(&policy, &ctx).unwrap();
            // replay starts onto a scratch and check the invariant
            let mut scratch = state.clone();
            let mut started = Vec::new();
            for a in &actions {
                if let Action::Start { job, gpus, .. } = a {
                    scratch
                        .allocate(*job, jobs[*job as usize].spec.gpus, gpus, 1.0)
                        .unwrap();
                    started.push(*job);
                }
            }
            let free = scratch.free_gpus().len();
            for job in &jobs {
                if !started.contains(&job.seq) {
                    assert!(
                        (job.spec.gpus as usize) > free,
                        "{policy:?}: deferred job {} fits {free} free GPUs",
                        job.seq
                    );
                }
            }
        }
    }
}
