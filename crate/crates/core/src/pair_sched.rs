//! Share-or-wait decisions for one running job and one arriving job on the
//! same GPUs.
//!
//! The timeline model: the running job progresses alone at rate `1/t` until
//! the insertion time `kappa`, both jobs then progress at their shared rates
//! `1/(t * xi)`, and when one finishes the survivor reverts to its solo rate.
//! Average completion time is piecewise linear in `kappa`, so the optimum is
//! always one of the two endpoints: share immediately (`kappa = 0`) or run
//! sequentially (`kappa` = the running job's remaining solo time). The
//! decision between them is made by evaluating both, and a brute-force grid
//! over `kappa` is provided as an independent check.
//!
//! [`batch_size_scaling`] extends the decision with the arriving job's
//! gradient-accumulation sub-batch search under GPU memory limits.

use thiserror::Error;

use crate::perf_model::{self, ModelProfile, PerfError};

#[derive(Debug, Error)]
pub enum PairError {
    #[error("kappa {kappa} outside [0, {max}]")]
    KappaOutOfRange { kappa: f64, max: f64 },
    #[error("invalid job snapshot: {0}")]
    BadSnapshot(String),
    #[error(
        "no memory-feasible sub-batch for requested batch {requested_batch} under cap {memory_cap}"
    )]
    InfeasiblePair {
        requested_batch: u32,
        memory_cap: f64,
    },
    #[error(transparent)]
    Perf(#[from] PerfError),
}

/// What the pair decision needs to know about one job: its solo iteration
/// time, how many iterations it still has, and the interference ratio it
/// would suffer in this particular pairing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobSnapshot {
    /// Solo iteration time in seconds.
    pub solo_iter: f64,
    /// Remaining iterations; fractional values arise mid-flight.
    pub remaining_iters: f64,
    /// Interference ratio this job suffers when sharing, >= 1.
    pub xi: f64,
}

impl JobSnapshot {
    // negated comparisons so NaN inputs fail validation too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(solo_iter: f64, remaining_iters: f64, xi: f64) -> Result<Self, PairError> {
        if !(solo_iter > 0.0) {
            return Err(PairError::BadSnapshot(format!(
                "solo_iter {solo_iter} must be > 0"
            )));
        }
        if !(remaining_iters >= 0.0) {
            return Err(PairError::BadSnapshot(format!(
                "remaining_iters {remaining_iters} must be >= 0"
            )));
        }
        if !(xi >= 1.0) {
            return Err(PairError::BadSnapshot(format!("xi {xi} must be >= 1")));
        }
        Ok(JobSnapshot {
            solo_iter,
            remaining_iters,
            xi,
        })
    }

    /// Remaining solo runtime, which is the sequential-endpoint insertion delay.
    pub fn solo_remaining(&self) -> f64 {
        self.solo_iter * self.remaining_iters
    }
}

/// Outcome of comparing the two endpoint schedules for a pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShareDecision {
    /// True when sharing immediately wins; ties go to sequential.
    pub share: bool,
    /// Chosen insertion time: 0 or the running job's remaining solo time.
    pub kappa: f64,
    /// Average of the two completion times at the chosen kappa.
    pub avg_jct: f64,
    /// Running job's completion, measured from the decision instant.
    pub jct_running: f64,
    /// Arriving job's completion, measured from the decision instant
    /// (queuing included).
    pub jct_arriving: f64,
}

/// Full sharing configuration for an arriving job: the endpoint decision plus
/// the gradient-accumulation setting chosen by [`batch_size_scaling`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSchedule {
    pub decision: ShareDecision,
    /// Chosen per-GPU sub-batch for the arriving job.
    pub sub_batch: u32,
    /// Accumulation steps to reach the requested batch.
    pub accum_steps: u32,
}

/// Completion times `(running, arriving)` for a given insertion time, both
/// measured from time zero (the decision instant). The arriving job's result
/// includes its `kappa` of queuing.
pub fn pair_jct(
    running: &JobSnapshot,
    arriving: &JobSnapshot,
    kappa: f64,
) -> Result<(f64, f64), PairError> {
    let max_kappa = running.solo_remaining();
    if !(0.0..=max_kappa * (1.0 + 1e-12) + 1e-12).contains(&kappa) {
        return Err(PairError::KappaOutOfRange {
            kappa,
            max: max_kappa,
        });
    }
    let kappa = kappa.min(max_kappa);

    // Phase 1: running job alone during [0, kappa).
    let rem_running = (running.remaining_iters - kappa / running.solo_iter).max(0.0);

    // Phase 2: both shared from kappa until the first completion.
    let shared_run = running.solo_iter * running.xi;
    let shared_arr = arriving.solo_iter * arriving.xi;
    let run_span = rem_running * shared_run;
    let arr_span = arriving.remaining_iters * shared_arr;

    if run_span <= arr_span {
        // Running job finishes first; arriving reverts to its solo rate.
        let t_run = kappa + run_span;
        let arr_done = run_span / shared_arr;
        let t_arr = t_run + (arriving.remaining_iters - arr_done) * arriving.solo_iter;
        Ok((t_run, t_arr))
    } else {
        let t_arr = kappa + arr_span;
        let run_done = arr_span / shared_run;
        let t_run = t_arr + (rem_running - run_done) * running.solo_iter;
        Ok((t_run, t_arr))
    }
}

/// Evaluate both endpoints and keep the one with the smaller average JCT.
/// Exact ties break toward sequential execution.
pub fn best_pair_schedule(running: &JobSnapshot, arriving: &JobSnapshot) -> ShareDecision {
    let max_kappa = running.solo_remaining();
    let (sh_run, sh_arr) = pair_jct(running, arriving, 0.0).expect("kappa=0 is always in range");
    let (sq_run, sq_arr) =
        pair_jct(running, arriving, max_kappa).expect("kappa=max is always in range");
    let sh_avg = 0.5 * (sh_run + sh_arr);
    let sq_avg = 0.5 * (sq_run + sq_arr);
    if sh_avg < sq_avg {
        ShareDecision {
            share: true,
            kappa: 0.0,
            avg_jct: sh_avg,
            jct_running: sh_run,
            jct_arriving: sh_arr,
        }
    } else {
        ShareDecision {
            share: false,
            kappa: max_kappa,
            avg_jct: sq_avg,
            jct_running: sq_run,
            jct_arriving: sq_arr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignVerdict {
    Share,
    Sequential,
}

/// Closed-form slope test for the regime where the running job would finish
/// first under sharing (its shared remaining span is the shorter one). The
/// average JCT is then a single linear function of `kappa` whose slope sign
/// is the sign of `2*xi_arriving + xi_running - 2*xi_running*xi_arriving`;
/// a positive slope means start immediately. Provided as a diagnostic
/// cross-check of [`best_pair_schedule`]; outside that regime the endpoint
/// comparison alone decides.
pub fn sign_condition(xi_running: f64, xi_arriving: f64) -> SignVerdict {
    if sign_coefficient(xi_running, xi_arriving) > 0.0 {
        SignVerdict::Share
    } else {
        SignVerdict::Sequential
    }
}

/// The slope coefficient itself, exposed for reports.
pub fn sign_coefficient(xi_running: f64, xi_arriving: f64) -> f64 {
    2.0 * xi_arriving + xi_running - 2.0 * xi_running * xi_arriving
}

/// True when the sign condition's regime applies to a pair: under sharing the
/// running job's remaining span is strictly shorter than the arriving job's.
pub fn sign_condition_applies(running: &JobSnapshot, arriving: &JobSnapshot) -> bool {
    running.solo_remaining() * running.xi < arriving.solo_remaining() * arriving.xi
}

/// Evaluate `pair_jct` on a uniform kappa grid and return the argmin of the
/// average JCT. Test oracle for the endpoint-optimality property.
pub fn brute_force_kappa(
    running: &JobSnapshot,
    arriving: &JobSnapshot,
    grid_points: usize,
) -> Result<(f64, f64), PairError> {
    if grid_points < 2 {
        return Err(PairError::BadSnapshot(format!(
            "grid_points {grid_points} must be >= 2"
        )));
    }
    let max_kappa = running.solo_remaining();
    let mut best = (0.0, f64::INFINITY);
    for i in 0..grid_points {
        let kappa = max_kappa * i as f64 / (grid_points - 1) as f64;
        let (t_run, t_arr) = pair_jct(running, arriving, kappa)?;
        let avg = 0.5 * (t_run + t_arr);
        if avg < best.1 {
            best = (kappa, avg);
        }
    }
    Ok(best)
}

/// Everything [`batch_size_scaling`] needs to evaluate one (running job,
/// arriving job) pairing: the running job's snapshot and per-GPU memory
/// footprint, the arriving job's profile and placement, and the GPU
/// memory capacity.
#[derive(Debug, Clone)]
pub struct PairContext<'a> {
    pub running: JobSnapshot,
    /// Bytes the running job occupies on each of the shared GPUs.
    pub running_mem: f64,
    pub arriving_profile: &'a ModelProfile,
    /// GPU count the arriving job will run at (profile key).
    pub arriving_gpus: u32,
    /// Arriving job's total iterations.
    pub arriving_iters: u64,
    /// Interference ratio the arriving job suffers in this pairing.
    pub arriving_xi: f64,
    /// GPU memory capacity in bytes.
    pub memory_cap: f64,
}

/// Search the arriving job's sub-batch over `{B, B/2, B/4, ...}` down to 1,
/// keeping the memory-feasible configuration whose pair schedule has the
/// smallest average JCT. `share == false` in the result means the best
/// configuration leaves the arriving job pending until the running job ends.
///
/// Errors with [`PairError::InfeasiblePair`] when no sub-batch fits in GPU
/// memory next to the running job.
pub fn batch_size_scaling(
    ctx: &PairContext<'_>,
    requested_batch: u32,
) -> Result<PairSchedule, PairError> {
    if requested_batch == 0 {
        return Err(PairError::BadSnapshot(
            "requested_batch must be >= 1".into(),
        ));
    }
    let mut best: Option<PairSchedule> = None;
    for sub in halving_candidates(requested_batch) {
        let steps = requested_batch.div_ceil(sub);
        // The model charges ceil(B/s) for every step; evaluate at that size.
        let effective_sub = requested_batch.div_ceil(steps);
        let footprint = ctx.arriving_profile.mem_footprint(effective_sub);
        if ctx.running_mem + footprint > ctx.memory_cap {
            continue;
        }
        let solo = perf_model::iter_time(
            requested_batch,
            steps,
            ctx.arriving_profile,
            ctx.arriving_gpus,
        )?;
        let arriving = JobSnapshot::new(solo, ctx.arriving_iters as f64, ctx.arriving_xi)?;
        let decision = best_pair_schedule(&ctx.running, &arriving);
        let better = match &best {
            None => true,
            Some(b) => decision.avg_jct < b.decision.avg_jct,
        };
        if better {
            best = Some(PairSchedule {
                decision,
                sub_batch: effective_sub,
                accum_steps: steps,
            });
        }
    }
    best.ok_or(PairError::InfeasiblePair {
        requested_batch,
        memory_cap: ctx.memory_cap,
    })
}

/// One sampled pair in an endpoint-optimality check.
#[derive(Debug, Clone, Copy)]
pub struct TheoremSample {
    pub running: JobSnapshot,
    pub arriving: JobSnapshot,
    /// Best endpoint average JCT from [`best_pair_schedule`].
    pub endpoint_avg: f64,
    /// Grid minimum average JCT and its kappa.
    pub grid_avg: f64,
    pub grid_kappa: f64,
    /// Relative amount by which the grid beat the endpoints (positive means
    /// the endpoint claim was violated).
    pub violation: f64,
}

/// Sample random pairs (t in [0.01, 10] s, i in [10, 10^4], xi in [1, 6])
/// and compare [`best_pair_schedule`] against [`brute_force_kappa`] on each.
/// Deterministic per seed.
pub fn endpoint_optimality_samples(
    samples: usize,
    grid_points: usize,
    seed: u64,
) -> Result<Vec<TheoremSample>, PairError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let running = JobSnapshot::new(
            rng.gen_range(0.01..=10.0),
            rng.gen_range(10..=10_000u32) as f64,
            rng.gen_range(1.0..=6.0),
        )?;
        let arriving = JobSnapshot::new(
            rng.gen_range(0.01..=10.0),
            rng.gen_range(10..=10_000u32) as f64,
            rng.gen_range(1.0..=6.0),
        )?;
        let endpoint = best_pair_schedule(&running, &arriving);
        let (grid_kappa, grid_avg) = brute_force_kappa(&running, &arriving, grid_points)?;
        let violation = (endpoint.avg_jct - grid_avg) / grid_avg;
        out.push(TheoremSample {
            running,
            arriving,
            endpoint_avg: endpoint.avg_jct,
            grid_avg,
            grid_kappa,
            violation,
        });
    }
    Ok(out)
}

/// Sub-batch candidates `ceil(B / 2^k)` down to and including 1, deduplicated.
fn halving_candidates(requested_batch: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut b = requested_batch as f64;
    loop {
        let c = b.ceil() as u32;
        if out.last() != Some(&c) {
            out.push(c);
        }
        if c == 1 {
            break;
        }
        b /= 2.0;
    }
    out
}
