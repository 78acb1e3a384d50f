//! Closed-form iteration-time, throughput and interference models for DL
//! jobs, plus least-squares parameter fitting from throughput measurements.
//!
//! A job's iteration is modeled as `s` gradient-accumulation sub-batches of
//! GPU compute followed by one all-reduce, where the last sub-batch overlaps
//! with communication under a p-norm of exponent `delta`:
//!
//! ```text
//! t_iter = (s - 1) * t_comp(B/s) + (t_comp(B/s)^delta + t_comm^delta)^(1/delta)
//! ```
//!
//! Compute scales linearly with per-GPU batch size, communication with the
//! gradient message size. Sharing a GPU with another job multiplies the whole
//! iteration by an interference ratio `xi >= 1`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod fit;

pub use fit::{fit_profile, FitError, FitOptions, FitOutcome, ThroughputSample};

#[derive(Debug, Error)]
pub enum PerfError {
    #[error("profile `{task}` has no entry for gpu_count={gpu_count}")]
    MissingGpuCount { task: String, gpu_count: u32 },
    #[error("iteration time must be positive, got {0}")]
    NonPositiveIterTime(f64),
    #[error("interference ratio must be >= 1, got {0}")]
    XiBelowOne(f64),
    #[error("solo iteration time must be positive, got {0}")]
    NonPositiveSoloIter(f64),
    #[error("accumulation steps must satisfy 1 <= s <= batch, got s={steps}, batch={batch}")]
    BadAccumSteps { steps: u32, batch: u32 },
    #[error("invalid profile `{task}`: {reason}")]
    InvalidProfile { task: String, reason: String },
}

/// GPU compute time parameters: `t_comp(B) = alpha + beta * B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompParams {
    /// Fixed per-iteration overhead in seconds.
    pub alpha: f64,
    /// Seconds per sample of the per-GPU batch.
    pub beta: f64,
}

/// All-reduce communication parameters: `t_comm = alpha + beta * message_size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommParams {
    /// Latency term in seconds.
    pub alpha: f64,
    /// Seconds per byte.
    pub beta: f64,
    /// Gradient message size in bytes.
    pub message_size: f64,
}

/// Fitted cost parameters for one GPU count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfEntry {
    pub comp: CompParams,
    pub comm: CommParams,
    /// Compute/communication overlap exponent, >= 1. Higher values hide more
    /// of the all-reduce under the last sub-batch's compute.
    pub delta: f64,
}

/// Per-task cost model: one [`PerfEntry`] per GPU count the task was profiled
/// at, plus memory coefficients used for sub-batch feasibility checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub task_name: String,
    /// Keyed by GPU count.
    pub entries: BTreeMap<u32, PerfEntry>,
    /// Resident bytes independent of batch size (weights, optimizer state).
    pub mem_base: f64,
    /// Additional bytes per sample of the per-GPU batch (activations).
    pub mem_per_sample: f64,
    /// Memory-feasible per-GPU batch ceiling when running alone.
    pub max_batch: u32,
}

impl ModelProfile {
    pub fn entry(&self, gpu_count: u32) -> Result<&PerfEntry, PerfError> {
        self.entries
            .get(&gpu_count)
            .ok_or(PerfError::MissingGpuCount {
                task: self.task_name.clone(),
                gpu_count,
            })
    }

    /// Per-GPU memory footprint at a given sub-batch size.
    pub fn mem_footprint(&self, sub_batch: u32) -> f64 {
        self.mem_base + self.mem_per_sample * sub_batch as f64
    }

    pub fn validate(&self) -> Result<(), PerfError> {
        let fail = |reason: String| {
            Err(PerfError::InvalidProfile {
                task: self.task_name.clone(),
                reason,
            })
        };
        if self.entries.is_empty() {
            return fail("no per-GPU-count entries".into());
        }
        for (n, e) in &self.entries {
            if e.comp.alpha < 0.0 || e.comp.beta <= 0.0 {
                return fail(format!("gpu_count={n}: comp requires alpha >= 0, beta > 0"));
            }
            if e.comm.alpha < 0.0 || e.comm.beta < 0.0 {
                return fail(format!("gpu_count={n}: comm params must be non-negative"));
            }
            if e.comm.message_size <= 0.0 {
                return fail(format!("gpu_count={n}: message_size must be positive"));
            }
            if e.delta < 1.0 || !e.delta.is_finite() {
                return fail(format!("gpu_count={n}: delta must be >= 1"));
            }
        }
        if self.mem_base < 0.0 || self.mem_per_sample < 0.0 {
            return fail("memory coefficients must be non-negative".into());
        }
        if self.max_batch == 0 {
            return fail("max_batch must be >= 1".into());
        }
        Ok(())
    }
}

/// GPU compute time for one sub-batch: `alpha + beta * B`.
pub fn comp_time(batch: u32, params: &CompParams) -> f64 {
    params.alpha + params.beta * batch as f64
}

/// All-reduce time for the job's gradient message.
pub fn comm_time(params: &CommParams) -> f64 {
    params.alpha + params.beta * params.message_size
}

/// p-norm combination of compute and communication for the overlapped final
/// sub-batch. Scaled to avoid overflow at large exponents; exact when either
/// side is zero or `delta == 1`.
fn overlap(comp: f64, comm: f64, delta: f64) -> f64 {
    if comp == 0.0 {
        return comm;
    }
    if comm == 0.0 {
        return comp;
    }
    if delta == 1.0 {
        return comp + comm;
    }
    let m = comp.max(comm);
    m * ((comp / m).powf(delta) + (comm / m).powf(delta)).powf(1.0 / delta)
}

/// Iteration time of a job running alone, with gradient accumulation.
///
/// The requested per-GPU batch is split into `accum_steps` sub-batches of
/// `ceil(batch / accum_steps)` samples (the model conservatively charges the
/// ceiling for every step). Communication happens once per iteration and
/// overlaps only with the final sub-batch.
pub fn iter_time(
    requested_batch: u32,
    accum_steps: u32,
    profile: &ModelProfile,
    gpu_count: u32,
) -> Result<f64, PerfError> {
    if accum_steps == 0 || accum_steps > requested_batch {
        return Err(PerfError::BadAccumSteps {
            steps: accum_steps,
            batch: requested_batch,
        });
    }
    let entry = profile.entry(gpu_count)?;
    let sub = requested_batch.div_ceil(accum_steps);
    let t_comp = comp_time(sub, &entry.comp);
    let t_comm = comm_time(&entry.comm);
    Ok((accum_steps - 1) as f64 * t_comp + overlap(t_comp, t_comm, entry.delta))
}

/// Samples per second given a batch and its iteration time.
pub fn throughput(batch: u32, iter_time: f64) -> Result<f64, PerfError> {
    if iter_time <= 0.0 {
        return Err(PerfError::NonPositiveIterTime(iter_time));
    }
    Ok(batch as f64 / iter_time)
}

/// Iteration time under GPU sharing: the whole iteration slows by `xi`.
pub fn shared_iter_time(solo_iter: f64, xi: f64) -> Result<f64, PerfError> {
    if xi < 1.0 {
        return Err(PerfError::XiBelowOne(xi));
    }
    if solo_iter <= 0.0 {
        return Err(PerfError::NonPositiveSoloIter(solo_iter));
    }
    Ok(solo_iter * xi)
}

/// The profile document: task name to cost model, JSON on disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProfileSet(pub BTreeMap<String, ModelProfile>);

impl ProfileSet {
    pub fn get(&self, task: &str) -> Result<&ModelProfile, PerfError> {
        self.0.get(task).ok_or_else(|| PerfError::InvalidProfile {
            task: task.to_string(),
            reason: "no profile for this task".into(),
        })
    }

    pub fn insert(&mut self, profile: ModelProfile) {
        self.0.insert(profile.task_name.clone(), profile);
    }

    pub fn validate(&self) -> Result<(), PerfError> {
        for (name, p) in &self.0 {
            if name != &p.task_name {
                return Err(PerfError::InvalidProfile {
                    task: name.clone(),
                    reason: format!("keyed as `{name}` but profile says `{}`", p.task_name),
                });
            }
            p.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, PerfError> {
        let set: ProfileSet =
            serde_json::from_str(text).map_err(|e| PerfError::InvalidProfile {
                task: "<document>".into(),
                reason: e.to_string(),
            })?;
        set.validate()?;
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile set serializes")
    }
}

/// Pairwise interference ratios. Lookups are order-sensitive: when jobs A and
/// B share GPUs, A slows by `xi_first` of the `(A, B)` entry and B by
/// `xi_second`. Missing pairs fall back to `default_xi` for both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InterferenceDoc", into = "InterferenceDoc")]
pub struct InterferenceTable {
    default_xi: f64,
    pairwise: BTreeMap<(String, String), (f64, f64)>,
}

/// On-disk shape: pair entries as a flat list so the document stays plain JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct InterferenceDoc {
    default_xi: f64,
    #[serde(default)]
    pairwise: Vec<PairwiseXi>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairwiseXi {
    first: String,
    second: String,
    xi_first: f64,
    xi_second: f64,
}

impl TryFrom<InterferenceDoc> for InterferenceTable {
    type Error = PerfError;

    fn try_from(doc: InterferenceDoc) -> Result<Self, PerfError> {
        let mut table = InterferenceTable::new(doc.default_xi)?;
        for p in doc.pairwise {
            table.insert(&p.first, &p.second, p.xi_first, p.xi_second)?;
        }
        Ok(table)
    }
}

impl From<InterferenceTable> for InterferenceDoc {
    fn from(t: InterferenceTable) -> Self {
        InterferenceDoc {
            default_xi: t.default_xi,
            pairwise: t
                .pairwise
                .into_iter()
                .map(|((first, second), (xi_first, xi_second))| PairwiseXi {
                    first,
                    second,
                    xi_first,
                    xi_second,
                })
                .collect(),
        }
    }
}

impl InterferenceTable {
    pub fn new(default_xi: f64) -> Result<Self, PerfError> {
        if default_xi < 1.0 {
            return Err(PerfError::XiBelowOne(default_xi));
        }
        Ok(InterferenceTable {
            default_xi,
            pairwise: BTreeMap::new(),
        })
    }

    /// A table with every lookup equal to `xi`, as used by interference sweeps.
    pub fn constant(xi: f64) -> Result<Self, PerfError> {
        Self::new(xi)
    }

    pub fn default_xi(&self) -> f64 {
        self.default_xi
    }

    pub fn insert(
        &mut self,
        first: &str,
        second: &str,
        xi_first: f64,
        xi_second: f64,
    ) -> Result<(), PerfError> {
        if xi_first < 1.0 {
            return Err(PerfError::XiBelowOne(xi_first));
        }
        if xi_second < 1.0 {
            return Err(PerfError::XiBelowOne(xi_second));
        }
        self.pairwise.insert(
            (first.to_string(), second.to_string()),
            (xi_first, xi_second),
        );
        Ok(())
    }

    /// Interference ratios `(xi_a, xi_b)` when task `a` shares GPUs with task
    /// `b`. A stored `(b, a)` entry answers the swapped query.
    pub fn lookup(&self, a: &str, b: &str) -> (f64, f64) {
        if let Some(&(xa, xb)) = self.pairwise.get(&(a.to_string(), b.to_string())) {
            return (xa, xb);
        }
        if let Some(&(xb, xa)) = self.pairwise.get(&(b.to_string(), a.to_string())) {
            return (xa, xb);
        }
        (self.default_xi, self.default_xi)
    }

    /// `xi` suffered by task `a` when co-located with task `b`.
    pub fn xi_of(&self, a: &str, b: &str) -> f64 {
        self.lookup(a, b).0
    }
}
