//! Workload generation and trace file ingestion.
//!
//! Traces are JSON-lines documents, one job per line. Generation follows the
//! published summary shape of the Microsoft cluster trace at two scales: a
//! 30-job testbed-sized preset and a 240-job simulation preset, both with GPU
//! demands drawn from a histogram, iteration counts uniform over a range and
//! Poisson arrivals over a configurable horizon.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("record {index}: {source}")]
    Parse {
        index: usize,
        source: serde_json::Error,
    },
    #[error("record {index}: {reason}")]
    Invalid { index: usize, reason: String },
    #[error("duplicate job_id `{0}`")]
    DuplicateJobId(String),
    #[error("workload spec invalid: {0}")]
    BadSpec(String),
}

/// One job request as it appears in a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job_id: String,
    pub task_name: String,
    /// Arrival time in seconds from the start of the trace.
    pub arrival: f64,
    /// Requested GPU count (gang size).
    pub gpus: u32,
    /// Requested per-GPU mini-batch size.
    pub batch_per_gpu: u32,
    /// Total training iterations.
    pub iterations: u64,
}

impl JobSpec {
    // negated comparisons so NaN inputs fail validation too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self, index: usize) -> Result<(), TraceError> {
        let fail = |reason: String| Err(TraceError::Invalid { index, reason });
        if self.job_id.is_empty() {
            return fail("empty job_id".into());
        }
        if self.gpus < 1 {
            return fail("gpus must be >= 1".into());
        }
        if self.batch_per_gpu < 1 {
            return fail("batch_per_gpu must be >= 1".into());
        }
        if self.iterations < 1 {
            return fail("iterations must be >= 1".into());
        }
        if !(self.arrival >= 0.0) {
            return fail(format!("arrival {} must be >= 0", self.arrival));
        }
        Ok(())
    }

    /// Jobs requesting more than 4 GPUs count as large in breakdowns.
    pub fn is_large(&self) -> bool {
        self.gpus > 4
    }
}

/// The six annotated DL tasks and their customary per-GPU batch sizes.
pub const TASKS: [(&str, u32); 6] = [
    ("bert", 32),
    ("cifar10", 128),
    ("deepspeech2", 32),
    ("imagenet", 32),
    ("ncf", 256),
    ("yolov3", 16),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ArrivalProcess {
    /// Poisson arrivals with rate `jobs / horizon_secs`.
    Poisson { horizon_secs: f64 },
    /// Explicit arrival timestamps, consumed in order.
    Explicit(Vec<f64>),
}

/// Parameters for synthetic workload generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub total_jobs: u32,
    /// GPU-demand histogram as (gpus, weight) bins; weights must be positive.
    pub gpu_demand: Vec<(u32, f64)>,
    /// Inclusive iteration bounds.
    pub iteration_range: (u64, u64),
    pub arrivals: ArrivalProcess,
    /// Scales the job count: the load sweep runs 0.5x to 2x of the base.
    pub load_scale: f64,
    pub seed: u64,
}

impl WorkloadSpec {
    /// The 30-job testbed-scale preset: 20 jobs of at most 8 GPUs and 10 jobs
    /// of 12 or 16, iterations 100 to 5000, arriving over 65 minutes.
    pub fn physical(seed: u64) -> Self {
        WorkloadSpec {
            total_jobs: 30,
            gpu_demand: vec![
                (1, 1.0 / 6.0),
                (2, 1.0 / 6.0),
                (4, 1.0 / 6.0),
                (8, 1.0 / 6.0),
                (12, 1.0 / 6.0),
                (16, 1.0 / 6.0),
            ],
            iteration_range: (100, 5000),
            arrivals: ArrivalProcess::Poisson {
                horizon_secs: 3900.0,
            },
            load_scale: 1.0,
            seed,
        }
    }

    /// The 240-job simulation preset resembling the busiest trace window,
    /// arriving over an 8-hour horizon.
    pub fn simulation(seed: u64) -> Self {
        WorkloadSpec {
            total_jobs: 240,
            gpu_demand: vec![
                (1, 0.30),
                (2, 0.20),
                (4, 0.20),
                (8, 0.15),
                (12, 0.075),
                (16, 0.075),
            ],
            iteration_range: (100, 5000),
            arrivals: ArrivalProcess::Poisson {
                horizon_secs: 8.0 * 3600.0,
            },
            load_scale: 1.0,
            seed,
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self) -> Result<(), TraceError> {
        if self.gpu_demand.is_empty() {
            return Err(TraceError::BadSpec("empty gpu demand histogram".into()));
        }
        if self.gpu_demand.iter().any(|&(g, w)| g == 0 || w <= 0.0) {
            return Err(TraceError::BadSpec(
                "histogram bins need gpus >= 1 and positive weight".into(),
            ));
        }
        if self.iteration_range.0 < 1 || self.iteration_range.0 > self.iteration_range.1 {
            return Err(TraceError::BadSpec(format!(
                "bad iteration range {:?}",
                self.iteration_range
            )));
        }
        if !(self.load_scale > 0.0) {
            return Err(TraceError::BadSpec("load_scale must be positive".into()));
        }
        if let ArrivalProcess::Poisson { horizon_secs } = self.arrivals {
            if !(horizon_secs > 0.0) {
                return Err(TraceError::BadSpec("horizon must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` slots over histogram weights, so
/// generated traces hit the requested proportions exactly.
fn quotas(bins: &[(u32, f64)], n: u32) -> Vec<(u32, u32)> {
    let total: f64 = bins.iter().map(|b| b.1).sum();
    let mut alloc: Vec<(usize, u32, f64)> = bins
        .iter()
        .enumerate()
        .map(|(i, &(_, w))| {
            let exact = n as f64 * w / total;
            (i, exact.floor() as u32, exact - exact.floor())
        })
        .collect();
    let mut assigned: u32 = alloc.iter().map(|a| a.1).sum();
    // hand out the remainder by largest fractional part, ties by bin order
    let mut by_frac: Vec<usize> = (0..alloc.len()).collect();
    by_frac.sort_by(|&a, &b| alloc[b].2.total_cmp(&alloc[a].2).then(a.cmp(&b)));
    let mut k = 0;
    while assigned < n {
        alloc[by_frac[k % by_frac.len()]].1 += 1;
        assigned += 1;
        k += 1;
    }
    alloc
        .into_iter()
        .map(|(i, count, _)| (bins[i].0, count))
        .collect()
}

/// Generate a deterministic workload from a [`WorkloadSpec`]. Jobs come back sorted by
/// arrival and numbered in that order.
pub fn generate_workload(spec: &WorkloadSpec) -> Result<Vec<JobSpec>, TraceError> {
    spec.validate()?;
    let n = ((spec.total_jobs as f64 * spec.load_scale).round() as u32).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut demands: Vec<u32> = quotas(&spec.gpu_demand, n)
        .into_iter()
        .flat_map(|(gpus, count)| std::iter::repeat_n(gpus, count as usize))
        .collect();
    demands.shuffle(&mut rng);

    let mut tasks: Vec<usize> = quotas(&TASKS.iter().map(|_| (1u32, 1.0)).collect::<Vec<_>>(), n)
        .into_iter()
        .enumerate()
        .flat_map(|(i, (_, count))| std::iter::repeat_n(i, count as usize))
        .collect();
    tasks.shuffle(&mut rng);

    let arrivals: Vec<f64> = match &spec.arrivals {
        ArrivalProcess::Poisson { horizon_secs } => {
            let rate = n as f64 / horizon_secs;
            let mut t = 0.0;
            (0..n)
                .map(|_| {
                    let u: f64 = rng.gen::<f64>();
                    t += -(1.0 - u).ln() / rate;
                    t
                })
                .collect()
        }
        ArrivalProcess::Explicit(ts) => {
            if ts.len() < n as usize {
                return Err(TraceError::BadSpec(format!(
                    "explicit arrivals supply {} timestamps for {} jobs",
                    ts.len(),
                    n
                )));
            }
            let mut ts = ts[..n as usize].to_vec();
            ts.sort_by(f64::total_cmp);
            ts
        }
    };

    let (lo, hi) = spec.iteration_range;
    let mut jobs: Vec<JobSpec> = (0..n as usize)
        .map(|i| {
            let (task_name, batch) = TASKS[tasks[i]];
            JobSpec {
                job_id: String::new(),
                task_name: task_name.to_string(),
                arrival: arrivals[i],
                gpus: demands[i],
                batch_per_gpu: batch,
                iterations: rng.gen_range(lo..=hi),
            }
        })
        .collect();
    jobs.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
    let width = (n as f64).log10().ceil().max(4.0) as usize;
    for (i, job) in jobs.iter_mut().enumerate() {
        job.job_id = format!("job-{i:0width$}");
    }
    Ok(jobs)
}

/// Serialize a trace as JSON lines.
pub fn save_trace(jobs: &[JobSpec]) -> String {
    let mut out = String::new();
    for job in jobs {
        out.push_str(&serde_json::to_string(job).expect("job serializes"));
        out.push('\n');
    }
    out
}

/// Parse a JSON-lines trace, validating each record and rejecting duplicate
/// job ids. Blank lines and `#` comments are skipped.
pub fn load_trace(text: &str) -> Result<Vec<JobSpec>, TraceError> {
    let mut jobs = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (index, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let job: JobSpec =
            serde_json::from_str(line).map_err(|source| TraceError::Parse { index, source })?;
        job.validate(index)?;
        if !seen.insert(job.job_id.clone()) {
            return Err(TraceError::DuplicateJobId(job.job_id));
        }
        jobs.push(job);
    }
    Ok(jobs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn physical_preset_matches_published_counts() {
        let jobs = generate_workload(&WorkloadSpec::physical(3)).unwrap();
        assert_eq!(jobs.len(), 30);
        let small = jobs.iter().filter(|j| j.gpus <= 8).count();
        let large = jobs.iter().filter(|j| j.gpus == 12 || j.gpus == 16).count();
        assert_eq!(small, 20);
        assert_eq!(large, 10);
        assert!(jobs.iter().all(|j| (100..=5000).contains(&j.iterations)));
    }

    #[test]
    fn simulation_preset_has_240_jobs() {
        let jobs = generate_workload(&WorkloadSpec::simulation(3)).unwrap();
        assert_eq!(jobs.len(), 240);
        assert!(jobs.windows(2).all(|w| w[0].arrival <= w[1].arrival));
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate_workload(&WorkloadSpec::simulation(9)).unwrap();
        let b = generate_workload(&WorkloadSpec::simulation(9)).unwrap();
        let c = generate_workload(&WorkloadSpec::simulation(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn load_scale_changes_job_count() {
        let mut spec = WorkloadSpec::simulation(1);
        spec.load_scale = 0.5;
        assert_eq!(generate_workload(&spec).unwrap().len(), 120);
        spec.load_scale = 2.0;
        assert_eq!(generate_workload(&spec).unwrap().len(), 480);
    }

    #[test]
    fn histogram_proportions_hold_at_scale() {
        let mut spec = WorkloadSpec::simulation(5);
        spec.total_jobs = 10_000;
        spec.arrivals = ArrivalProcess::Poisson { horizon_secs: 1e6 };
        let jobs = generate_workload(&spec).unwrap();
        let ones = jobs.iter().filter(|j| j.gpus == 1).count() as f64;
        // quota apportionment is exact, so this is well inside any
        // binomial confidence bound
        assert!((ones / 10_000.0 - 0.30).abs() < 1e-3);
    }

    #[test]
    fn empty_histogram_is_rejected() {
        let mut spec = WorkloadSpec::physical(1);
        spec.gpu_demand.clear();
        assert!(generate_workload(&spec).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let jobs = generate_workload(&WorkloadSpec::physical(11)).unwrap();
        let text = save_trace(&jobs);
        let back = load_trace(&text).unwrap();
        assert_eq!(jobs, back);
    }

    #[test]
    fn missing_field_names_the_problem() {
        let err = load_trace(r#"{"job_id":"a","arrival":0.0}"#).unwrap_err();
        match err {
            TraceError::Parse { index: 0, source } => {
                assert!(source.to_string().contains("task_name"), "{source}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_job_id_is_rejected() {
        let jobs = vec![
            JobSpec {
                job_id: "dup".into(),
                task_name: "bert".into(),
                arrival: 0.0,
                gpus: 1,
                batch_per_gpu: 32,
                iterations: 100,
            };
            2
        ];
        let err = load_trace(&save_trace(&jobs)).unwrap_err();
        assert!(matches!(err, TraceError::DuplicateJobId(id) if id == "dup"));
    }

    #[test]
    fn explicit_arrivals_are_used_in_order() {
        let mut spec = WorkloadSpec::physical(2);
        spec.total_jobs = 3;
        spec.arrivals = ArrivalProcess::Explicit(vec![5.0, 1.0, 9.0]);
        let jobs = generate_workload(&spec).unwrap();
        let arrivals: Vec<f64> = jobs.iter().map(|j| j.arrival).collect();
        assert_eq!(arrivals, vec![1.0, 5.0, 9.0]);
    }
}
