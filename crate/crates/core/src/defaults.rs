//! Built-in synthetic cost profiles and interference tables for the six
//! annotated DL tasks.
//!
//! Measured parameter values are not published, so these defaults are tuned
//! to be plausible for 11 GB consumer GPUs on a 10 Gbps fabric: compute
//! scales linearly with batch size, all-reduce cost follows a ring-style
//! latency/bandwidth split that grows with worker count, and memory
//! footprints are tight enough that co-located jobs usually need gradient
//! accumulation. Use `fit_profile` to replace them with measured data.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::perf_model::{
    CommParams, CompParams, InterferenceTable, ModelProfile, PerfEntry, ProfileSet,
};
use crate::trace::TASKS;

/// GPU counts the default profiles are tabulated at.
pub const GPU_COUNTS: [u32; 6] = [1, 2, 4, 8, 12, 16];

struct TaskShape {
    name: &'static str,
    comp_alpha: f64,
    comp_beta: f64,
    /// Gradient bytes exchanged per iteration.
    message: f64,
    delta: f64,
    mem_base: f64,
    mem_per_sample: f64,
}

const GB: f64 = 1e9;

const SHAPES: [TaskShape; 6] = [
    TaskShape {
        name: "bert",
        comp_alpha: 0.020,
        comp_beta: 0.026,
        message: 440e6,
        delta: 2.5,
        mem_base: 3.0 * GB,
        mem_per_sample: 0.22 * GB,
    },
    TaskShape {
        name: "cifar10",
        comp_alpha: 0.004,
        comp_beta: 0.0011,
        message: 45e6,
        delta: 1.5,
        mem_base: 1.0 * GB,
        mem_per_sample: 0.02 * GB,
    },
    TaskShape {
        name: "deepspeech2",
        comp_alpha: 0.020,
        comp_beta: 0.016,
        message: 350e6,
        delta: 2.0,
        mem_base: 2.5 * GB,
        mem_per_sample: 0.15 * GB,
    },
    TaskShape {
        name: "imagenet",
        comp_alpha: 0.010,
        comp_beta: 0.010,
        message: 100e6,
        delta: 2.0,
        mem_base: 2.0 * GB,
        mem_per_sample: 0.18 * GB,
    },
    TaskShape {
        name: "ncf",
        comp_alpha: 0.003,
        comp_beta: 0.00030,
        message: 25e6,
        delta: 1.2,
        mem_base: 1.2 * GB,
        mem_per_sample: 0.004 * GB,
    },
    TaskShape {
        name: "yolov3",
        comp_alpha: 0.020,
        comp_beta: 0.028,
        message: 248e6,
        delta: 1.8,
        mem_base: 2.2 * GB,
        mem_per_sample: 0.35 * GB,
    },
];

/// Default per-GPU memory capacity matching the profiles (11 GB cards).
pub const DEFAULT_GPU_MEMORY: f64 = 11.0 * GB;

/// Global speed factor applied to every compute and communication term.
/// Calibrated so the bundled presets run the reference clusters near
/// critical load (arrival demand roughly matching capacity).
const SPEED_SCALE: f64 = 0.75;

/// Skew of the sampled interference distribution: most task pairs interfere
/// mildly, a thin tail reaches the top of the range.
const XI_SKEW: f64 = 5.5;

/// Ring-style all-reduce cost at `n` workers over a ~1.25 GB/s effective link.
fn comm_at(n: u32, message: f64) -> CommParams {
    if n <= 1 {
        // single worker: no gradient exchange
        return CommParams {
            alpha: 0.0,
            beta: 0.0,
            message_size: message,
        };
    }
    let n = n as f64;
    let bandwidth = 1.25e9;
    CommParams {
        alpha: 2.0 * (n - 1.0) * 0.0005,
        beta: 2.0 * (n - 1.0) / n / bandwidth,
        message_size: message,
    }
}

/// Synthetic default profiles for the six tasks at [`GPU_COUNTS`].
pub fn default_profiles() -> ProfileSet {
    let mut set = ProfileSet::default();
    for shape in &SHAPES {
        let mut entries = BTreeMap::new();
        for &n in &GPU_COUNTS {
            let mut comm = comm_at(n, shape.message);
            comm.alpha *= SPEED_SCALE;
            comm.beta *= SPEED_SCALE;
            entries.insert(
                n,
                PerfEntry {
                    comp: CompParams {
                        alpha: shape.comp_alpha * SPEED_SCALE,
                        beta: shape.comp_beta * SPEED_SCALE,
                    },
                    comm,
                    delta: shape.delta,
                },
            );
        }
        let max_batch =
            ((DEFAULT_GPU_MEMORY - shape.mem_base) / shape.mem_per_sample).floor() as u32;
        set.insert(ModelProfile {
            task_name: shape.name.to_string(),
            entries,
            mem_base: shape.mem_base,
            mem_per_sample: shape.mem_per_sample,
            max_batch,
        });
    }
    set
}

/// A measured-like interference table, deterministic per seed. Every ordered
/// task pair gets ratios drawn from `[lo, hi]` with a right-skewed shape
/// (`lo + (hi - lo) * u^5.5`): co-location usually costs little, but a few
/// pairings are expensive.
pub fn sampled_interference(lo: f64, hi: f64, seed: u64) -> InterferenceTable {
    assert!(
        lo >= 1.0 && hi >= lo,
        "interference range must satisfy 1 <= lo <= hi"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = InterferenceTable::new(0.5 * (lo + hi)).expect("midpoint >= 1");
    for (i, &(a, _)) in TASKS.iter().enumerate() {
        for &(b, _) in &TASKS[i..] {
            let mut draw = || {
                let u: f64 = rng.gen();
                lo + (hi - lo) * u.powf(XI_SKEW)
            };
            let xi_first = draw();
            let xi_second = draw();
            table
                .insert(a, b, xi_first, xi_second)
                .expect("sampled xi >= 1");
        }
    }
    table
}

/// Default interference table: pairwise ratios in the measured 1.1 to 2.0
/// band, fixed seed.
pub fn default_interference() -> InterferenceTable {
    sampled_interference(1.1, 2.0, 7)
}
