//! Stable CSV and table rendering for simulation results.
//!
//! Column sets are part of the tool's interface: downstream plotting scripts
//! key on them. Numbers are written with Rust's shortest-roundtrip float
//! formatting, so identical runs produce byte-identical files.

use crate::simulator::{JobResult, SimMetrics};

pub const PER_JOB_HEADER: &str = "job_id,task_name,gpus,batch_per_gpu,iterations,arrival,start,completion,jct,queuing,sub_batch,accum_steps,shared,preemptions";

pub const SUMMARY_HEADER: &str = "policy,jobs,makespan,average_jct,average_queuing,large_average_jct,small_average_jct,large_average_queuing,small_average_queuing";

/// One row per job, ordered as the simulator returned them (arrival order).
pub fn per_job_csv(results: &[JobResult]) -> String {
    let mut out = String::from(PER_JOB_HEADER);
    out.push('\n');
    for j in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            j.job_id,
            j.task_name,
            j.gpus,
            j.batch_per_gpu,
            j.iterations,
            j.arrival,
            j.start,
            j.completion,
            j.jct,
            j.queuing,
            j.sub_batch,
            j.accum_steps,
            j.shared,
            j.preemptions
        ));
    }
    out
}

fn summary_row(policy: &str, m: &SimMetrics) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}\n",
        policy,
        m.jobs,
        m.makespan,
        m.average_jct,
        m.average_queuing,
        m.large.average_jct,
        m.small.average_jct,
        m.large.average_queuing,
        m.small.average_queuing
    )
}

/// Single-run summary in the same shape as the comparison table.
pub fn summary_csv(policy: &str, metrics: &SimMetrics) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    out.push_str(&summary_row(policy, metrics));
    out
}

/// Comparison table: one row per policy over the identical trace.
pub fn compare_csv(rows: &[(String, SimMetrics)]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (policy, metrics) in rows {
        out.push_str(&summary_row(policy, metrics));
    }
    out
}

/// Sweep output: the swept dimension and its value prefix every summary row.
pub fn sweep_csv(dimension: &str, rows: &[(f64, String, SimMetrics)]) -> String {
    let mut out = format!("{},{}\n", "dimension,value", SUMMARY_HEADER);
    for (value, policy, metrics) in rows {
        out.push_str(&format!("{dimension},{value},"));
        out.push_str(&summary_row(policy, metrics));
    }
    out
}

/// Fixed-width comparison table for terminals.
pub fn render_compare_table(rows: &[(String, SimMetrics)]) -> String {
    let mut out = format!(
        "{:<10} {:>10} {:>12} {:>12} {:>12} {:>12}\n",
        "policy", "makespan", "avg_jct", "avg_queuing", "jct_large", "jct_small"
    );
    for (policy, m) in rows {
        out.push_str(&format!(
            "{:<10} {:>10.1} {:>12.2} {:>12.2} {:>12.2} {:>12.2}\n",
            policy,
            m.makespan,
            m.average_jct,
            m.average_queuing,
            m.large.average_jct,
            m.small.average_jct
        ));
    }
    out
}
