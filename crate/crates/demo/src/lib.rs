//! Browser bindings for the pair scheduler and the cluster simulator.
//!
//! Three entry points, each returning a JSON string for the page to render:
//! [`pair_explorer`] evaluates one running/arriving pair over the whole
//! insertion-time range, [`batch_scaling_explorer`] walks the sub-batch
//! halving ladder under a memory cap, and [`simulate_cluster`] runs a small
//! generated workload under a chosen policy and returns metrics plus a
//! GPU timeline.

use std::collections::BTreeMap;

use wasm_bindgen::prelude::*;

use gpushare::cluster::ClusterSpec;
use gpushare::defaults::{default_profiles, sampled_interference, DEFAULT_GPU_MEMORY};
use gpushare::pair_sched::{
    batch_size_scaling, best_pair_schedule, pair_jct, sign_coefficient, sign_condition_applies,
    JobSnapshot, PairContext,
};
use gpushare::perf_model::{
    iter_time, CommParams, CompParams, InterferenceTable, ModelProfile, PerfEntry,
};
use gpushare::policies::PolicyKind;
use gpushare::simulator::{run, SimOptions};
use gpushare::trace::{generate_workload, WorkloadSpec};

fn err_json(message: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": message.to_string() }).to_string()
}

/// Evaluate a (running, arriving) pair: the decision, both endpoint
/// schedules, the sign-condition diagnostic and the average-JCT curve over a
/// uniform insertion-time grid.
#[wasm_bindgen]
pub fn pair_explorer(
    t_running: f64,
    iters_running: f64,
    xi_running: f64,
    t_arriving: f64,
    iters_arriving: f64,
    xi_arriving: f64,
    curve_points: usize,
) -> String {
    let running = match JobSnapshot::new(t_running, iters_running, xi_running) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    let arriving = match JobSnapshot::new(t_arriving, iters_arriving, xi_arriving) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    let points = curve_points.clamp(2, 2000);
    let max_kappa = running.solo_remaining();
    let mut curve = Vec::with_capacity(points);
    for i in 0..points {
        let kappa = max_kappa * i as f64 / (points - 1) as f64;
        match pair_jct(&running, &arriving, kappa) {
            Ok((a, b)) => curve.push(serde_json::json!({
                "kappa": kappa,
                "avg": 0.5 * (a + b),
                "running": a,
                "arriving": b,
            })),
            Err(e) => return err_json(e),
        }
    }
    let decision = best_pair_schedule(&running, &arriving);
    let (sh_run, sh_arr) = pair_jct(&running, &arriving, 0.0).unwrap();
    let (sq_run, sq_arr) = pair_jct(&running, &arriving, max_kappa).unwrap();
    serde_json::json!({
        "decision": {
            "share": decision.share,
            "kappa": decision.kappa,
            "avg_jct": decision.avg_jct,
            "jct_running": decision.jct_running,
            "jct_arriving": decision.jct_arriving,
        },
        "endpoints": {
            "share_avg": 0.5 * (sh_run + sh_arr),
            "sequential_avg": 0.5 * (sq_run + sq_arr),
        },
        "sign": {
            "applies": sign_condition_applies(&running, &arriving),
            "coefficient": sign_coefficient(xi_running, xi_arriving),
        },
        "max_kappa": max_kappa,
        "curve": curve,
    })
    .to_string()
}

/// Walk the sub-batch halving ladder for an arriving job next to a running
/// one, reporting each candidate's feasibility, iteration time and pair
/// schedule, plus the configuration the search selects.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn batch_scaling_explorer(
    comp_alpha: f64,
    comp_beta: f64,
    t_comm: f64,
    delta: f64,
    requested_batch: u32,
    mem_base_gb: f64,
    mem_per_sample_gb: f64,
    gpu_memory_gb: f64,
    running_mem_gb: f64,
    t_running: f64,
    iters_running: f64,
    xi_running: f64,
    iters_arriving: u32,
    xi_arriving: f64,
) -> String {
    let gb = 1e9;
    let mut entries = BTreeMap::new();
    entries.insert(
        1,
        PerfEntry {
            comp: CompParams {
                alpha: comp_alpha,
                beta: comp_beta,
            },
            comm: CommParams {
                alpha: t_comm,
                beta: 0.0,
                message_size: 1.0,
            },
            delta,
        },
    );
    let profile = ModelProfile {
        task_name: "custom".into(),
        entries,
        mem_base: mem_base_gb * gb,
        mem_per_sample: mem_per_sample_gb * gb,
        max_batch: requested_batch.max(1),
    };
    if let Err(e) = profile.validate() {
        return err_json(e);
    }
    let running = match JobSnapshot::new(t_running, iters_running, xi_running) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    let ctx = PairContext {
        running,
        running_mem: running_mem_gb * gb,
        arriving_profile: &profile,
        arriving_gpus: 1,
        arriving_iters: iters_arriving as u64,
        arriving_xi: xi_arriving,
        memory_cap: gpu_memory_gb * gb,
    };

    // ladder report, independent of which candidate wins
    let mut candidates = Vec::new();
    let mut b = requested_batch.max(1) as f64;
    loop {
        let c = b.ceil() as u32;
        let steps = requested_batch.div_ceil(c);
        let sub = requested_batch.div_ceil(steps);
        let footprint = profile.mem_footprint(sub);
        let feasible = ctx.running_mem + footprint <= ctx.memory_cap;
        let mut row = serde_json::json!({
            "sub_batch": sub,
            "accum_steps": steps,
            "footprint_gb": footprint / gb,
            "feasible": feasible,
        });
        if feasible {
            match iter_time(requested_batch, steps, &profile, 1) {
                Ok(solo) => {
                    if let Ok(arr) = JobSnapshot::new(solo, iters_arriving as f64, xi_arriving) {
                        let d = best_pair_schedule(&ctx.running, &arr);
                        row["iter_time"] = serde_json::json!(solo);
                        row["share"] = serde_json::json!(d.share);
                        row["avg_jct"] = serde_json::json!(d.avg_jct);
                    }
                }
                Err(e) => return err_json(e),
            }
        }
        candidates.push(row);
        if c == 1 {
            break;
        }
        b /= 2.0;
    }

    let best = match batch_size_scaling(&ctx, requested_batch.max(1)) {
        Ok(s) => serde_json::json!({
            "sub_batch": s.sub_batch,
            "accum_steps": s.accum_steps,
            "share": s.decision.share,
            "avg_jct": s.decision.avg_jct,
            "kappa": s.decision.kappa,
        }),
        Err(e) => serde_json::json!({ "infeasible": e.to_string() }),
    };
    serde_json::json!({ "candidates": candidates, "best": best }).to_string()
}

/// Run a generated workload on a small cluster and return aggregate metrics
/// plus per-job timeline segments for a Gantt rendering. `xi` of zero means
/// the measured-like sampled interference table; any value >= 1 is applied
/// as a constant ratio.
#[wasm_bindgen]
pub fn simulate_cluster(
    policy: &str,
    seed: u64,
    jobs: u32,
    servers: u32,
    gpus_per_server: u32,
    xi: f64,
) -> String {
    let Some(policy) = PolicyKind::parse(policy) else {
        return err_json(format!(
            "unknown policy `{policy}` (expected one of {})",
            PolicyKind::ALL_NAMES.join(", ")
        ));
    };
    if !(1..=64).contains(&servers) || !(1..=16).contains(&gpus_per_server) {
        return err_json("cluster size out of the demo's range");
    }
    let cluster = ClusterSpec {
        num_servers: servers,
        gpus_per_server,
        gpu_memory: DEFAULT_GPU_MEMORY,
    };

    let mut spec = WorkloadSpec::physical(seed);
    spec.load_scale = f64::from(jobs.clamp(2, 120)) / f64::from(spec.total_jobs);
    // keep gangs placeable on the chosen cluster
    let total = cluster.total_gpus();
    spec.gpu_demand.retain(|&(g, _)| g <= total);
    if spec.gpu_demand.is_empty() {
        return err_json("cluster too small for any gang size");
    }
    let trace = match generate_workload(&spec) {
        Ok(t) => t,
        Err(e) => return err_json(e),
    };

    let interference = if xi == 0.0 {
        sampled_interference(1.1, 2.0, seed)
    } else {
        match InterferenceTable::constant(xi) {
            Ok(t) => t,
            Err(e) => return err_json(e),
        }
    };

    let profiles = default_profiles();
    let outcome = match run(
        &trace,
        &cluster,
        &policy,
        &profiles,
        &interference,
        seed,
        &SimOptions {
            record_timeline: true,
        },
    ) {
        Ok(o) => o,
        Err(e) => return err_json(e),
    };

    let jobs_json: Vec<serde_json::Value> = outcome
        .per_job
        .iter()
        .map(|j| {
            serde_json::json!({
                "job_id": j.job_id,
                "task": j.task_name,
                "gpus": j.gpus,
                "arrival": j.arrival,
                "start": j.start,
                "completion": j.completion,
                "jct": j.jct,
                "queuing": j.queuing,
                "shared": j.shared,
                "sub_batch": j.sub_batch,
                "accum_steps": j.accum_steps,
            })
        })
        .collect();
    let segments: Vec<serde_json::Value> = outcome
        .timeline
        .iter()
        .map(|s| {
            let gpus: Vec<u32> = s
                .gpus
                .iter()
                .map(|g| g.server * gpus_per_server + g.gpu)
                .collect();
            serde_json::json!({
                "job_id": s.job_id,
                "from": s.from,
                "to": s.to,
                "xi": s.xi,
                "gpus": gpus,
            })
        })
        .collect();
    serde_json::json!({
        "policy": policy.name(),
        "metrics": outcome.metrics,
        "jobs": jobs_json,
        "segments": segments,
        "total_gpus": total,
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_explorer_reports_canonical_decision() {
        let json = pair_explorer(1.0, 200.0, 1.2, 1.0, 100.0, 1.2, 101);
        let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(doc["decision"]["share"], true);
        assert!((doc["decision"]["avg_jct"].as_f64().unwrap() - 170.0).abs() < 1e-9);
        assert_eq!(doc["curve"].as_array().unwrap().len(), 101);
    }

    #[test]
    fn pair_explorer_rejects_bad_input() {
        let json = pair_explorer(-1.0, 200.0, 1.2, 1.0, 100.0, 1.2, 101);
        let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(doc["error"].is_string());
    }

    #[test]
    fn batch_scaling_explorer_walks_the_ladder() {
        let json = batch_scaling_explorer(
            0.01, 0.002, 0.02, 2.0, 32, 1.0, 0.2, 11.0, 4.0, 0.5, 1000.0, 1.3, 300, 1.3,
        );
        let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        let candidates = doc["candidates"].as_array().unwrap();
        assert_eq!(candidates.len(), 6); // 32, 16, 8, 4, 2, 1
        assert!(candidates.iter().any(|c| c["feasible"] == false));
        assert!(doc["best"]["sub_batch"].as_u64().is_some());
    }

    #[test]
    fn simulate_cluster_returns_metrics_and_segments() {
        let json = simulate_cluster("sjf-bsbf", 3, 12, 2, 4, 0.0);
        let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(doc["jobs"].as_array().unwrap().len(), 12);
        assert!(doc["metrics"]["average_jct"].as_f64().unwrap() > 0.0);
        assert!(!doc["segments"].as_array().unwrap().is_empty());
        assert_eq!(doc["total_gpus"], 8);
    }

    #[test]
    fn simulate_cluster_rejects_unknown_policy() {
        let json = simulate_cluster("not-a-policy", 1, 10, 2, 4, 1.2);
        let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(doc["error"].as_str().unwrap().contains("not-a-policy"));
    }
}
