//! Cluster occupancy state: servers of GPUs, gang allocation and release
//! under the at-most-two-jobs-per-GPU sharing cap.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum jobs co-resident on one GPU. Interference grows quickly past two
/// co-runners, so the model never packs deeper.
pub const GPU_CAPACITY: usize = 2;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("gpu {gpu:?} already holds {occupants} jobs (capacity {cap})")]
    CapacityExceeded {
        gpu: GpuId,
        occupants: usize,
        cap: usize,
    },
    #[error("job {job} requested {requested} GPUs but was given {given}")]
    WrongSetSize {
        job: u64,
        requested: u32,
        given: usize,
    },
    #[error("job {job} is already allocated")]
    AlreadyAllocated { job: u64 },
    #[error("job {job} has no allocation")]
    NotAllocated { job: u64 },
    #[error("gpu {gpu:?} outside cluster bounds")]
    UnknownGpu { gpu: GpuId },
    #[error("job {job} listed twice in the requested GPU set")]
    DuplicateGpu { job: u64 },
}

/// Cluster geometry plus the per-GPU memory capacity used by sub-batch
/// feasibility checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub num_servers: u32,
    pub gpus_per_server: u32,
    /// Bytes of memory on every GPU.
    pub gpu_memory: f64,
}

impl ClusterSpec {
    pub fn total_gpus(&self) -> u32 {
        self.num_servers * self.gpus_per_server
    }
}

/// A GPU addressed by (server, local index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GpuId {
    pub server: u32,
    pub gpu: u32,
}

/// A live gang allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub job: u64,
    /// Sorted GPU set; immutable between start and release.
    pub gpus: Vec<GpuId>,
    pub start_time: f64,
}

impl Allocation {
    /// Distinct servers touched by the allocation.
    pub fn servers(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.gpus.iter().map(|g| g.server).collect();
        s.dedup();
        s
    }
}

/// Occupancy state owned by the simulation loop.
#[derive(Debug, Clone)]
pub struct ClusterState {
    spec: ClusterSpec,
    /// occupants[server][gpu] -> job ids, in allocation order.
    occupants: Vec<Vec<Vec<u64>>>,
    allocations: BTreeMap<u64, Allocation>,
}

impl ClusterState {
    pub fn new(spec: ClusterSpec) -> Self {
        let occupants = (0..spec.num_servers)
            .map(|_| vec![Vec::new(); spec.gpus_per_server as usize])
            .collect();
        ClusterState {
            spec,
            occupants,
            allocations: BTreeMap::new(),
        }
    }

    pub fn spec(&self) -> &ClusterSpec {
        &self.spec
    }

    pub fn occupants(&self, gpu: GpuId) -> &[u64] {
        &self.occupants[gpu.server as usize][gpu.gpu as usize]
    }

    pub fn allocation(&self, job: u64) -> Option<&Allocation> {
        self.allocations.get(&job)
    }

    pub fn allocations(&self) -> impl Iterator<Item = &Allocation> {
        self.allocations.values()
    }

    fn check_bounds(&self, gpu: GpuId) -> Result<(), ClusterError> {
        if gpu.server >= self.spec.num_servers || gpu.gpu >= self.spec.gpus_per_server {
            return Err(ClusterError::UnknownGpu { gpu });
        }
        Ok(())
    }

    /// Free GPU count per server, indexed by server.
    fn free_per_server(&self) -> Vec<u32> {
        self.occupants
            .iter()
            .map(|gpus| gpus.iter().filter(|o| o.is_empty()).count() as u32)
            .collect()
    }

    /// GPUs holding no job, in consolidation order: servers sorted by
    /// descending free-GPU count (ties by server index), GPUs by index within
    /// each server. Taking a prefix packs a job onto as few servers as
    /// possible.
    pub fn free_gpus(&self) -> Vec<GpuId> {
        let free = self.free_per_server();
        let mut order: Vec<u32> = (0..self.spec.num_servers).collect();
        order.sort_by_key(|&s| (std::cmp::Reverse(free[s as usize]), s));
        let mut out = Vec::new();
        for s in order {
            for g in 0..self.spec.gpus_per_server {
                if self.occupants[s as usize][g as usize].is_empty() {
                    out.push(GpuId { server: s, gpu: g });
                }
            }
        }
        out
    }

    /// GPUs holding exactly one job, in server/GPU index order.
    pub fn one_job_gpus(&self) -> Vec<GpuId> {
        let mut out = Vec::new();
        for s in 0..self.spec.num_servers {
            for g in 0..self.spec.gpus_per_server {
                if self.occupants[s as usize][g as usize].len() == 1 {
                    out.push(GpuId { server: s, gpu: g });
                }
            }
        }
        out
    }

    /// Gang-allocate `job` onto the exact GPU set. Fails loudly on capacity or
    /// set-size violations; those are scheduler bugs, not recoverable states.
    pub fn allocate(
        &mut self,
        job: u64,
        requested_gpus: u32,
        gpus: &[GpuId],
        start_time: f64,
    ) -> Result<(), ClusterError> {
        if self.allocations.contains_key(&job) {
            return Err(ClusterError::AlreadyAllocated { job });
        }
        if gpus.len() != requested_gpus as usize {
            return Err(ClusterError::WrongSetSize {
                job,
                requested: requested_gpus,
                given: gpus.len(),
            });
        }
        let mut sorted: Vec<GpuId> = gpus.to_vec();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(ClusterError::DuplicateGpu { job });
        }
        for &gpu in &sorted {
            self.check_bounds(gpu)?;
            let occ = self.occupants(gpu);
            if occ.len() >= GPU_CAPACITY {
                return Err(ClusterError::CapacityExceeded {
                    gpu,
                    occupants: occ.len(),
                    cap: GPU_CAPACITY,
                });
            }
        }
        for &gpu in &sorted {
            self.occupants[gpu.server as usize][gpu.gpu as usize].push(job);
        }
        self.allocations.insert(
            job,
            Allocation {
                job,
                gpus: sorted,
                start_time,
            },
        );
        Ok(())
    }

    /// Release every GPU of a job atomically; co-runners on shared GPUs
    /// become sole occupants.
    pub fn release(&mut self, job: u64) -> Result<Allocation, ClusterError> {
        let alloc = self
            .allocations
            .remove(&job)
            .ok_or(ClusterError::NotAllocated { job })?;
        for gpu in &alloc.gpus {
            self.occupants[gpu.server as usize][gpu.gpu as usize].retain(|&j| j != job);
        }
        Ok(alloc)
    }

    /// Jobs sharing at least one GPU with `job`, deduplicated, sorted.
    pub fn co_runners(&self, job: u64) -> Vec<u64> {
        let Some(alloc) = self.allocations.get(&job) else {
            return Vec::new();
        };
        let mut out: Vec<u64> = alloc
            .gpus
            .iter()
            .flat_map(|&g| self.occupants(g).iter().copied())
            .filter(|&j| j != job)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Cross-checks the gang and capacity invariants; returns a description
    /// of the first violation found.
    pub fn audit(&self) -> Result<(), String> {
        for s in 0..self.spec.num_servers as usize {
            for g in 0..self.spec.gpus_per_server as usize {
                let occ = &self.occupants[s][g];
                if occ.len() > GPU_CAPACITY {
                    return Err(format!("gpu ({s},{g}) holds {} jobs", occ.len()));
                }
                for j in occ {
                    if !self.allocations.contains_key(j) {
                        return Err(format!("gpu ({s},{g}) lists unallocated job {j}"));
                    }
                }
            }
        }
        for (job, alloc) in &self.allocations {
            for gpu in &alloc.gpus {
                if !self.occupants(*gpu).contains(job) {
                    return Err(format!("job {job} missing from its gpu {gpu:?}"));
                }
            }
        }
        Ok(())
    }
}
