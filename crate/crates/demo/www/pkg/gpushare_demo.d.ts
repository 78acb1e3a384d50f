/* tslint:disable */
/* eslint-disable */

/**
 * Walk the sub-batch halving ladder for an arriving job next to a running
 * one, reporting each candidate's feasibility, iteration time and pair
 * schedule, plus the configuration the search selects.
 */
export function batch_scaling_explorer(comp_alpha: number, comp_beta: number, t_comm: number, delta: number, requested_batch: number, mem_base_gb: number, mem_per_sample_gb: number, gpu_memory_gb: number, running_mem_gb: number, t_running: number, iters_running: number, xi_running: number, iters_arriving: number, xi_arriving: number): string;

/**
 * Evaluate a (running, arriving) pair: the decision, both endpoint
 * schedules, the sign-condition diagnostic and the average-JCT curve over a
 * uniform insertion-time grid.
 */
export function pair_explorer(t_running: number, iters_running: number, xi_running: number, t_arriving: number, iters_arriving: number, xi_arriving: number, curve_points: number): string;

/**
 * Run a generated workload on a small cluster and return aggregate metrics
 * plus per-job timeline segments for a Gantt rendering. `xi` of zero means
 * the measured-like sampled interference table; any value >= 1 is applied
 * as a constant ratio.
 */
export function simulate_cluster(policy: string, seed: bigint, jobs: number, servers: number, gpus_per_server: number, xi: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly batch_scaling_explorer: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number, l: number, m: number, n: number) => [number, number];
    readonly pair_explorer: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number];
    readonly simulate_cluster: (a: number, b: number, c: bigint, d: number, e: number, f: number, g: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
