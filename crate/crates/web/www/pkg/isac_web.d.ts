/* tslint:disable */
/* eslint-disable */

/**
 * Bound for `K` users and `d` quadratic terms in mode `ic`, `nic` or `radar`.
 */
export function bound(k: number, d: number, mode: string): number;

/**
 * Bound table for line-of-sight targets as CSV `k,n_tr,d,ic,nic`.
 */
export function boundTable(k_max: number, n_targets_max: number): string;

/**
 * Reduced design and its beam pattern as JSON.
 */
export function design(n_tx: number, target_deg: Float64Array, user_deg: Float64Array, cancel_interference: boolean, theta_std_deg: number): string;

/**
 * Two-beam explorer as JSON.
 */
export function twoBeams(n_tx: number, n_rx: number, theta_deg: number, power: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly bound: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly boundTable: (a: number, b: number) => [number, number];
    readonly design: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly twoBeams: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
