/* tslint:disable */
/* eslint-disable */

export class ConsensusView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly extracted: number;
    /**
     * Percentages at 0.0, 0.1, ..., 1.0.
     */
    readonly histogram: Float64Array;
    /**
     * Labels from the extracted (threshold 1.0) consensus clusters.
     */
    readonly labels: Uint32Array;
    readonly stable: boolean;
}

/**
 * Cut the dendrogram for `linkage` (single, complete, average, ward) at `nc` clusters.
 */
export function hierarchical(xy: Float64Array, linkage: string, nc: number): Uint32Array;

/**
 * Minimum target dimension for each N in `ns`.
 */
export function jl_curve(eps: number, ns: Uint32Array): Uint32Array;

export function kmeans_consensus(xy: Float64Array, nc: number, reps: number, seed: bigint, plus_plus: boolean): ConsensusView;

/**
 * `groups` Gaussian-ish clouds on a circle, `per_group` points each,
 * returned as interleaved x,y.
 */
export function make_blobs(groups: number, per_group: number, spread: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_consensusview_free: (a: number, b: number) => void;
    readonly consensusview_extracted: (a: number) => number;
    readonly consensusview_histogram: (a: number) => [number, number];
    readonly consensusview_labels: (a: number) => [number, number];
    readonly consensusview_stable: (a: number) => number;
    readonly hierarchical: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly jl_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly kmeans_consensus: (a: number, b: number, c: number, d: number, e: bigint, f: number) => [number, number, number];
    readonly make_blobs: (a: number, b: number, c: number, d: bigint) => [number, number];
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
