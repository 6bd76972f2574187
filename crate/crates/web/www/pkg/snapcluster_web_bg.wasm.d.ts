/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_consensusview_free: (a: number, b: number) => void;
export const consensusview_extracted: (a: number) => number;
export const consensusview_histogram: (a: number) => [number, number];
export const consensusview_labels: (a: number) => [number, number];
export const consensusview_stable: (a: number) => number;
export const hierarchical: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const jl_curve: (a: number, b: number, c: number) => [number, number, number, number];
export const kmeans_consensus: (a: number, b: number, c: number, d: number, e: bigint, f: number) => [number, number, number];
export const make_blobs: (a: number, b: number, c: number, d: bigint) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
