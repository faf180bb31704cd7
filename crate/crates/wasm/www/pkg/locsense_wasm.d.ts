/* tslint:disable */
/* eslint-disable */

/**
 * QFI, CDW OFI and `⟨O_cdw⟩` along a uniform `V` grid; JSON.
 */
export function adiabatic_scan(l: number, n_f: number, v_start: number, v_stop: number, points: number): string;

export function fibonacci_sizes(): Uint32Array;

export function orbital_density(l: number, v: number, n_f: number): Float64Array;

/**
 * Dynamic QFI and OFIs after a sudden quench on a geometric time grid; JSON.
 */
export function quench_curve(l: number, initial: string, v_i: number, v_f: number, t_max: number, points: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly adiabatic_scan: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly fibonacci_sizes: () => [number, number];
    readonly orbital_density: (a: number, b: number, c: number) => [number, number, number, number];
    readonly quench_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
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
