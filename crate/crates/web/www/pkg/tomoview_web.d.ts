/* tslint:disable */
/* eslint-disable */

/**
 * A grey-level slice plus the lesion area it shows.
 */
export class SliceView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly lesion_pixels: number;
    /**
     * Row-major intensities in [0, 1].
     */
    readonly pixels: Float32Array;
    readonly size: number;
}

/**
 * Optimized viewpoints with their spherical mesh.
 */
export class SphereView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Flat vertex index pairs.
     */
    readonly edges: Uint32Array;
    readonly energy: number;
    /**
     * The first `fixed` points are the pinned canonical normals.
     */
    readonly fixed: number;
    /**
     * Flat `x, y, z` triples.
     */
    readonly points: Float64Array;
}

/**
 * Dense `n x n` adjacency of the view graph over `n` optimized viewpoints.
 * `topology` is `local` or `complete`; `weighting` one of `uniform`,
 * `linear_decay`, `inverse`, `inverse_square`.
 */
export function edge_weights(n: number, seed: bigint, topology: string, weighting: string): Float64Array;

/**
 * Slices a striped (or flat) ellipsoidal lesion, tilted `tilt_deg` from z,
 * through its centre with the plane normal at polar angle `theta_deg` and
 * azimuth `phi_deg`.
 */
export function slice_phantom(tilt_deg: number, striped: boolean, theta_deg: number, phi_deg: number, size: number): SliceView;

export function sphere_view(n: number, seed: bigint): SphereView;

/**
 * Weight of an edge `hop` steps long when the graph's largest hop is `max_hop`.
 */
export function weight_for_hop(weighting: string, hop: number, max_hop: number): number;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_sliceview_free: (a: number, b: number) => void;
    readonly __wbg_sphereview_free: (a: number, b: number) => void;
    readonly edge_weights: (a: number, b: bigint, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly slice_phantom: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly sliceview_lesion_pixels: (a: number) => number;
    readonly sliceview_pixels: (a: number) => [number, number];
    readonly sliceview_size: (a: number) => number;
    readonly sphere_view: (a: number, b: bigint) => [number, number, number];
    readonly sphereview_edges: (a: number) => [number, number];
    readonly sphereview_energy: (a: number) => number;
    readonly sphereview_fixed: (a: number) => number;
    readonly sphereview_points: (a: number) => [number, number];
    readonly weight_for_hop: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
