/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_sliceview_free: (a: number, b: number) => void;
export const __wbg_sphereview_free: (a: number, b: number) => void;
export const edge_weights: (a: number, b: bigint, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const slice_phantom: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const sliceview_lesion_pixels: (a: number) => number;
export const sliceview_pixels: (a: number) => [number, number];
export const sliceview_size: (a: number) => number;
export const sphere_view: (a: number, b: bigint) => [number, number, number];
export const sphereview_edges: (a: number) => [number, number];
export const sphereview_energy: (a: number) => number;
export const sphereview_fixed: (a: number) => number;
export const sphereview_points: (a: number) => [number, number];
export const weight_for_hop: (a: number, b: number, c: number, d: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
