import type { ShapePayload } from "./api";

/** One distinct color per part, cycled past eight. */
export const PART_PALETTE: [number, number, number][] = [
  [0.91, 0.30, 0.24],
  [0.18, 0.62, 0.87],
  [0.20, 0.78, 0.35],
  [0.95, 0.70, 0.13],
  [0.61, 0.35, 0.93],
  [0.17, 0.78, 0.71],
  [0.93, 0.42, 0.68],
  [0.55, 0.57, 0.60],
];

export function partColor(part: number): [number, number, number] {
  return PART_PALETTE[part % PART_PALETTE.length]!;
}

export interface PointBuffers {
  positions: Float32Array;
  colors: Float32Array;
  count: number;
}

const DIM = 0.25;

/**
 * Flat GPU-ready arrays for a shape payload. With a non-empty selection,
 * unselected parts are dimmed so the selection reads at a glance; the
 * positions are copied verbatim either way.
 */
export function buildPointBuffers(
  payload: ShapePayload,
  selection: ReadonlySet<number> = new Set(),
): PointBuffers {
  const count = payload.points.length;
  const positions = new Float32Array(count * 3);
  const colors = new Float32Array(count * 3);
  for (let i = 0; i < count; i++) {
    const p = payload.points[i]!;
    positions[i * 3] = p[0]!;
    positions[i * 3 + 1] = p[1]!;
    positions[i * 3 + 2] = p[2]!;
    const part = payload.part_index[i]!;
    const [r, g, b] = partColor(part);
    const scale = selection.size > 0 && !selection.has(part) ? DIM : 1.0;
    colors[i * 3] = r * scale;
    colors[i * 3 + 1] = g * scale;
    colors[i * 3 + 2] = b * scale;
  }
  return { positions, colors, count };
}
