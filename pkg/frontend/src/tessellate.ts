import type { Primitive } from "./api";

function signedPow(base: number, exp: number): number {
  return Math.sign(base) * Math.pow(Math.abs(base), exp);
}

export interface SurfaceMesh {
  positions: Float32Array;
  indices: Uint32Array;
}

/**
 * Triangulate a primitive's parametric surface in its world pose.
 *
 * Vertices come from the standard two-angle parameterization with signed
 * power exponents, then the linear taper (x and y scaled by 1 + k z / az),
 * then the rigid pose. Display-only: all shape math stays on the server.
 */
export function tessellate(prim: Primitive, segments = 24): SurfaceMesh {
  const [a1, a2, a3] = prim.alpha as [number, number, number];
  const [e1, e2] = prim.epsilon as [number, number];
  const [kx, ky] = prim.taper as [number, number];
  const rot = quaternionMatrix(prim.q);
  const [tx, ty, tz] = prim.t as [number, number, number];

  const rows = segments + 1;
  const positions = new Float32Array(rows * rows * 3);
  let v = 0;
  for (let i = 0; i < rows; i++) {
    const eta = -Math.PI / 2 + (Math.PI * i) / segments;
    for (let j = 0; j < rows; j++) {
      const omega = -Math.PI + (2 * Math.PI * j) / segments;
      let x = a1 * signedPow(Math.cos(eta), e1) * signedPow(Math.cos(omega), e2);
      let y = a2 * signedPow(Math.cos(eta), e1) * signedPow(Math.sin(omega), e2);
      const z = a3 * signedPow(Math.sin(eta), e1);
      x *= 1 + (kx * z) / a3;
      y *= 1 + (ky * z) / a3;
      positions[v++] = rot[0] * x + rot[1] * y + rot[2] * z + tx;
      positions[v++] = rot[3] * x + rot[4] * y + rot[5] * z + ty;
      positions[v++] = rot[6] * x + rot[7] * y + rot[8] * z + tz;
    }
  }

  const indices = new Uint32Array(segments * segments * 6);
  let f = 0;
  for (let i = 0; i < segments; i++) {
    for (let j = 0; j < segments; j++) {
      const p0 = i * rows + j;
      const p1 = p0 + 1;
      const p2 = p0 + rows;
      const p3 = p2 + 1;
      indices[f++] = p0;
      indices[f++] = p2;
      indices[f++] = p1;
      indices[f++] = p1;
      indices[f++] = p2;
      indices[f++] = p3;
    }
  }
  return { positions, indices };
}

/** Row-major rotation matrix of a unit quaternion (w, x, y, z). */
export type Mat3 = [
  number, number, number,
  number, number, number,
  number, number, number,
];

export function quaternionMatrix(q: number[]): Mat3 {
  const n = Math.hypot(q[0]!, q[1]!, q[2]!, q[3]!);
  const w = q[0]! / n;
  const x = q[1]! / n;
  const y = q[2]! / n;
  const z = q[3]! / n;
  return [
    1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
    2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
    2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
  ];
}
