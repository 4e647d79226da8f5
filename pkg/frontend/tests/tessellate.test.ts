import { describe, expect, it } from "vitest";

import type { Primitive } from "../src/api";
import { quaternionMatrix, tessellate } from "../src/tessellate";

function prim(overrides: Partial<Primitive> = {}): Primitive {
  return {
    alpha: [0.5, 0.7, 0.9],
    epsilon: [0.6, 1.3],
    taper: [0, 0],
    q: [1, 0, 0, 0],
    t: [0, 0, 0],
    ...overrides,
  };
}

/** Implicit surface check: undo pose and taper, then evaluate the
 *  inside-outside function, which is 1 exactly on the surface. */
function implicitValue(p: Primitive, x: number, y: number, z: number): number {
  const r = quaternionMatrix(p.q);
  const [tx, ty, tz] = p.t as [number, number, number];
  const dx = x - tx;
  const dy = y - ty;
  const dz = z - tz;
  // transpose of a rotation is its inverse
  let cx = r[0]! * dx + r[3]! * dy + r[6]! * dz;
  let cy = r[1]! * dx + r[4]! * dy + r[7]! * dz;
  const cz = r[2]! * dx + r[5]! * dy + r[8]! * dz;
  const [a1, a2, a3] = p.alpha as [number, number, number];
  const [e1, e2] = p.epsilon as [number, number];
  cx /= 1 + (p.taper[0]! * cz) / a3;
  cy /= 1 + (p.taper[1]! * cz) / a3;
  const sx = Math.pow(Math.abs(cx / a1), 2 / e2);
  const sy = Math.pow(Math.abs(cy / a2), 2 / e2);
  const sz = Math.pow(Math.abs(cz / a3), 2 / e1);
  return Math.pow(sx + sy, e2 / e1) + sz;
}

describe("tessellate", () => {
  it("emits the expected vertex and face counts", () => {
    const { positions, indices } = tessellate(prim(), 16);
    expect(positions.length).toBe(17 * 17 * 3);
    expect(indices.length).toBe(16 * 16 * 6);
    const max = Math.max(...indices);
    expect(max).toBeLessThan(17 * 17);
  });

  it("places every vertex on the implicit surface", () => {
    const p = prim({
      taper: [0.3, -0.2],
      q: [0.82, 0.1, -0.4, 0.25],
      t: [0.2, -0.1, 0.35],
    });
    const { positions } = tessellate(p, 12);
    for (let i = 0; i < positions.length; i += 3) {
      const f = implicitValue(p, positions[i]!, positions[i + 1]!, positions[i + 2]!);
      expect(f).toBeCloseTo(1, 4);
    }
  });

  it("respects the size parameters on an ellipsoid", () => {
    const p = prim({ alpha: [0.25, 0.5, 1.0], epsilon: [1, 1] });
    const { positions } = tessellate(p, 32);
    let mx = 0;
    let my = 0;
    let mz = 0;
    for (let i = 0; i < positions.length; i += 3) {
      mx = Math.max(mx, Math.abs(positions[i]!));
      my = Math.max(my, Math.abs(positions[i + 1]!));
      mz = Math.max(mz, Math.abs(positions[i + 2]!));
    }
    expect(mx).toBeCloseTo(0.25, 2);
    expect(my).toBeCloseTo(0.5, 2);
    expect(mz).toBeCloseTo(1.0, 2);
  });

  it("is a pure function of its inputs", () => {
    const p = prim({ taper: [0.1, 0.1] });
    const a = tessellate(p, 8);
    const b = tessellate(p, 8);
    expect(Array.from(a.positions)).toEqual(Array.from(b.positions));
    expect(Array.from(a.indices)).toEqual(Array.from(b.indices));
  });
});

describe("quaternionMatrix", () => {
  it("is orthonormal for an arbitrary quaternion", () => {
    const r = quaternionMatrix([0.3, -0.5, 0.7, 0.2]);
    for (let i = 0; i < 3; i++) {
      for (let j = 0; j < 3; j++) {
        let dot = 0;
        for (let k = 0; k < 3; k++) dot += r[i * 3 + k]! * r[j * 3 + k]!;
        expect(dot).toBeCloseTo(i === j ? 1 : 0, 10);
      }
    }
  });

  it("maps the identity quaternion to the identity matrix", () => {
    expect(quaternionMatrix([1, 0, 0, 0])).toEqual([1, 0, 0, 0, 1, 0, 0, 0, 1]);
  });
});
