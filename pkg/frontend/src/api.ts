export interface Primitive {
  alpha: number[];
  epsilon: number[];
  taper: number[];
  q: number[];
  t: number[];
}

export interface ShapePayload {
  points: number[][];
  part_index: number[];
  primitives: Primitive[];
  bundle_id?: string;
}

export interface Meta {
  M: number;
  D_z: number;
  part_dims: number[];
  category: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly detail: string,
  ) {
    super(`${code} (${status}): ${detail}`);
    this.name = "ApiError";
  }
}

/** Thin typed wrapper over the model service's JSON endpoints. */
export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, init);
    const text = await resp.text();
    let body: unknown = null;
    try {
      body = JSON.parse(text);
    } catch {
      // non-JSON bodies only ever accompany transport-level failures
    }
    if (!resp.ok) {
      const err = (body ?? {}) as { error?: string; detail?: string };
      throw new ApiError(resp.status, err.error ?? "unknown", err.detail ?? text);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  meta(): Promise<Meta> {
    return this.request<Meta>("/meta");
  }

  async sample(seed: number, n: number): Promise<ShapePayload[]> {
    const res = await this.post<{ shapes: ShapePayload[] }>("/sample", { seed, n });
    return res.shapes;
  }

  async encode(points: number[][]): Promise<string> {
    const res = await this.post<{ bundle_id: string }>("/encode", { points });
    return res.bundle_id;
  }

  mix(targetId: string, referenceId: string, parts: number[]): Promise<ShapePayload> {
    return this.post<ShapePayload>("/mix", {
      target_id: targetId,
      reference_id: referenceId,
      parts,
    });
  }

  resample(bundleId: string, parts: number[], seed: number): Promise<ShapePayload> {
    return this.post<ShapePayload>("/resample", { bundle_id: bundleId, parts, seed });
  }

  async interpolate(idA: string, idB: string, weights: number[]): Promise<ShapePayload[]> {
    const res = await this.post<{ shapes: ShapePayload[] }>("/interpolate", {
      id_a: idA,
      id_b: idB,
      weights,
    });
    return res.shapes;
  }
}
