import type { Meta, ShapePayload } from "./api";

export interface Slot {
  payload: ShapePayload;
  bundleId: string;
}

function toSlot(payload: ShapePayload): Slot {
  if (!payload.bundle_id) {
    throw new Error("payload carries no bundle id; cannot use it for editing");
  }
  return { payload, bundleId: payload.bundle_id };
}

/** What the session has loaded, what is selected, and whether a request is out. */
export class SessionState {
  meta: Meta | null = null;
  target: Slot | null = null;
  reference: Slot | null = null;
  readonly selection = new Set<number>();
  busy = false;

  setMeta(meta: Meta): void {
    this.meta = meta;
    this.selection.clear();
  }

  setTarget(payload: ShapePayload): void {
    this.target = toSlot(payload);
  }

  setReference(payload: ShapePayload): void {
    this.reference = toSlot(payload);
  }

  toggleSelection(part: number): void {
    const m = this.meta?.M ?? 0;
    if (!Number.isInteger(part) || part < 0 || part >= m) {
      throw new RangeError(`part ${part} outside [0, ${m})`);
    }
    if (!this.selection.delete(part)) this.selection.add(part);
  }

  clearSelection(): void {
    this.selection.clear();
  }

  selectedParts(): number[] {
    return [...this.selection].sort((a, b) => a - b);
  }

  /** Marks a request in flight; throws if one already is (single-flight UI). */
  beginRequest(): void {
    if (this.busy) throw new Error("another request is already in flight");
    this.busy = true;
  }

  endRequest(): void {
    this.busy = false;
  }
}
