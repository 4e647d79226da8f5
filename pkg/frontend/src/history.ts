/**
 * Linear undo/redo over serialized snapshots.
 *
 * States are stored as JSON strings the moment they are pushed, so undo
 * hands back exactly the bytes that were recorded, no matter what the
 * caller did to its live object in the meantime.
 */
export class History<T> {
  private past: string[] = [];
  private future: string[] = [];

  push(state: T): void {
    this.past.push(JSON.stringify(state));
    this.future.length = 0;
  }

  canUndo(): boolean {
    return this.past.length > 1;
  }

  canRedo(): boolean {
    return this.future.length > 0;
  }

  undo(): T | null {
    if (!this.canUndo()) return null;
    this.future.push(this.past.pop()!);
    return JSON.parse(this.currentRaw()!) as T;
  }

  redo(): T | null {
    const next = this.future.pop();
    if (next === undefined) return null;
    this.past.push(next);
    return JSON.parse(next) as T;
  }

  current(): T | null {
    const raw = this.currentRaw();
    return raw === null ? null : (JSON.parse(raw) as T);
  }

  /** Serialized current state; string equality here is byte identity. */
  currentRaw(): string | null {
    return this.past.length ? this.past[this.past.length - 1]! : null;
  }

  get depth(): number {
    return this.past.length;
  }

  clear(): void {
    this.past.length = 0;
    this.future.length = 0;
  }
}
