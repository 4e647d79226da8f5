import { ApiClient, ApiError, type Meta, type ShapePayload } from "./api";
import { partColor } from "./buffers";
import { History } from "./history";
import { SessionState } from "./state";
import { Viewer } from "./viewer";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function css([r, g, b]: [number, number, number]): string {
  return `rgb(${Math.round(r * 255)}, ${Math.round(g * 255)}, ${Math.round(b * 255)})`;
}

class EditorApp {
  private api: ApiClient;
  private state = new SessionState();
  private history = new History<ShapePayload>();
  private viewer: Viewer;
  private showOverlay = false;

  private banner = el<HTMLDivElement>("banner");
  private legend = el<HTMLDivElement>("legend");
  private status = el<HTMLSpanElement>("status");
  private buttons: HTMLButtonElement[];

  constructor() {
    this.api = new ApiClient(
      (el<HTMLInputElement>("server-url").value || window.location.origin).replace(/\/$/, ""),
    );
    this.viewer = new Viewer(el<HTMLDivElement>("canvas-host"));
    this.buttons = Array.from(document.querySelectorAll("button"));

    el<HTMLButtonElement>("btn-connect").onclick = () => this.run(() => this.connect());
    el<HTMLButtonElement>("btn-sample").onclick = () => this.run(() => this.sampleTarget());
    el<HTMLButtonElement>("btn-reference").onclick = () => this.run(() => this.sampleReference());
    el<HTMLButtonElement>("btn-mix").onclick = () => this.run(() => this.mixSelected());
    el<HTMLButtonElement>("btn-resample").onclick = () => this.run(() => this.resampleSelected());
    el<HTMLButtonElement>("btn-interp").onclick = () => this.run(() => this.interpolate());
    el<HTMLButtonElement>("btn-undo").onclick = () => this.undo();
    el<HTMLInputElement>("chk-overlay").onchange = (e) => {
      this.showOverlay = (e.target as HTMLInputElement).checked;
      this.refreshOverlay();
    };
    el<HTMLInputElement>("weight").oninput = (e) => {
      const w = Number.parseFloat((e.target as HTMLInputElement).value);
      el<HTMLSpanElement>("weight-value").textContent = w.toFixed(2);
    };
    this.viewer.renderer.domElement.addEventListener("click", (e) => {
      const part = this.viewer.pickPart(e);
      if (part !== null) this.togglePart(part);
    });
    this.updateControls();
  }

  /** Single-flight wrapper: disables every action while a request is out. */
  private async run(action: () => Promise<void>): Promise<void> {
    if (this.state.busy) return;
    this.state.beginRequest();
    this.banner.hidden = true;
    this.updateControls();
    try {
      await action();
    } catch (err) {
      this.banner.hidden = false;
      this.banner.textContent =
        err instanceof ApiError ? `${err.code}: ${err.detail}` : String(err);
    } finally {
      this.state.endRequest();
      this.updateControls();
    }
  }

  private updateControls(): void {
    const busy = this.state.busy;
    for (const b of this.buttons) b.disabled = busy;
    if (!busy) {
      el<HTMLButtonElement>("btn-undo").disabled = !this.history.canUndo();
      const noTarget = this.state.target === null;
      el<HTMLButtonElement>("btn-resample").disabled = noTarget;
      el<HTMLButtonElement>("btn-mix").disabled = noTarget || this.state.reference === null;
      el<HTMLButtonElement>("btn-interp").disabled = noTarget || this.state.reference === null;
    }
    this.status.textContent = busy ? "working..." : "idle";
  }

  private async connect(): Promise<void> {
    const meta = await this.api.meta();
    this.state.setMeta(meta);
    this.history.clear();
    this.renderLegend(meta);
    this.status.textContent = `connected: ${meta.category || "model"} (M=${meta.M})`;
  }

  private seed(id: string): number {
    return Number.parseInt(el<HTMLInputElement>(id).value, 10) || 0;
  }

  private async sampleTarget(): Promise<void> {
    const [shape] = await this.api.sample(this.seed("seed-sample"), 1);
    this.adoptTarget(shape!);
  }

  private async sampleReference(): Promise<void> {
    const [shape] = await this.api.sample(this.seed("seed-reference"), 1);
    this.state.setReference(shape!);
  }

  private async mixSelected(): Promise<void> {
    const shape = await this.api.mix(
      this.state.target!.bundleId,
      this.state.reference!.bundleId,
      this.state.selectedParts(),
    );
    this.adoptTarget(shape);
  }

  private async resampleSelected(): Promise<void> {
    const shape = await this.api.resample(
      this.state.target!.bundleId,
      this.state.selectedParts(),
      this.seed("seed-resample"),
    );
    this.adoptTarget(shape);
  }

  private async interpolate(): Promise<void> {
    const w = Number.parseFloat(el<HTMLInputElement>("weight").value);
    const [shape] = await this.api.interpolate(
      this.state.target!.bundleId,
      this.state.reference!.bundleId,
      [w],
    );
    this.adoptTarget(shape!);
  }

  private adoptTarget(shape: ShapePayload): void {
    this.state.setTarget(shape);
    this.history.push(shape);
    this.redraw();
  }

  private undo(): void {
    const prior = this.history.undo();
    if (prior === null) return;
    this.state.setTarget(prior);
    this.redraw();
    this.updateControls();
  }

  private togglePart(part: number): void {
    this.state.toggleSelection(part);
    this.renderLegend(this.state.meta!);
    this.redraw();
  }

  private redraw(): void {
    const target = this.state.target;
    if (!target) return;
    this.viewer.showShape(target.payload, this.state.selection);
    this.refreshOverlay();
  }

  private refreshOverlay(): void {
    const prims = this.showOverlay ? (this.state.target?.payload.primitives ?? null) : null;
    this.viewer.showPrimitives(prims);
  }

  private renderLegend(meta: Meta): void {
    this.legend.replaceChildren();
    for (let m = 0; m < meta.M; m++) {
      const swatch = document.createElement("button");
      swatch.className = "swatch" + (this.state.selection.has(m) ? " selected" : "");
      swatch.style.background = css(partColor(m));
      swatch.textContent = `part ${m}`;
      swatch.onclick = () => this.togglePart(m);
      this.legend.appendChild(swatch);
      this.buttons = Array.from(document.querySelectorAll("button"));
    }
  }
}

new EditorApp();
