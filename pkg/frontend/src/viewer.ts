import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";

import type { Primitive, ShapePayload } from "./api";
import { buildPointBuffers, partColor } from "./buffers";
import { tessellate } from "./tessellate";

const POINT_SIZE = 0.02;

/** Orbitable three.js view of one shape: colored points plus optional
 *  translucent primitive surfaces. */
export class Viewer {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  readonly renderer: THREE.WebGLRenderer;
  readonly controls: OrbitControls;
  private points: THREE.Points | null = null;
  private overlay = new THREE.Group();
  private raycaster = new THREE.Raycaster();
  private payload: ShapePayload | null = null;

  constructor(private container: HTMLElement) {
    this.scene.background = new THREE.Color(0x10141a);
    this.camera = new THREE.PerspectiveCamera(
      45,
      container.clientWidth / Math.max(container.clientHeight, 1),
      0.01,
      100,
    );
    this.camera.position.set(1.8, 1.4, 1.8);
    this.renderer = new THREE.WebGLRenderer({ antialias: true });
    this.renderer.setSize(container.clientWidth, container.clientHeight);
    container.appendChild(this.renderer.domElement);
    this.controls = new OrbitControls(this.camera, this.renderer.domElement);
    this.controls.enableDamping = true;
    this.scene.add(this.overlay);
    this.raycaster.params.Points = { threshold: POINT_SIZE * 1.5 };

    window.addEventListener("resize", () => this.resize());
    this.renderer.setAnimationLoop(() => {
      this.controls.update();
      this.renderer.render(this.scene, this.camera);
    });
  }

  private resize(): void {
    const w = this.container.clientWidth;
    const h = Math.max(this.container.clientHeight, 1);
    this.camera.aspect = w / h;
    this.camera.updateProjectionMatrix();
    this.renderer.setSize(w, h);
  }

  showShape(payload: ShapePayload, selection: ReadonlySet<number>): void {
    this.payload = payload;
    const { positions, colors } = buildPointBuffers(payload, selection);
    if (this.points) {
      this.points.geometry.dispose();
      this.scene.remove(this.points);
    }
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
    geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
    const material = new THREE.PointsMaterial({ size: POINT_SIZE, vertexColors: true });
    this.points = new THREE.Points(geometry, material);
    this.scene.add(this.points);
  }

  /** Rebuild the translucent superquadric overlay; pass null to hide it. */
  showPrimitives(primitives: Primitive[] | null): void {
    for (const child of [...this.overlay.children]) {
      this.overlay.remove(child);
      const mesh = child as THREE.Mesh;
      mesh.geometry.dispose();
      (mesh.material as THREE.Material).dispose();
    }
    if (!primitives) return;
    primitives.forEach((prim, m) => {
      const { positions, indices } = tessellate(prim);
      const geometry = new THREE.BufferGeometry();
      geometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
      geometry.setIndex(new THREE.BufferAttribute(indices, 1));
      geometry.computeVertexNormals();
      const [r, g, b] = partColor(m);
      const material = new THREE.MeshBasicMaterial({
        color: new THREE.Color(r, g, b),
        transparent: true,
        opacity: 0.18,
        side: THREE.DoubleSide,
        depthWrite: false,
      });
      this.overlay.add(new THREE.Mesh(geometry, material));
    });
  }

  /** Part index of the rendered point nearest the pointer, or null. */
  pickPart(event: { clientX: number; clientY: number }): number | null {
    if (!this.points || !this.payload) return null;
    const rect = this.renderer.domElement.getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((event.clientX - rect.left) / rect.width) * 2 - 1,
      -((event.clientY - rect.top) / rect.height) * 2 + 1,
    );
    this.raycaster.setFromCamera(ndc, this.camera);
    const hits = this.raycaster.intersectObject(this.points);
    const first = hits.find((h) => h.index !== undefined);
    if (!first) return null;
    return this.payload.part_index[first.index!] ?? null;
  }

  dispose(): void {
    this.renderer.setAnimationLoop(null);
    this.renderer.dispose();
    this.renderer.domElement.remove();
  }
}
