/**
 * Articulation inspector: load an exported bundle, drag per-joint sliders,
 * flag bad joints, download the verdicts.
 *
 * Pure static app: everything comes from the bundle directory (default
 * ./bundle, override with ?bundle=path). No backend.
 */

import * as THREE from "three";

import { jointMatrix } from "./kinematics.js";
import { loadObj } from "./objLoader.js";
import {
  ObjectState,
  SceneObject,
  VERDICTS,
  Verdict,
  ViewerScene,
  initialStates,
  parseScene,
  setJointState,
  verdictsJson,
} from "./scene.js";

const renderer = new THREE.WebGLRenderer({ antialias: true });
const scene3 = new THREE.Scene();
scene3.background = new THREE.Color(0x20242a);
const camera = new THREE.PerspectiveCamera(55, 1, 0.01, 100);
const partNodes = new Map<string, THREE.Object3D>();

let viewerScene: ViewerScene | null = null;
let states: Map<string, ObjectState> = new Map();

function bundleUrl(): string {
  const q = new URLSearchParams(window.location.search);
  return (q.get("bundle") ?? "public/bundle").replace(/\/$/, "");
}

function materialFor(parsed: Awaited<ReturnType<typeof loadObj>>,
                     base: string): THREE.Material {
  if (parsed.textureFile) {
    const tex = new THREE.TextureLoader().load(`${base}/${parsed.textureFile}`);
    tex.colorSpace = THREE.SRGBColorSpace;
    return new THREE.MeshLambertMaterial({ map: tex, side: THREE.DoubleSide });
  }
  if (parsed.colors) {
    return new THREE.MeshLambertMaterial({ vertexColors: true, side: THREE.DoubleSide });
  }
  return new THREE.MeshLambertMaterial({ color: 0xb8b2a8, side: THREE.DoubleSide });
}

async function addMesh(url: string): Promise<THREE.Object3D> {
  const parsed = await loadObj(url);
  const geom = new THREE.BufferGeometry();
  geom.setAttribute("position", new THREE.BufferAttribute(parsed.positions, 3));
  if (parsed.uvs) geom.setAttribute("uv", new THREE.BufferAttribute(parsed.uvs, 2));
  if (parsed.colors) {
    geom.setAttribute("color", new THREE.BufferAttribute(parsed.colors, 3));
  }
  geom.computeVertexNormals();
  const base = url.slice(0, url.lastIndexOf("/"));
  const mesh = new THREE.Mesh(geom, materialFor(parsed, base));
  mesh.matrixAutoUpdate = false;
  scene3.add(mesh);
  return mesh;
}

function frameCamera(): void {
  const box = new THREE.Box3().setFromObject(scene3);
  if (box.isEmpty()) return;
  const center = box.getCenter(new THREE.Vector3());
  const size = box.getSize(new THREE.Vector3()).length();
  // scene is z-up; look from the front-left, slightly above
  camera.up.set(0, 0, 1);
  camera.position.set(center.x - size * 0.45, center.y - size * 0.6,
                      center.z + size * 0.4);
  camera.lookAt(center);
  camera.far = size * 10 + 10;
  camera.updateProjectionMatrix();
}

function applyState(objectId: string): void {
  if (!viewerScene) return;
  const obj = viewerScene.objects.find((o) => o.id === objectId);
  const node = partNodes.get(objectId);
  const entry = states.get(objectId);
  if (!obj || !node || !entry) return;
  const m = jointMatrix(obj.joint, entry.state);
  node.matrix.set(
    m[0], m[1], m[2], m[3],
    m[4], m[5], m[6], m[7],
    m[8], m[9], m[10], m[11],
    m[12], m[13], m[14], m[15],
  );
  node.matrixWorldNeedsUpdate = true;
}

function statusBadge(text: string, kind: "err" | "ok"): HTMLElement {
  const span = document.createElement("span");
  span.className = `badge ${kind}`;
  span.textContent = text;
  return span;
}

function buildControls(panel: HTMLElement): void {
  if (!viewerScene) return;
  panel.innerHTML = "";
  const title = document.createElement("h2");
  title.textContent = `objects (${viewerScene.objects.length})`;
  panel.appendChild(title);
  for (const obj of viewerScene.objects) {
    panel.appendChild(objectRow(obj));
  }
  const download = document.createElement("button");
  download.textContent = "download verdicts";
  download.onclick = () => {
    const blob = new Blob([verdictsJson(states)], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "verdicts.json";
    a.click();
    URL.revokeObjectURL(a.href);
  };
  panel.appendChild(download);
}

function objectRow(obj: SceneObject): HTMLElement {
  const row = document.createElement("div");
  row.className = "row";
  const label = document.createElement("div");
  const unit = obj.joint.type === "prismatic" ? "m" : "rad";
  label.textContent = `${obj.id} (${obj.joint.type})`;
  row.appendChild(label);
  const entry = states.get(obj.id)!;
  if (entry.meshError) {
    row.appendChild(statusBadge(`mesh error: ${entry.meshError}`, "err"));
  }

  const slider = document.createElement("input");
  slider.type = "range";
  slider.min = "0";
  slider.max = String(obj.joint.range);
  slider.step = String(obj.joint.range / 200);
  slider.value = "0";
  const readout = document.createElement("span");
  readout.textContent = `0.000 ${unit}`;
  slider.oninput = () => {
    const applied = setJointState(viewerScene!, states, obj.id, Number(slider.value));
    slider.value = String(applied);
    readout.textContent = `${applied.toFixed(3)} ${unit}`;
    applyState(obj.id);
  };
  row.appendChild(slider);
  row.appendChild(readout);

  const select = document.createElement("select");
  const unset = document.createElement("option");
  unset.value = "";
  unset.textContent = "verdict: unset";
  select.appendChild(unset);
  for (const v of VERDICTS) {
    const opt = document.createElement("option");
    opt.value = v;
    opt.textContent = v;
    select.appendChild(opt);
  }
  select.onchange = () => {
    entry.verdict = select.value === "" ? null : (select.value as Verdict);
  };
  row.appendChild(select);
  return row;
}

async function boot(): Promise<void> {
  const viewport = document.getElementById("viewport")!;
  const panel = document.getElementById("panel")!;
  renderer.setSize(viewport.clientWidth, viewport.clientHeight);
  viewport.appendChild(renderer.domElement);
  scene3.add(new THREE.AmbientLight(0xffffff, 0.75));
  const sun = new THREE.DirectionalLight(0xffffff, 1.6);
  sun.position.set(1, -2, 3);
  scene3.add(sun);

  const base = bundleUrl();
  let raw: unknown;
  try {
    const resp = await fetch(`${base}/scene.json`);
    if (!resp.ok) throw new Error(`HTTP ${resp.status}`);
    raw = await resp.json();
    viewerScene = parseScene(raw);
  } catch (err) {
    panel.innerHTML = `<p class="badge err">failed to load ${base}/scene.json: ${String(err)}</p>`;
    return;
  }
  states = initialStates(viewerScene);

  try {
    await addMesh(`${base}/${viewerScene.background}`);
  } catch (err) {
    panel.appendChild(statusBadge(`background: ${String(err)}`, "err"));
  }
  for (const obj of viewerScene.objects) {
    try {
      await addMesh(`${base}/${obj.innerBoxMesh}`);
    } catch {
      // a missing cavity is cosmetic
    }
    try {
      const node = await addMesh(`${base}/${obj.mesh}`);
      partNodes.set(obj.id, node);
      applyState(obj.id);
    } catch (err) {
      states.get(obj.id)!.meshError = String(err);
    }
  }
  frameCamera();
  buildControls(panel);

  const resize = () => {
    renderer.setSize(viewport.clientWidth, viewport.clientHeight);
    camera.aspect = viewport.clientWidth / viewport.clientHeight;
    camera.updateProjectionMatrix();
  };
  window.addEventListener("resize", resize);
  resize();

  // rendering decoupled from slider events: redraw from current state
  const tick = () => {
    renderer.render(scene3, camera);
    requestAnimationFrame(tick);
  };
  tick();
}

boot();
