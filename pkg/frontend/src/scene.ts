/**
 * Scene bundle parsing, per-object viewer state, and verdict export.
 *
 * The bundle is the pipeline's scene.json plus mesh assets; everything the
 * viewer needs comes from scene.json (never from the URDF, whose frame
 * conventions stay on the Python side).
 */

import { Joint, clampState } from "./kinematics.js";

export type Verdict = "ok" | "wrong-axis" | "wrong-origin" | "wrong-type";

export const VERDICTS: Verdict[] = ["ok", "wrong-axis", "wrong-origin", "wrong-type"];

export interface SceneObject {
  id: string;
  joint: Joint;
  mesh: string;
  innerBoxMesh: string;
}

export interface ViewerScene {
  background: string;
  objects: SceneObject[];
}

export interface ObjectState {
  state: number;             // current articulation state in [0, range]
  verdict: Verdict | null;   // null until the user sets one
  meshError?: string;        // set when the part mesh failed to load
}

export class SceneParseError extends Error {}

function isVec3(v: unknown): v is [number, number, number] {
  return Array.isArray(v) && v.length === 3 && v.every((x) => typeof x === "number");
}

/** Validate and normalize a parsed scene.json document. */
export function parseScene(data: unknown): ViewerScene {
  if (typeof data !== "object" || data === null) {
    throw new SceneParseError("scene.json is not an object");
  }
  const doc = data as Record<string, unknown>;
  if (doc.format !== "artiscene.scene.v1") {
    throw new SceneParseError(`unsupported scene format: ${String(doc.format)}`);
  }
  const units = doc.units as Record<string, unknown> | undefined;
  if (!units || units.length !== "meters" || units.up !== "z") {
    throw new SceneParseError("scene units must be meters with up = z");
  }
  if (typeof doc.background !== "string") {
    throw new SceneParseError("missing background mesh reference");
  }
  if (!Array.isArray(doc.objects)) {
    throw new SceneParseError("missing objects array");
  }
  const objects: SceneObject[] = [];
  for (const raw of doc.objects) {
    const obj = raw as Record<string, unknown>;
    const joint = obj.joint as Record<string, unknown> | undefined;
    if (typeof obj.id !== "string" || !joint) {
      throw new SceneParseError("object missing id or joint");
    }
    if (joint.type !== "prismatic" && joint.type !== "revolute") {
      throw new SceneParseError(`object ${obj.id}: bad joint type`);
    }
    if (!isVec3(joint.origin) || !isVec3(joint.axis)) {
      throw new SceneParseError(`object ${obj.id}: bad joint origin/axis`);
    }
    if (typeof joint.range !== "number" || joint.range <= 0) {
      throw new SceneParseError(`object ${obj.id}: bad joint range`);
    }
    if (typeof obj.mesh !== "string" || typeof obj.inner_box_mesh !== "string") {
      throw new SceneParseError(`object ${obj.id}: missing mesh references`);
    }
    objects.push({
      id: obj.id,
      joint: {
        type: joint.type,
        origin: joint.origin,
        axis: joint.axis,
        range: joint.range,
      },
      mesh: obj.mesh,
      innerBoxMesh: obj.inner_box_mesh,
    });
  }
  return { background: doc.background, objects };
}

/** Fresh closed-state viewer state for every object. */
export function initialStates(scene: ViewerScene): Map<string, ObjectState> {
  const out = new Map<string, ObjectState>();
  for (const obj of scene.objects) {
    out.set(obj.id, { state: 0, verdict: null });
  }
  return out;
}

/** Set a joint state, clamped into [0, range]; verdicts persist. */
export function setJointState(
  scene: ViewerScene,
  states: Map<string, ObjectState>,
  objectId: string,
  state: number,
): number {
  const obj = scene.objects.find((o) => o.id === objectId);
  const entry = states.get(objectId);
  if (!obj || !entry) throw new SceneParseError(`unknown object ${objectId}`);
  entry.state = clampState(state, obj.joint.range);
  return entry.state;
}

export interface VerdictRecord {
  object_id: string;
  verdict: Verdict;
  state: number;
}

/** Verdict file payload consumed by `artiscene eval --verdicts`.

 * Only objects whose verdict was actually set are exported.
 */
export function buildVerdicts(states: Map<string, ObjectState>): {
  verdicts: VerdictRecord[];
} {
  const verdicts: VerdictRecord[] = [];
  for (const id of [...states.keys()].sort()) {
    const s = states.get(id)!;
    if (s.verdict === null) continue;
    verdicts.push({ object_id: id, verdict: s.verdict, state: s.state });
  }
  return { verdicts };
}

export function verdictsJson(states: Map<string, ObjectState>): string {
  return JSON.stringify(buildVerdicts(states), null, 1);
}
