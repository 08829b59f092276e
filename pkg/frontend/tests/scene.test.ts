import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import {
  SceneParseError,
  buildVerdicts,
  initialStates,
  parseScene,
  setJointState,
  verdictsJson,
} from "../src/scene.js";
import { parseMtlTexture, parseObj } from "../src/objLoader.js";

const FIXTURES = join(__dirname, "fixtures");

function fixtureScene() {
  return parseScene(JSON.parse(readFileSync(join(FIXTURES, "scene.json"), "utf-8")));
}

describe("parseScene", () => {
  it("parses the exported fixture", () => {
    const scene = fixtureScene();
    expect(scene.objects.length).toBeGreaterThan(0);
    for (const obj of scene.objects) {
      expect(obj.joint.range).toBeGreaterThan(0);
      expect(obj.mesh).toMatch(/\.obj$/);
    }
  });

  it("rejects wrong format tags", () => {
    expect(() => parseScene({ format: "nope" })).toThrow(SceneParseError);
  });

  it("rejects missing joints", () => {
    const doc = JSON.parse(readFileSync(join(FIXTURES, "scene.json"), "utf-8"));
    delete doc.objects[0].joint;
    expect(() => parseScene(doc)).toThrow(SceneParseError);
  });

  it("rejects bad ranges", () => {
    const doc = JSON.parse(readFileSync(join(FIXTURES, "scene.json"), "utf-8"));
    doc.objects[0].joint.range = 0;
    expect(() => parseScene(doc)).toThrow(SceneParseError);
  });
});

describe("joint state", () => {
  it("clamps into [0, range] and persists verdicts", () => {
    const scene = fixtureScene();
    const states = initialStates(scene);
    const id = scene.objects[0].id;
    const range = scene.objects[0].joint.range;
    states.get(id)!.verdict = "wrong-axis";
    expect(setJointState(scene, states, id, -0.5)).toBe(0);
    expect(setJointState(scene, states, id, range * 2)).toBe(range);
    expect(setJointState(scene, states, id, range / 2)).toBeCloseTo(range / 2, 12);
    expect(states.get(id)!.verdict).toBe("wrong-axis");
  });

  it("rejects unknown object ids", () => {
    const scene = fixtureScene();
    const states = initialStates(scene);
    expect(() => setJointState(scene, states, "nope", 0.1)).toThrow(SceneParseError);
  });
});

describe("verdict export", () => {
  it("is empty when nothing was set", () => {
    const scene = fixtureScene();
    const states = initialStates(scene);
    expect(buildVerdicts(states).verdicts).toEqual([]);
  });

  it("exports one record per flagged object, sorted by id", () => {
    const scene = fixtureScene();
    const states = initialStates(scene);
    const [a, b] = [scene.objects[1].id, scene.objects[0].id];
    states.get(a)!.verdict = "wrong-origin";
    states.get(b)!.verdict = "wrong-axis";
    states.get(b)!.state = 0.1;
    const out = buildVerdicts(states);
    expect(out.verdicts.length).toBe(2);
    expect(out.verdicts.map((v) => v.object_id)).toEqual([b, a].sort());
  });

  it("matches the committed CLI round-trip fixture byte for byte", () => {
    const scene = fixtureScene();
    const states = initialStates(scene);
    const first = scene.objects[0].id;
    states.get(first)!.verdict = "wrong-axis";
    states.get(first)!.state = 0.1;
    const want = readFileSync(join(FIXTURES, "verdicts.json"), "utf-8");
    expect(verdictsJson(states)).toBe(want.trimEnd());
  });
});

describe("objLoader", () => {
  it("parses textured exports (v + vt + f v/vt)", () => {
    const text = [
      "mtllib part.mtl",
      "v 0 0 0", "v 1 0 0", "v 0 1 0",
      "vt 0 0", "vt 1 0", "vt 0 1",
      "usemtl part",
      "f 1/1 2/2 3/3",
    ].join("\n");
    const parsed = parseObj(text);
    expect(parsed.positions.length).toBe(9);
    expect(parsed.uvs?.length).toBe(6);
    expect(parsed.mtlFile).toBe("part.mtl");
  });

  it("parses vertex-colored exports", () => {
    const text = [
      "v 0 0 0 0.5 0.25 0.125", "v 1 0 0 0.5 0.25 0.125", "v 0 1 0 0.5 0.25 0.125",
      "f 1 2 3",
    ].join("\n");
    const parsed = parseObj(text);
    expect(parsed.colors).not.toBeNull();
    expect(parsed.colors![0]).toBeCloseTo(0.5, 6);
  });

  it("fans polygons into triangles", () => {
    const text = ["v 0 0 0", "v 1 0 0", "v 1 1 0", "v 0 1 0", "f 1 2 3 4"].join("\n");
    expect(parseObj(text).positions.length).toBe(18);
  });

  it("reads map_Kd from MTL", () => {
    expect(parseMtlTexture("newmtl m\nKd 1 1 1\nmap_Kd tex.png\n")).toBe("tex.png");
    expect(parseMtlTexture("newmtl m\nKd 1 1 1\n")).toBeNull();
  });
});
