import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import {
  Joint,
  clampState,
  jointMatrix,
  maxAbsDifference,
  rotationAboutAxis,
} from "../src/kinematics.js";
import { parseScene } from "../src/scene.js";

const FIXTURES = join(__dirname, "fixtures");

function loadFixture(name: string): unknown {
  return JSON.parse(readFileSync(join(FIXTURES, name), "utf-8"));
}

describe("clampState", () => {
  it("keeps in-range values", () => {
    expect(clampState(0.2, 0.5)).toBe(0.2);
  });
  it("clamps below zero", () => {
    expect(clampState(-1, 0.5)).toBe(0);
  });
  it("clamps above range", () => {
    expect(clampState(9, 0.5)).toBe(0.5);
  });
  it("maps NaN to zero", () => {
    expect(clampState(Number.NaN, 0.5)).toBe(0);
  });
});

describe("jointMatrix", () => {
  it("is identity at state 0", () => {
    const joint: Joint = {
      type: "revolute", origin: [1, 2, 3], axis: [0, 0, 1], range: Math.PI,
    };
    const m = jointMatrix(joint, 0);
    const eye = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1];
    expect(maxAbsDifference(m, eye)).toBe(0);
  });

  it("translates prismatic joints along the axis", () => {
    const joint: Joint = {
      type: "prismatic", origin: [0, 0, 0], axis: [0, 1, 0], range: 1,
    };
    const m = jointMatrix(joint, 0.3);
    expect(m[7]).toBeCloseTo(0.3, 12);
    expect(m[3]).toBe(0);
    expect(m[11]).toBe(0);
  });

  it("rotates a half turn about z through the origin point", () => {
    const joint: Joint = {
      type: "revolute", origin: [1, 0, 0], axis: [0, 0, 1], range: Math.PI,
    };
    const m = jointMatrix(joint, Math.PI);
    // point (2,0,0) -> rotate about line x=1: (0,0,0)
    const x = m[0] * 2 + m[1] * 0 + m[2] * 0 + m[3];
    const y = m[4] * 2 + m[5] * 0 + m[6] * 0 + m[7];
    expect(x).toBeCloseTo(0, 12);
    expect(y).toBeCloseTo(0, 12);
  });

  it("rotationAboutAxis preserves the axis", () => {
    const r = rotationAboutAxis([0.6, 0.8, 0], 1.1);
    const ax = [0.6, 0.8, 0];
    const out = [
      r[0][0] * ax[0] + r[0][1] * ax[1] + r[0][2] * ax[2],
      r[1][0] * ax[0] + r[1][1] * ax[1] + r[1][2] * ax[2],
      r[2][0] * ax[0] + r[2][1] * ax[1] + r[2][2] * ax[2],
    ];
    expect(out[0]).toBeCloseTo(ax[0], 12);
    expect(out[1]).toBeCloseTo(ax[1], 12);
    expect(out[2]).toBeCloseTo(ax[2], 12);
  });
});

describe("golden-vector parity with the pipeline", () => {
  it("matches every exported transform within 1e-5", () => {
    const scene = parseScene(loadFixture("scene.json"));
    const golden = loadFixture("golden_transforms.json") as {
      format: string;
      transforms: { object_id: string; state: number; matrix: number[] }[];
    };
    expect(golden.format).toBe("artiscene.golden.v1");
    expect(golden.transforms.length).toBeGreaterThan(0);
    const byId = new Map(scene.objects.map((o) => [o.id, o]));
    for (const rec of golden.transforms) {
      const obj = byId.get(rec.object_id);
      expect(obj, `object ${rec.object_id} in scene.json`).toBeDefined();
      const ours = jointMatrix(obj!.joint, rec.state);
      expect(maxAbsDifference(ours, rec.matrix)).toBeLessThan(1e-5);
    }
  });

  it("covers closed, half-open, and fully-open states per object", () => {
    const scene = parseScene(loadFixture("scene.json"));
    const golden = loadFixture("golden_transforms.json") as {
      transforms: { object_id: string; state: number }[];
    };
    for (const obj of scene.objects) {
      const states = golden.transforms
        .filter((t) => t.object_id === obj.id)
        .map((t) => t.state)
        .sort((a, b) => a - b);
      expect(states.length).toBe(3);
      expect(states[0]).toBe(0);
      expect(states[2]).toBeCloseTo(obj.joint.range, 9);
    }
  });
});
