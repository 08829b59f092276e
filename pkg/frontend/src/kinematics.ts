/**
 * Joint kinematics, mirroring the pipeline exactly.
 *
 * A joint moves a part from its closed pose: prismatic parts translate
 * along the axis by s, revolute parts rotate about the axis line through
 * the origin by s radians. Matrices are row-major 16-element arrays so
 * they compare directly against the exported golden vectors (and feed
 * THREE.Matrix4.set, which is also row-major).
 */

export interface Joint {
  type: "prismatic" | "revolute";
  origin: [number, number, number];
  axis: [number, number, number];
  range: number;
}

/** Clamp a slider state into the joint's valid interval [0, range]. */
export function clampState(state: number, range: number): number {
  if (Number.isNaN(state)) return 0;
  return Math.min(Math.max(state, 0), range);
}

/** Rodrigues rotation about a unit axis, as a row-major 3x3. */
export function rotationAboutAxis(
  axis: [number, number, number],
  angle: number,
): number[][] {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  const [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  const t = 1 - c;
  return [
    [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
    [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
    [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
  ];
}

/**
 * Rigid transform of the joint at the given (clamped) state,
 * as a row-major 4x4 flattened to 16 numbers.
 */
export function jointMatrix(joint: Joint, state: number): number[] {
  const s = clampState(state, joint.range);
  if (joint.type === "prismatic") {
    const [ax, ay, az] = joint.axis;
    return [
      1, 0, 0, s * ax,
      0, 1, 0, s * ay,
      0, 0, 1, s * az,
      0, 0, 0, 1,
    ];
  }
  const r = rotationAboutAxis(joint.axis, s);
  const o = joint.origin;
  // translation = origin - R * origin
  const tx = o[0] - (r[0][0] * o[0] + r[0][1] * o[1] + r[0][2] * o[2]);
  const ty = o[1] - (r[1][0] * o[0] + r[1][1] * o[1] + r[1][2] * o[2]);
  const tz = o[2] - (r[2][0] * o[0] + r[2][1] * o[1] + r[2][2] * o[2]);
  return [
    r[0][0], r[0][1], r[0][2], tx,
    r[1][0], r[1][1], r[1][2], ty,
    r[2][0], r[2][1], r[2][2], tz,
    0, 0, 0, 1,
  ];
}

export function maxAbsDifference(a: number[], b: number[]): number {
  let worst = 0;
  for (let i = 0; i < a.length; i++) {
    worst = Math.max(worst, Math.abs(a[i] - b[i]));
  }
  return worst;
}
