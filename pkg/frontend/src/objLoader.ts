/**
 * Minimal OBJ/MTL loader for pipeline exports.
 *
 * Handles the two shapes the exporter writes: textured meshes
 * (v + vt + f v/vt + mtllib with a single map_Kd) and vertex-colored
 * meshes (v x y z r g b + f v). Triangles only after fanning.
 */

export interface ParsedObj {
  positions: Float32Array;        // 3 per corner, de-indexed
  uvs: Float32Array | null;       // 2 per corner
  colors: Float32Array | null;    // 3 per corner
  textureFile: string | null;     // from the sibling MTL, relative to the OBJ
  mtlFile: string | null;
}

export function parseObj(text: string): ParsedObj {
  const verts: number[][] = [];
  const colors: number[][] = [];
  const uvs: number[][] = [];
  const tri: { v: number; t: number | null }[][] = [];
  let mtlFile: string | null = null;

  for (const line of text.split("\n")) {
    const parts = line.trim().split(/\s+/);
    if (parts[0] === "v") {
      verts.push([+parts[1], +parts[2], +parts[3]]);
      if (parts.length >= 7) colors.push([+parts[4], +parts[5], +parts[6]]);
    } else if (parts[0] === "vt") {
      uvs.push([+parts[1], +parts[2]]);
    } else if (parts[0] === "mtllib") {
      mtlFile = parts[1];
    } else if (parts[0] === "f") {
      const corners = parts.slice(1).map((p) => {
        const [v, t] = p.split("/");
        return { v: +v - 1, t: t ? +t - 1 : null };
      });
      for (let k = 1; k < corners.length - 1; k++) {
        tri.push([corners[0], corners[k], corners[k + 1]]);
      }
    }
  }

  const positions = new Float32Array(tri.length * 9);
  const outUvs = uvs.length ? new Float32Array(tri.length * 6) : null;
  const outColors = colors.length === verts.length && colors.length
    ? new Float32Array(tri.length * 9)
    : null;
  let p = 0;
  let u = 0;
  for (const corners of tri) {
    for (const c of corners) {
      const vert = verts[c.v];
      positions[p] = vert[0];
      positions[p + 1] = vert[1];
      positions[p + 2] = vert[2];
      if (outColors) {
        const col = colors[c.v];
        outColors[p] = col[0];
        outColors[p + 1] = col[1];
        outColors[p + 2] = col[2];
      }
      p += 3;
      if (outUvs) {
        const tc = c.t !== null ? uvs[c.t] : [0, 0];
        outUvs[u] = tc[0];
        outUvs[u + 1] = tc[1];
        u += 2;
      }
    }
  }
  return { positions, uvs: outUvs, colors: outColors, textureFile: null, mtlFile };
}

/** Extract the diffuse texture file from MTL text, if any. */
export function parseMtlTexture(text: string): string | null {
  for (const line of text.split("\n")) {
    const parts = line.trim().split(/\s+/);
    if (parts[0] === "map_Kd" && parts[1]) return parts[1];
  }
  return null;
}

export async function loadObj(url: string): Promise<ParsedObj> {
  const resp = await fetch(url);
  if (!resp.ok) throw new Error(`${url}: HTTP ${resp.status}`);
  const parsed = parseObj(await resp.text());
  if (parsed.mtlFile) {
    const base = url.slice(0, url.lastIndexOf("/") + 1);
    try {
      const mtlResp = await fetch(base + parsed.mtlFile);
      if (mtlResp.ok) {
        parsed.textureFile = parseMtlTexture(await mtlResp.text());
      }
    } catch {
      // missing MTL is not fatal; mesh renders untextured
    }
  }
  return parsed;
}
