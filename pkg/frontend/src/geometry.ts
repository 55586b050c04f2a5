// Pure geometry builders for the 3D view, kept free of WebGL so they are
// unit-testable: the scene layer only uploads the arrays produced here.

import type { ContactInfo } from './protocol';

export type Vec3 = [number, number, number];

/** Flat xyz array of the beam centerline vertices (one per node). */
export function beamPolyline(nodePositions: Vec3[]): Float32Array {
  const out = new Float32Array(nodePositions.length * 3);
  nodePositions.forEach((p, i) => out.set(p, i * 3));
  return out;
}

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

/**
 * Tube surface around the node polyline (parallel-transported ring frames):
 * the visual body of the robot. Returns positions plus triangle indices.
 */
export function beamTube(
  nodePositions: Vec3[],
  radius: number,
  segments = 10,
): { positions: Float32Array; indices: Uint32Array } {
  const n = nodePositions.length;
  if (n < 2) return { positions: new Float32Array(0), indices: new Uint32Array(0) };

  const tangents: Vec3[] = [];
  for (let i = 0; i < n; i++) {
    const ahead = nodePositions[Math.min(i + 1, n - 1)];
    const behind = nodePositions[Math.max(i - 1, 0)];
    const t = sub(ahead, behind);
    const len = norm(t) || 1;
    tangents.push(scale(t, 1 / len));
  }

  let ref: Vec3 = Math.abs(tangents[0][2]) < 0.9 ? [0, 0, 1] : [0, 1, 0];
  let normal = cross(tangents[0], ref);
  normal = scale(normal, 1 / (norm(normal) || 1));

  const positions = new Float32Array(n * segments * 3);
  for (let i = 0; i < n; i++) {
    if (i > 0) {
      // transport the ring normal along the tangent
      const t = tangents[i];
      const d = normal[0] * t[0] + normal[1] * t[1] + normal[2] * t[2];
      let projected: Vec3 = [normal[0] - d * t[0], normal[1] - d * t[1], normal[2] - d * t[2]];
      const len = norm(projected);
      if (len < 1e-12) projected = cross(t, ref);
      normal = scale(projected, 1 / (norm(projected) || 1));
    }
    const bin = cross(tangents[i], normal);
    for (let j = 0; j < segments; j++) {
      const phi = (2 * Math.PI * j) / segments;
      const c = Math.cos(phi) * radius;
      const s = Math.sin(phi) * radius;
      const k = (i * segments + j) * 3;
      positions[k] = nodePositions[i][0] + c * normal[0] + s * bin[0];
      positions[k + 1] = nodePositions[i][1] + c * normal[1] + s * bin[1];
      positions[k + 2] = nodePositions[i][2] + c * normal[2] + s * bin[2];
    }
  }

  const indices = new Uint32Array((n - 1) * segments * 6);
  let w = 0;
  for (let i = 0; i < n - 1; i++) {
    for (let j = 0; j < segments; j++) {
      const j2 = (j + 1) % segments;
      const a0 = i * segments + j;
      const a1 = i * segments + j2;
      const b0 = (i + 1) * segments + j;
      const b1 = (i + 1) * segments + j2;
      indices.set([a0, b0, a1, a1, b0, b1], w);
      w += 6;
    }
  }
  return { positions, indices };
}

/**
 * Contact force glyph segments: one arrow per contact from the contact point
 * along the force direction on the robot (-normal), length force x scale.
 * Returned as line-segment pairs [start, end, ...].
 */
export function contactGlyphSegments(
  contacts: ContactInfo[],
  metersPerNewton: number,
): Float32Array {
  const out = new Float32Array(contacts.length * 6);
  contacts.forEach((c, i) => {
    const len = c.force_N * metersPerNewton;
    const k = i * 6;
    out.set(c.position, k);
    out[k + 3] = c.position[0] - c.normal[0] * len;
    out[k + 4] = c.position[1] - c.normal[1] * len;
    out[k + 5] = c.position[2] - c.normal[2] * len;
  });
  return out;
}

/** Deduplicated wireframe edge segments of a triangle mesh. */
export function meshWireframeSegments(
  vertices: Vec3[],
  triangles: [number, number, number][],
): Float32Array {
  const seen = new Set<string>();
  const segments: number[] = [];
  for (const tri of triangles) {
    const edges: [number, number][] = [
      [tri[0], tri[1]],
      [tri[1], tri[2]],
      [tri[2], tri[0]],
    ];
    for (const [a, b] of edges) {
      const key = a < b ? `${a}:${b}` : `${b}:${a}`;
      if (seen.has(key)) continue;
      seen.add(key);
      segments.push(...vertices[a], ...vertices[b]);
    }
  }
  return new Float32Array(segments);
}

/** Millimeter convenience readout for an SI meters quantity. */
export function formatMeters(meters: number): string {
  return `${meters.toFixed(4)} m (${(meters * 1000).toFixed(1)} mm)`;
}
