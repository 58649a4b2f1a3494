/**
 * Orbit camera math, matching the service's conventions exactly:
 * camera-to-world matrices are row-major, the camera looks along +z with
 * x right and y down, elevation is measured against the world z axis and
 * the up reference is world +y (the same frame the datasets use).
 */

export interface OrbitParams {
  azimuth: number;    // radians, wrapped into [0, 2*pi)
  elevation: number;  // radians, clamped inside (-pi/2, pi/2)
  radius: number;     // > 0
  target: [number, number, number];
}

export interface IntrinsicsParams {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export const TAU = Math.PI * 2;
const ELEV_LIMIT = Math.PI / 2 - 1e-4;

export function wrapAzimuth(a: number): number {
  const w = a % TAU;
  return w < 0 ? w + TAU : w;
}

export function clampElevation(e: number): number {
  return Math.min(ELEV_LIMIT, Math.max(-ELEV_LIMIT, e));
}

export function normalizeOrbit(p: OrbitParams): OrbitParams {
  return {
    azimuth: wrapAzimuth(p.azimuth),
    elevation: clampElevation(p.elevation),
    radius: Math.max(p.radius, 1e-6),
    target: [...p.target] as [number, number, number],
  };
}

type Vec3 = [number, number, number];

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function orbitPosition(p: OrbitParams): Vec3 {
  const ce = Math.cos(p.elevation);
  return [
    p.target[0] + p.radius * ce * Math.cos(p.azimuth),
    p.target[1] + p.radius * ce * Math.sin(p.azimuth),
    p.target[2] + p.radius * Math.sin(p.elevation),
  ];
}

/** Row-major 4x4 camera-to-world for the orbit state (y-down look-at). */
export function orbitToMatrix(p: OrbitParams): number[] {
  const q = normalizeOrbit(p);
  const pos = orbitPosition(q);
  let z = sub(q.target, pos);
  z = scale(z, 1 / norm(z));
  let up: Vec3 = [0, 1, 0];
  let x = cross(z, up);
  if (norm(x) < 1e-8) {
    x = cross(z, [1, 0, 0]);
  }
  x = scale(x, 1 / norm(x));
  const y = cross(z, x);
  return [
    x[0], y[0], z[0], pos[0],
    x[1], y[1], z[1], pos[1],
    x[2], y[2], z[2], pos[2],
    0, 0, 0, 1,
  ];
}

/** Recover orbit parameters from a row-major camera-to-world matrix. */
export function matrixToOrbit(m: number[], target: Vec3): OrbitParams {
  const pos: Vec3 = [m[3], m[7], m[11]];
  const off = sub(pos, target);
  const radius = norm(off);
  const elevation = Math.asin(off[2] / radius);
  const azimuth = wrapAzimuth(Math.atan2(off[1], off[0]));
  return { azimuth, elevation, radius, target: [...target] as Vec3 };
}

/** Pan: displace the target along the camera's x/y axes. */
export function panTarget(p: OrbitParams, dxPixels: number, dyPixels: number,
                          pixelsToWorld: number): OrbitParams {
  const m = orbitToMatrix(p);
  const x: Vec3 = [m[0], m[4], m[8]];
  const y: Vec3 = [m[1], m[5], m[9]];
  const t: Vec3 = [
    p.target[0] - (x[0] * dxPixels + y[0] * dyPixels) * pixelsToWorld,
    p.target[1] - (x[1] * dxPixels + y[1] * dyPixels) * pixelsToWorld,
    p.target[2] - (x[2] * dxPixels + y[2] * dyPixels) * pixelsToWorld,
  ];
  return { ...p, target: t };
}

/** Serialize the pose for the render endpoint (deterministic formatting, so
 * identical orbit states produce identical URLs and therefore identical
 * cached frames). */
export function poseQuery(p: OrbitParams, intr: IntrinsicsParams): string {
  const m = orbitToMatrix(p);
  const pose = m.map((v) => v.toPrecision(17)).join(",");
  return `pose=${pose}&fx=${intr.fx}&fy=${intr.fy}&cx=${intr.cx}&cy=${intr.cy}` +
         `&w=${intr.width}&h=${intr.height}`;
}
