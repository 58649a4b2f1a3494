/** Interactive viewer state: pointer gestures -> orbit params -> render
 * requests (latest wins), with an fps/server-time HUD. */

import { OrbitParams, IntrinsicsParams, TAU, normalizeOrbit, poseQuery, panTarget } from "./orbit.js";
import { ServiceClient, RenderGate, RenderResult, SceneMeta } from "./client.js";

export interface HudState {
  fps: number;
  serverMs: number;
  sessionId: string;
  status: string;
}

export type Gesture = "orbit" | "pan";

export const DRAG_SENSITIVITY = 0.01;    // radians per pixel
export const WHEEL_SENSITIVITY = 0.0012; // radius scale per wheel unit

// angles are held as integer grid steps so drag arithmetic is exact: a full
// revolution is exactly AZIMUTH_STEPS steps and wraps to the identical state
// (and therefore, through the pure render service, the identical frame)
export const AZIMUTH_STEPS = 1_296_000;          // 0.001 degrees per step
const ELEV_LIMIT_STEPS = Math.floor((Math.PI / 2 - 1e-4) / TAU * AZIMUTH_STEPS);

export function radiansToSteps(r: number): number {
  return Math.round((r / TAU) * AZIMUTH_STEPS);
}

export function stepsToRadians(s: number): number {
  return (s / AZIMUTH_STEPS) * TAU;
}

export class Viewer {
  private azimuthSteps: number;
  private elevationSteps: number;
  radius: number;
  target: [number, number, number];
  intr: IntrinsicsParams;
  hud: HudState = { fps: 0, serverMs: 0, sessionId: "", status: "no scene" };
  private gate: RenderGate;
  private lastFrameAt = 0;
  lastPoseKey = "";
  paintedKey = "";

  constructor(
    private readonly client: ServiceClient,
    private readonly onFrame: (frame: RenderResult) => void,
    private readonly onHud: (hud: HudState) => void = () => {},
    initial?: Partial<OrbitParams>,
    intr?: IntrinsicsParams,
  ) {
    const start = normalizeOrbit({
      azimuth: Math.PI / 4, elevation: 0.5, radius: 10, target: [0, 0, 0],
      ...initial,
    } as OrbitParams);
    this.azimuthSteps = radiansToSteps(start.azimuth) % AZIMUTH_STEPS;
    this.elevationSteps = radiansToSteps(start.elevation);
    this.radius = start.radius;
    this.target = start.target;
    this.intr = intr ?? { fx: 57.6, fy: 57.6, cx: 24, cy: 24, width: 96, height: 96 };
    this.gate = new RenderGate(
      (key) => this.client.render(this.hud.sessionId, key),
      (frame) => this.handleFrame(frame),
      (err) => this.setStatus(String(err.message ?? err)),
    );
  }

  get orbit(): OrbitParams {
    return {
      azimuth: stepsToRadians(this.azimuthSteps),
      elevation: stepsToRadians(this.elevationSteps),
      radius: this.radius,
      target: [...this.target] as [number, number, number],
    };
  }

  get busy(): boolean {
    return this.gate.busy;
  }

  setStatus(status: string): void {
    this.hud.status = status;
    this.onHud({ ...this.hud });
  }

  attachSession(meta: SceneMeta): void {
    this.hud.sessionId = meta.id;
    const [w, h] = meta.input_size;
    // render at a multiple of the training resolution, capped by the server
    const scale = Math.max(1, Math.floor(96 / w));
    this.intr = { fx: 1.2 * w * scale, fy: 1.2 * w * scale,
                  cx: (w * scale) / 2, cy: (h * scale) / 2,
                  width: w * scale, height: h * scale };
    this.setStatus(`session ${meta.id.slice(0, 8)} (${meta.views} views)`);
    this.requestRender();
  }

  private handleFrame(frame: RenderResult): void {
    this.paintedKey = frame.poseKey;
    const now = performance.now();
    if (this.lastFrameAt > 0) {
      this.hud.fps = 1000 / (now - this.lastFrameAt);
    }
    this.lastFrameAt = now;
    this.hud.serverMs = frame.serverSeconds * 1000;
    this.onFrame(frame);
    this.onHud({ ...this.hud });
  }

  /** Current pose serialized for the render endpoint. */
  poseKey(): string {
    return poseQuery(this.orbit, this.intr);
  }

  /** Re-render only when the pose actually changed (no input -> no traffic). */
  requestRender(): void {
    if (!this.hud.sessionId) {
      return;
    }
    const key = this.poseKey();
    if (key === this.lastPoseKey) {
      return;
    }
    this.lastPoseKey = key;
    this.gate.request(key);
  }

  drag(dx: number, dy: number, gesture: Gesture = "orbit"): void {
    if (gesture === "pan") {
      const worldPerPixel = this.radius / this.intr.fx;
      const moved = panTarget(this.orbit, dx, dy, worldPerPixel);
      this.target = moved.target;
    } else {
      const da = radiansToSteps(-dx * DRAG_SENSITIVITY);
      const de = radiansToSteps(dy * DRAG_SENSITIVITY);
      this.azimuthSteps = ((this.azimuthSteps + da) % AZIMUTH_STEPS + AZIMUTH_STEPS) % AZIMUTH_STEPS;
      this.elevationSteps = Math.min(ELEV_LIMIT_STEPS,
                                     Math.max(-ELEV_LIMIT_STEPS, this.elevationSteps + de));
    }
    this.requestRender();
  }

  dolly(wheelDelta: number): void {
    this.radius = Math.max(1e-6, this.radius * Math.exp(wheelDelta * WHEEL_SENSITIVITY));
    this.requestRender();
  }
}
