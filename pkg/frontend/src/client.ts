/** Thin client for the render service plus a latest-wins request gate. */

export interface SceneMeta {
  id: string;
  fingerprint: string;
  views: number;
  encode_seconds: number;
  encode_count: number;
  posed: boolean;
  input_size: [number, number];
}

export interface EncodeResult {
  id: string;
  created: boolean;
  encode_seconds: number;
}

export interface RenderResult {
  blob: Blob;
  serverSeconds: number;
  poseKey: string;
}

export class ServiceClient {
  constructor(readonly baseUrl: string = "") {}

  async encodeScene(images: File[] | Blob[], camerasJson: string | null): Promise<EncodeResult> {
    const form = new FormData();
    images.forEach((img, k) => form.append(`view_${k}.png`, img, `view_${k}.png`));
    if (camerasJson !== null) {
      form.append("cameras.json", new Blob([camerasJson], { type: "application/json" }),
                  "cameras.json");
    }
    const resp = await fetch(`${this.baseUrl}/scenes`, { method: "POST", body: form });
    const body = await resp.json();
    if (!resp.ok) {
      throw new Error(`${resp.status}: ${body.error ?? "encode failed"}`);
    }
    return body as EncodeResult;
  }

  async meta(id: string): Promise<SceneMeta> {
    const resp = await fetch(`${this.baseUrl}/scenes/${id}/meta`);
    const body = await resp.json();
    if (!resp.ok) {
      throw new Error(`${resp.status}: ${body.error ?? "meta failed"}`);
    }
    return body as SceneMeta;
  }

  async render(id: string, poseKey: string): Promise<RenderResult> {
    const resp = await fetch(`${this.baseUrl}/scenes/${id}/render?${poseKey}`);
    if (!resp.ok) {
      let message = `render failed (${resp.status})`;
      try {
        message = `${resp.status}: ${(await resp.json()).error}`;
      } catch {
        /* non-JSON error body */
      }
      throw new Error(message);
    }
    const blob = await resp.blob();
    const serverSeconds = parseFloat(resp.headers.get("X-Render-Seconds") ?? "0");
    return { blob, serverSeconds, poseKey };
  }
}

/**
 * At most one render in flight; while one is pending, only the most recent
 * requested pose is remembered. Completions for poses that are no longer the
 * newest are discarded, so an older frame can never paint over a newer one.
 */
export class RenderGate {
  private inFlight = false;
  private pendingKey: string | null = null;
  private seq = 0;
  private newestPainted = 0;

  constructor(
    private readonly fetchFrame: (poseKey: string) => Promise<RenderResult>,
    private readonly paint: (frame: RenderResult) => void,
    private readonly onError: (err: Error) => void = () => {},
  ) {}

  get busy(): boolean {
    return this.inFlight;
  }

  request(poseKey: string): void {
    this.pendingKey = poseKey;
    void this.pump();
  }

  private async pump(): Promise<void> {
    if (this.inFlight || this.pendingKey === null) {
      return;
    }
    const key = this.pendingKey;
    this.pendingKey = null;
    const ticket = ++this.seq;
    this.inFlight = true;
    try {
      const frame = await this.fetchFrame(key);
      if (ticket > this.newestPainted) {
        this.newestPainted = ticket;
        this.paint(frame);
      }
    } catch (err) {
      this.onError(err as Error);
    } finally {
      this.inFlight = false;
      void this.pump();
    }
  }
}
