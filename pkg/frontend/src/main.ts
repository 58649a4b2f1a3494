/** DOM wiring: upload panel, canvas, pointer gestures, HUD, exports. */

import { ServiceClient, RenderResult } from "./client.js";
import { Viewer } from "./viewer.js";

const client = new ServiceClient("");
const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const hudEl = document.getElementById("hud")!;
const statusEl = document.getElementById("status")!;
const thumbsEl = document.getElementById("thumbs")!;
const filesInput = document.getElementById("files") as HTMLInputElement;
const camerasInput = document.getElementById("cameras") as HTMLInputElement;
const uploadBtn = document.getElementById("upload") as HTMLButtonElement;

function paint(frame: RenderResult): void {
  const url = URL.createObjectURL(frame.blob);
  const img = new Image();
  img.onload = () => {
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
    URL.revokeObjectURL(url);
  };
  img.src = url;
}

const viewer = new Viewer(client, paint, (hud) => {
  hudEl.textContent =
    `${hud.fps.toFixed(1)} fps | server ${hud.serverMs.toFixed(1)} ms | ${hud.sessionId.slice(0, 10)}`;
  statusEl.textContent = hud.status;
});

async function upload(): Promise<void> {
  const files = Array.from(filesInput.files ?? []).filter((f) => f.name.endsWith(".png"));
  if (files.length === 0) {
    viewer.setStatus("choose at least one .png view");
    return;
  }
  files.sort((a, b) => a.name.localeCompare(b.name));
  let cameras: string | null = null;
  if (camerasInput.files && camerasInput.files.length > 0) {
    cameras = await camerasInput.files[0].text();
  }
  try {
    viewer.setStatus("encoding...");
    const enc = await client.encodeScene(files, cameras);
    const meta = await client.meta(enc.id);
    thumbsEl.innerHTML = "";
    for (const f of files) {
      const img = document.createElement("img");
      img.src = URL.createObjectURL(f);
      img.width = 64;
      img.title = f.name;
      thumbsEl.appendChild(img);
    }
    viewer.attachSession(meta);
  } catch (err) {
    viewer.setStatus(String((err as Error).message ?? err));
  }
}

uploadBtn.addEventListener("click", () => void upload());

let dragging = false;
let panning = false;
let lastX = 0;
let lastY = 0;

canvas.addEventListener("pointerdown", (e) => {
  dragging = true;
  panning = e.shiftKey;
  lastX = e.clientX;
  lastY = e.clientY;
  canvas.setPointerCapture(e.pointerId);
});
canvas.addEventListener("pointermove", (e) => {
  if (!dragging) {
    return;
  }
  viewer.drag(e.clientX - lastX, e.clientY - lastY, panning ? "pan" : "orbit");
  lastX = e.clientX;
  lastY = e.clientY;
});
canvas.addEventListener("pointerup", () => {
  dragging = false;
});
canvas.addEventListener("wheel", (e) => {
  e.preventDefault();
  viewer.dolly(e.deltaY);
}, { passive: false });

window.addEventListener("offline", () => viewer.setStatus("offline: reconnect to resume"));
window.addEventListener("online", () => viewer.setStatus("online"));

fetch("/healthz").then(async (r) => {
  const h = await r.json();
  viewer.setStatus(`service ok (${h.posed ? "posed" : "unposed"} model); upload views to start`);
}).catch(() => viewer.setStatus("service unreachable"));
