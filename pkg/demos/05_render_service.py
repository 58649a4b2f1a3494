"""Drive the render service end to end: start it in-process, upload a scene
twice (same session id both times), render an orbit, save the frames.

Uses demo 03's checkpoint by default.

Run:  python demos/05_render_service.py [checkpoint]
"""

import io
import json
import sys
import threading
from pathlib import Path

import numpy as np
import requests
from PIL import Image

from srt.model import SceneModel
from srt.scenes import SceneConfig, generate_samples
from srt.service import make_server
from srt.evaluation import orbit_path

here = Path(__file__).parent
ckpt = Path(sys.argv[1]) if len(sys.argv) > 1 else here / "out" / "overfit" / "model.srt"
if not ckpt.exists():
    sys.exit(f"no checkpoint at {ckpt}; run demos/03_overfit_one_scene.py first")
out = here / "out" / "service"
out.mkdir(parents=True, exist_ok=True)

server = make_server(SceneModel.from_checkpoint(ckpt), port=0)
threading.Thread(target=server.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{server.server_address[1]}"
print("service:", requests.get(f"{base}/healthz").json())

scene = generate_samples(0, 1, SceneConfig())[0]


def png_bytes(img):
    buf = io.BytesIO()
    Image.fromarray((img * 255).astype(np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


files = {f"view_{k}.png": (f"view_{k}.png", png_bytes(v.image), "image/png")
         for k, v in enumerate(scene.input_views)}
cams = [{"camera_to_world": v.pose.matrix().tolist(),
         "intrinsics": v.intrinsics.matrix().tolist()} for v in scene.input_views]
files["cameras.json"] = ("cameras.json", json.dumps(cams).encode(), "application/json")

first = requests.post(f"{base}/scenes", files=files).json()
again = requests.post(f"{base}/scenes", files=files).json()
print(f"encoded in {first['encode_seconds']*1000:.0f} ms; "
      f"idempotent: {first['id'] == again['id']} (created={again['created']})")

radius = float(np.linalg.norm(scene.input_views[0].pose.translation))
for k, (pose, intr) in enumerate(orbit_path(12, radius, 0.35 * radius, 96, 96)):
    vals = ",".join(str(x) for x in pose.matrix().reshape(-1))
    r = requests.get(f"{base}/scenes/{first['id']}/render?pose={vals}"
                     f"&fx={intr.fx}&fy={intr.fy}&cx={intr.cx}&cy={intr.cy}&w=96&h=96")
    (out / f"orbit_{k:02d}.png").write_bytes(r.content)
    if k == 0:
        print(f"frame 0: {r.headers['X-Render-Seconds']}s server-side")
meta = requests.get(f"{base}/scenes/{first['id']}/meta").json()
print(f"session meta: views={meta['views']} encode_count={meta['encode_count']}")
print(f"12 orbit frames in {out}")
server.shutdown()
