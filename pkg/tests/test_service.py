"""HTTP render service: protocol, idempotency, concurrency, purity."""

import base64
import io
import json
import threading

import numpy as np
import pytest
import requests
from PIL import Image

from srt.model import SrtConfig, init_params, SceneModel
from srt.scenes import generate_samples, SceneConfig
from srt.service import make_server

SCFG = SceneConfig(width=16, height=16, n_input=3, n_target=1)


def tiny_model(posed=True):
    cfg = SrtConfig(image_height=16, image_width=16, patch_factor=4,
                    octaves_origin=2, octaves_direction=2, cnn_base=8,
                    token_width=48, encoder_layers=1, decoder_layers=1,
                    heads=4, head_width=12, mlp_hidden=64, decoder_mlp_hidden=32,
                    posed=posed)
    params = init_params(cfg, np.random.default_rng(0))
    for p in params.values():
        p.requires_grad = False
    return SceneModel(cfg, params, world_scale=1 / 24.0)


def png_bytes(img01):
    buf = io.BytesIO()
    Image.fromarray((img01 * 255).astype(np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def scene_payload(scene):
    files = {}
    cams = []
    for k, v in enumerate(scene.input_views):
        files[f"view_{k}.png"] = (f"view_{k}.png", png_bytes(v.image), "image/png")
        cams.append({"camera_to_world": v.pose.matrix().tolist(),
                     "intrinsics": v.intrinsics.matrix().tolist()})
    files["cameras.json"] = ("cameras.json", json.dumps(cams).encode(), "application/json")
    return files, cams


@pytest.fixture(scope="module")
def server():
    srv = make_server(tiny_model(), port=0, max_sessions=4)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{srv.server_address[1]}"
    yield base, srv
    srv.shutdown()
    srv.server_close()


@pytest.fixture(scope="module")
def scene():
    return generate_samples(33, 1, SCFG)[0]


def render_url(base, sid, pose, intr, w=16, h=16):
    vals = ",".join(str(x) for x in np.asarray(pose.matrix()).reshape(-1))
    return (f"{base}/scenes/{sid}/render?pose={vals}&fx={intr.fx}&fy={intr.fy}"
            f"&cx={intr.cx}&cy={intr.cy}&w={w}&h={h}")


class TestEncode:
    def test_healthz(self, server):
        base, _ = server
        r = requests.get(f"{base}/healthz")
        assert r.status_code == 200 and r.json()["status"] == "ok"

    def test_multipart_encode_and_idempotency(self, server, scene):
        base, srv = server
        files, _ = scene_payload(scene)
        r1 = requests.post(f"{base}/scenes", files=files)
        assert r1.status_code == 200, r1.text
        sid = r1.json()["id"]
        assert r1.json()["created"] is True
        r2 = requests.post(f"{base}/scenes", files=files)
        assert r2.json()["id"] == sid
        assert r2.json()["created"] is False
        meta = requests.get(f"{base}/scenes/{sid}/meta").json()
        assert meta["views"] == 3
        assert meta["encode_count"] == 1
        assert meta["fingerprint"] == srv.render_service.model.cfg.fingerprint()

    def test_json_base64_encode(self, server, scene):
        base, _ = server
        payload = {
            "images": [base64.b64encode(png_bytes(v.image)).decode()
                       for v in scene.input_views],
            "cameras": [{"camera_to_world": v.pose.matrix().tolist(),
                         "intrinsics": v.intrinsics.matrix().tolist()}
                        for v in scene.input_views],
        }
        r = requests.post(f"{base}/scenes", json=payload)
        assert r.status_code == 200, r.text

    def test_posed_model_requires_cameras(self, server, scene):
        base, _ = server
        files, _ = scene_payload(scene)
        files.pop("cameras.json")
        r = requests.post(f"{base}/scenes", files=files)
        assert r.status_code == 409

    def test_too_many_views_rejected(self, server, scene):
        base, _ = server
        img = png_bytes(scene.input_views[0].image)
        files = {f"view_{k:02d}.png": (f"view_{k:02d}.png", img, "image/png")
                 for k in range(17)}
        r = requests.post(f"{base}/scenes", files=files)
        assert r.status_code == 413

    def test_garbage_payload_is_400(self, server):
        base, _ = server
        r = requests.post(f"{base}/scenes", data=b"{oops",
                          headers={"Content-Type": "application/json"})
        assert r.status_code == 400

    def test_wrong_image_size_is_400(self, server, scene):
        base, _ = server
        big = np.zeros((32, 32, 3), dtype=np.float64)
        files = {"view_0.png": ("view_0.png", png_bytes(big), "image/png")}
        r = requests.post(f"{base}/scenes", files=files)
        # posed model without cameras would 409 first; send cameras
        files["cameras.json"] = ("cameras.json", json.dumps(
            [{"camera_to_world": np.eye(4).tolist(),
              "intrinsics": [[16, 0, 8], [0, 16, 8], [0, 0, 1]]}]).encode(),
            "application/json")
        r = requests.post(f"{base}/scenes", files=files)
        assert r.status_code == 400
        assert "16x16" in r.json()["error"]

    def test_unposed_model_accepts_bare_images(self, scene):
        srv = make_server(tiny_model(posed=False), port=0)
        t = threading.Thread(target=srv.serve_forever, daemon=True)
        t.start()
        try:
            base = f"http://127.0.0.1:{srv.server_address[1]}"
            files = {f"view_{k}.png": (f"view_{k}.png", png_bytes(v.image), "image/png")
                     for k, v in enumerate(scene.input_views)}
            r = requests.post(f"{base}/scenes", files=files)
            assert r.status_code == 200, r.text
        finally:
            srv.shutdown()
            srv.server_close()


@pytest.fixture(scope="module")
def session(server, scene):
    base, _ = server
    files, _ = scene_payload(scene)
    return requests.post(f"{base}/scenes", files=files).json()["id"]


class TestRender:
    def test_render_png_with_timing_header(self, server, scene, session):
        base, _ = server
        tv = scene.target_views[0]
        r = requests.get(render_url(base, session, tv.pose, tv.intrinsics))
        assert r.status_code == 200
        assert r.headers["Content-Type"] == "image/png"
        assert float(r.headers["X-Render-Seconds"]) > 0
        img = np.asarray(Image.open(io.BytesIO(r.content)))
        assert img.shape == (16, 16, 3)

    def test_same_pose_renders_byte_identical(self, server, scene, session):
        base, _ = server
        tv = scene.target_views[0]
        url = render_url(base, session, tv.pose, tv.intrinsics)
        a = requests.get(url).content
        b = requests.get(url).content
        assert a == b

    def test_unknown_session_404(self, server, scene):
        base, _ = server
        tv = scene.target_views[0]
        r = requests.get(render_url(base, "deadbeef", tv.pose, tv.intrinsics))
        assert r.status_code == 404

    def test_non_rigid_pose_422(self, server, scene, session):
        base, _ = server
        tv = scene.target_views[0]
        m = tv.pose.matrix()
        m[0, 0] *= 1.5
        vals = ",".join(str(x) for x in m.reshape(-1))
        intr = tv.intrinsics
        r = requests.get(f"{base}/scenes/{session}/render?pose={vals}&fx={intr.fx}"
                         f"&fy={intr.fy}&cx={intr.cx}&cy={intr.cy}&w=16&h=16")
        assert r.status_code == 422

    def test_oversized_render_413(self, server, scene, session):
        base, _ = server
        tv = scene.target_views[0]
        r = requests.get(render_url(base, session, tv.pose, tv.intrinsics,
                                    w=1024, h=1024))
        assert r.status_code == 413

    def test_concurrent_renders_match_serial(self, server, scene, session):
        base, _ = server
        tv = scene.target_views[0]
        urls = [render_url(base, session, tv.pose, tv.intrinsics, w=8 + k, h=8 + k)
                for k in range(6)]
        serial = [requests.get(u).content for u in urls]
        results = [None] * len(urls)

        def hit(i):
            results[i] = requests.get(urls[i]).content

        threads = [threading.Thread(target=hit, args=(i,)) for i in range(len(urls))]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == serial

    def test_encode_count_stays_one_after_renders(self, server, scene, session):
        base, srv = server
        meta = requests.get(f"{base}/scenes/{session}/meta").json()
        assert meta["encode_count"] == 1

    def test_restart_reproduces_renders(self, scene):
        tv = scene.target_views[0]

        def run_once():
            srv = make_server(tiny_model(), port=0)
            t = threading.Thread(target=srv.serve_forever, daemon=True)
            t.start()
            try:
                base = f"http://127.0.0.1:{srv.server_address[1]}"
                files, _ = scene_payload(scene)
                sid = requests.post(f"{base}/scenes", files=files).json()["id"]
                return sid, requests.get(render_url(base, sid, tv.pose, tv.intrinsics)).content
            finally:
                srv.shutdown()
                srv.server_close()

        sid1, img1 = run_once()
        sid2, img2 = run_once()
        assert sid1 == sid2
        assert img1 == img2


def test_lru_eviction(scene):
    srv = make_server(tiny_model(), port=0, max_sessions=2)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    try:
        base = f"http://127.0.0.1:{srv.server_address[1]}"
        sids = []
        for salt in range(3):
            files, _ = scene_payload(scene)
            # unique payload per salt: tweak one pixel
            img = scene.input_views[0].image.copy()
            img[0, 0] = salt / 10.0
            files["view_0.png"] = ("view_0.png", png_bytes(img), "image/png")
            sids.append(requests.post(f"{base}/scenes", files=files).json()["id"])
        assert requests.get(f"{base}/scenes/{sids[0]}/meta").status_code == 404
        assert requests.get(f"{base}/scenes/{sids[2]}/meta").status_code == 200
    finally:
        srv.shutdown()
        srv.server_close()
