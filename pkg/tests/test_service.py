"""Frame-service contract: rendering endpoints, validation, determinism."""

import base64
import io as stdio

import numpy as np
import pytest
from numpy.testing import assert_allclose
from fastapi.testclient import TestClient
from PIL import Image

from cubefield.field import CubicField, Mpi, make_depth_planes
from cubefield.geometry import FACES, panorama_to_perspective
from cubefield.io import image_png_bytes
from cubefield.rendering import Pose, render_novel_panorama
from cubefield.service import create_app


def smooth_field(w=16, d=4):
    planes = make_depth_planes(1.0, 6.0, d)
    rng = np.random.default_rng(0)
    mpis = {}
    for f in FACES:
        c = rng.uniform(0.2, 0.8, size=(d, 1, 1, 3)) * np.ones((d, w, w, 3))
        sigma = rng.uniform(0.2, 0.8, size=(d, 1, 1, 1)) * np.ones((d, w, w, 1))
        mpis[f] = Mpi(c=c, sigma=sigma)
    return CubicField(mpis=mpis, planes=planes)


FIELD = smooth_field()


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(FIELD))


def body(t=(0, 0, 0), q=(1, 0, 0, 0), **kw):
    return {"pose": {"rotation": list(q), "translation": list(t)}, **kw}


def decode_png(resp):
    return np.asarray(Image.open(stdio.BytesIO(resp.content)))


class TestScene:
    def test_metadata_and_thumbnail(self, client):
        r = client.get("/scene")
        assert r.status_code == 200
        doc = r.json()
        assert doc["near"] == 1.0 and doc["far"] == 6.0
        assert doc["w"] == 16 and doc["d"] == 4
        thumb = Image.open(stdio.BytesIO(base64.b64decode(doc["reference_thumbnail"])))
        assert thumb.size == (128, 64)

    def test_no_field_gives_503(self):
        empty = TestClient(create_app(None))
        assert empty.get("/scene").status_code == 503
        assert empty.post("/render", json=body()).status_code == 503


class TestRender:
    def test_panorama_frame(self, client):
        r = client.post("/render", json=body(height=32, width=64))
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert "X-Render-Millis" in r.headers
        img = decode_png(r)
        assert img.shape == (32, 64, 3)

    def test_matches_library_renderer_exactly(self, client):
        r = client.post("/render", json=body(t=(0.1, 0.0, -0.2), height=32, width=64))
        out = render_novel_panorama(FIELD, Pose(R=np.eye(3), t=np.array([0.1, 0.0, -0.2])), (32, 64))
        assert r.content == image_png_bytes(out.image)

    def test_identical_requests_identical_bytes(self, client):
        payload = body(t=(0.05, -0.02, 0.01), height=16, width=32)
        a = client.post("/render", json=payload)
        b = client.post("/render", json=payload)
        assert a.content == b.content

    def test_depth_response_is_16bit_millimeters(self, client):
        r = client.post("/render", json=body(height=16, width=32, depth=True))
        assert r.status_code == 200
        im = Image.open(stdio.BytesIO(r.content))
        assert im.mode in ("I;16", "I")
        depth_mm = np.asarray(im, dtype=np.float64)
        out = render_novel_panorama(FIELD, Pose.identity(), (16, 32))
        assert np.abs(depth_mm / 1000.0 - out.depth).max() <= 0.5e-3 + 1e-9

    def test_perspective_reprojects_panorama(self, client):
        r = client.post(
            "/render", json=body(output="perspective", fov=90.0, height=24, width=24)
        )
        assert r.status_code == 200
        pano = render_novel_panorama(FIELD, Pose.identity(), (2 * FIELD.w, 4 * FIELD.w))
        expect = panorama_to_perspective(pano.image, 90.0, 24, 24)
        assert r.content == image_png_bytes(expect)

    def test_default_sizes(self, client):
        r = client.post("/render", json=body())
        assert decode_png(r).shape == (2 * FIELD.w, 4 * FIELD.w, 3)
        r = client.post("/render", json=body(output="perspective"))
        assert decode_png(r).shape == (256, 256, 3)


class TestValidation:
    def test_translation_outside_near_cube(self, client):
        r = client.post("/render", json=body(t=(1.5, 0, 0)))
        assert r.status_code == 422
        assert "near cube" in r.json()["detail"]

    def test_non_unit_quaternion(self, client):
        r = client.post("/render", json=body(q=(0.9, 0, 0, 0)))
        assert r.status_code == 422
        assert "unit" in r.json()["detail"]

    def test_bad_output_mode(self, client):
        assert client.post("/render", json=body(output="hologram")).status_code == 422

    def test_fov_range_only_for_perspective(self, client):
        bad = body(output="perspective", fov=150.0, height=8, width=8)
        assert client.post("/render", json=bad).status_code == 422
        ok = body(fov=150.0, height=8, width=16)  # panorama ignores fov
        assert client.post("/render", json=ok).status_code == 200

    def test_malformed_body(self, client):
        assert client.post("/render", json={"pose": {"rotation": [1, 0, 0, 0]}}).status_code == 422
        assert client.post("/render", json=body(q=(1, 0, 0))).status_code == 422

    def test_nonfinite_pose(self, client):
        raw = '{"pose": {"rotation": [1, 0, 0, 0], "translation": [NaN, 0.0, 0.0]}}'
        r = client.post("/render", content=raw, headers={"content-type": "application/json"})
        assert r.status_code == 422

    def test_oversized_frame(self, client):
        assert client.post("/render", json=body(height=5000, width=64)).status_code == 422


class TestCrossOrigin:
    def test_browser_script_can_read_timing_header(self, client):
        r = client.post(
            "/render",
            json=body(height=8, width=16),
            headers={"Origin": "http://localhost:5173"},
        )
        assert r.headers["access-control-allow-origin"] == "*"
        assert "X-Render-Millis" in r.headers["access-control-expose-headers"]

    def test_preflight(self, client):
        r = client.options(
            "/render",
            headers={
                "Origin": "http://localhost:5173",
                "Access-Control-Request-Method": "POST",
                "Access-Control-Request-Headers": "content-type",
            },
        )
        assert r.status_code == 200
        assert r.headers["access-control-allow-origin"] == "*"
