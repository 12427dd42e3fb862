"""HTTP frame service: pose-conditioned rendering of one loaded field.

The service is stateless per request: the field is immutable after startup
and every response is a pure function of the request body, so identical
requests produce identical bytes (a small response cache exploits this).
Color frames are 8-bit PNG; depth responses are 16-bit PNG in millimeters.
"""

from __future__ import annotations

import base64
import threading
import time

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .field import CubicField
from .geometry import panorama_to_perspective
from .io import depth_png_bytes, image_png_bytes
from .rendering import Pose, render_novel_panorama

THUMB_HW = (64, 128)
MAX_SIDE = 2048
_CACHE_MAX = 64


class PoseBody(BaseModel):
    rotation: list[float]  # unit quaternion wxyz
    translation: list[float]


class RenderBody(BaseModel):
    pose: PoseBody
    output: str = "panorama"
    fov: float = 90.0
    width: int | None = None
    height: int | None = None
    depth: bool = False


def _parse_pose(body: PoseBody, near: float) -> Pose:
    if len(body.rotation) != 4:
        raise HTTPException(422, "rotation must be a wxyz quaternion (4 numbers)")
    if len(body.translation) != 3:
        raise HTTPException(422, "translation must have 3 components")
    q = np.asarray(body.rotation, dtype=np.float64)
    t = np.asarray(body.translation, dtype=np.float64)
    if not np.all(np.isfinite(q)) or not np.all(np.isfinite(t)):
        raise HTTPException(422, "pose values must be finite")
    if abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise HTTPException(422, "rotation is not a unit quaternion")
    if np.max(np.abs(t)) >= near:
        raise HTTPException(422, f"translation leaves the near cube (|t|_inf < {near})")
    return Pose.from_quaternion(q, t)


def create_app(field: CubicField | None) -> FastAPI:
    app = FastAPI(title="cubefield frame service")
    # the browser viewer is served from its own origin; the timing header
    # must be listed or cross-origin scripts cannot read it
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["X-Render-Millis"],
    )
    cache: dict[str, bytes] = {}
    lock = threading.Lock()
    thumb_b64 = None
    if field is not None:
        thumb = render_novel_panorama(field, Pose.identity(), THUMB_HW)
        thumb_b64 = base64.b64encode(image_png_bytes(thumb.image)).decode("ascii")

    def require_field() -> CubicField:
        if field is None:
            raise HTTPException(503, "no field loaded")
        return field

    @app.get("/scene")
    def scene():
        f = require_field()
        return {
            "near": f.planes.near,
            "far": f.planes.far,
            "w": f.w,
            "d": f.d,
            "reference_thumbnail": thumb_b64,
        }

    @app.post("/render")
    def render(body: RenderBody):
        f = require_field()
        start = time.monotonic()
        if body.output not in ("panorama", "perspective"):
            raise HTTPException(422, "output must be 'panorama' or 'perspective'")
        if body.output == "perspective" and not 10.0 < body.fov < 140.0:
            raise HTTPException(422, "fov must lie in (10, 140) degrees")
        pose = _parse_pose(body.pose, f.planes.near)
        if body.output == "panorama":
            height = body.height or 2 * f.w
            width = body.width or 2 * height
        else:
            height = body.height or 256
            width = body.width or height
        if not (0 < height <= MAX_SIDE and 0 < width <= MAX_SIDE):
            raise HTTPException(422, f"frame sides must be in [1, {MAX_SIDE}]")

        key = body.model_dump_json()
        with lock:
            png = cache.get(key)
        if png is None:
            if body.output == "panorama":
                out = render_novel_panorama(f, pose, (height, width))
                image, depth = out.image, out.depth
            else:
                pano = render_novel_panorama(f, pose, (2 * f.w, 4 * f.w))
                image = panorama_to_perspective(pano.image, body.fov, height, width)
                depth = panorama_to_perspective(pano.depth, body.fov, height, width)
            png = depth_png_bytes(depth) if body.depth else image_png_bytes(image)
            with lock:
                if len(cache) >= _CACHE_MAX:
                    cache.pop(next(iter(cache)))
                cache[key] = png
        millis = (time.monotonic() - start) * 1000.0
        return Response(
            content=png,
            media_type="image/png",
            headers={"X-Render-Millis": f"{millis:.1f}"},
        )

    return app
