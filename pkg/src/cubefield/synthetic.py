"""Procedural box-room scenes with analytic ground truth.

A room is an axis-aligned box seen from inside.  Walls carry one of two
albedo styles: "bands", a smooth low-frequency pattern, and "speckle", an
aperiodic mix of directional sinusoids.  Either way panoramas rendered
from nearby viewpoints are exactly consistent with a single Lambertian
surface at known depth, so the analytic ray-box distance serves as the
reference for rendered-depth error in end-to-end fitting tests.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

from .geometry import erp_pixel_to_sphere
from .rendering import Pose

_WALL_BASE = {
    # wall key -> base RGB, picked distinct per wall so views disambiguate
    "+x": (0.85, 0.35, 0.30),
    "-x": (0.30, 0.75, 0.40),
    "+y": (0.45, 0.40, 0.80),  # floor (y points down)
    "-y": (0.90, 0.85, 0.55),  # ceiling
    "+z": (0.35, 0.65, 0.85),
    "-z": (0.80, 0.55, 0.75),
}

# wall key -> channel pinned bright by the speckle style
_SPECKLE_PIN = {"+x": 0, "-x": 1, "+y": 2, "-y": 0, "+z": 1, "-z": 2}


@lru_cache(maxsize=None)
def _speckle_bank(key: str, frequency: float):
    """Seeded sinusoid bank for one wall: (freqs, cos, sin, phase, amp).

    Seeding by crc32 of the wall key keeps the pattern identical across
    processes.  Frequencies are drawn log-uniform around the requested
    value with random directions and phases, so the pattern never repeats
    along a wall; repeating textures would let offset views lock onto the
    wrong period during fitting.
    """
    rng = np.random.default_rng(zlib.crc32(key.encode()))
    k = 10
    freqs = frequency * np.exp(rng.uniform(np.log(0.4), np.log(2.2), size=(2, k)))
    ang = rng.uniform(0.0, 2.0 * np.pi, size=(2, k))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(2, k))
    amp = rng.uniform(0.5, 1.0, size=(2, k))
    amp /= amp.sum(axis=1, keepdims=True)
    return freqs, np.cos(ang), np.sin(ang), phase, amp


@dataclass(frozen=True)
class BoxRoom:
    """Axis-aligned room of half-extents (hx, hy, hz), walls textured.

    texture selects the albedo style: "bands" (smooth, low frequency) or
    "speckle" (aperiodic sinusoid mix with one channel pinned bright, the
    high-contrast style the fitting tests use).
    """

    half_extents: tuple = (2.0, 1.5, 2.5)
    texture_frequency: float = 1.1
    texture: str = "bands"

    def __post_init__(self):
        if min(self.half_extents) <= 0:
            raise ValueError("half extents must be positive")
        if self.texture not in ("bands", "speckle"):
            raise ValueError('texture must be "bands" or "speckle"')

    @property
    def scale(self) -> float:
        """Room scale: the largest wall-to-wall dimension in meters."""
        return 2.0 * max(self.half_extents)

    def _wall_color(self, key: str, a, b):
        """Albedo at in-plane coordinates (a, b) of one wall."""
        if self.texture == "speckle":
            return self._speckle_color(key, a, b)
        base = np.array(_WALL_BASE[key])
        f = self.texture_frequency
        mod = (
            0.14 * np.sin(f * a + 0.7)
            + 0.14 * np.cos(1.37 * f * b - 0.4)
            + 0.08 * np.sin(0.73 * f * (a + b))
        )
        rgb = base[None, :] * (1.0 + mod[..., None] * np.array([1.0, 0.8, 1.2]))
        return np.clip(rgb, 0.02, 0.98)

    def _speckle_color(self, key: str, a, b):
        # two channels carry independent sinusoid mixes, the third is pinned
        # near white; an always-bright channel stops a fitted field from
        # trading opacity against brightness (colors are capped at 1)
        freqs, ca, sa, phase, amp = _speckle_bank(key, self.texture_frequency)
        rgb = np.empty(a.shape + (3,))
        pin = _SPECKLE_PIN[key]
        for ch in range(2):
            u = freqs[ch] * (ca[ch] * a[..., None] + sa[ch] * b[..., None]) + phase[ch]
            rgb[..., (pin + 1 + ch) % 3] = 0.55 + 0.55 * (np.sin(u) * amp[ch]).sum(-1)
        rgb[..., pin] = 0.96
        return np.clip(rgb, 0.05, 0.99)

    def trace(self, origin: np.ndarray, dirs: np.ndarray):
        """Intersect unit rays with the walls from an interior origin.

        dirs: (..., 3).  Returns (rgb (..., 3), distance (...)): Euclidean
        distance to the hit point and the wall albedo there.
        """
        origin = np.asarray(origin, dtype=np.float64)
        h = np.asarray(self.half_extents)
        if np.any(np.abs(origin) >= h):
            raise ValueError("camera center must be inside the room")
        g = np.asarray(dirs, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = (np.sign(g) * h - origin) / g
        cand = np.where(np.abs(g) < 1e-15, np.inf, cand)
        axis = np.argmin(cand, axis=-1)
        dist = np.take_along_axis(cand, axis[..., None], axis=-1)[..., 0]
        point = origin + dist[..., None] * g

        rgb = np.zeros(g.shape[:-1] + (3,))
        plane_axes = {0: (2, 1), 1: (0, 2), 2: (0, 1)}  # in-plane coords per wall axis
        for ax in range(3):
            for sign, tag in ((1.0, "+"), (-1.0, "-")):
                m = (axis == ax) & (np.sign(g[..., ax]) == sign)
                if not np.any(m):
                    continue
                a_ax, b_ax = plane_axes[ax]
                key = tag + "xyz"[ax]
                rgb[m] = self._wall_color(key, point[m][:, a_ax], point[m][:, b_ax])
        return rgb, dist


def render_room_pano(room: BoxRoom, pose: Pose, height: int, width: int):
    """Ground-truth panorama and depth map seen from a posed camera.

    Returns (rgb (H, W, 3) in [0,1], depth (H, W) meters); depth is the
    Euclidean distance from the camera center to the wall along each pixel
    ray, matching the rendering module's distance convention.
    """
    cols = np.arange(width) + 0.5
    rows = np.arange(height) + 0.5
    m, n = np.meshgrid(cols, rows, indexing="xy")
    q = erp_pixel_to_sphere(np.stack([m, n], axis=-1), height, width)
    g = q @ pose.R.T
    return room.trace(-pose.t, g)


@dataclass
class RoomScene:
    """A room plus posed panoramas rendered inside it."""

    room: BoxRoom
    poses: list
    panos: list
    depths: list
    reference: int = 0


def make_room_scene(
    room: BoxRoom | None = None,
    n_views: int = 3,
    height: int = 128,
    width: int = 256,
    max_offset: float = 0.25,
    seed: int = 0,
) -> RoomScene:
    """Reference view at the origin plus translated views, all rendered.

    Offsets are drawn uniformly in [-max_offset, max_offset]^3, which must
    stay well inside the room.
    """
    room = room or BoxRoom()
    if max_offset >= min(room.half_extents):
        raise ValueError("view offsets would leave the room")
    rng = np.random.default_rng(seed)
    poses = [Pose.identity()]
    for _ in range(n_views - 1):
        t = rng.uniform(-max_offset, max_offset, size=3)
        poses.append(Pose(R=np.eye(3), t=t))
    panos, depths = [], []
    for pose in poses:
        rgb, depth = render_room_pano(room, pose, height, width)
        panos.append(rgb)
        depths.append(depth)
    return RoomScene(room=room, poses=poses, panos=panos, depths=depths)
