"""Cubic-field data model: depth planes, per-face MPIs, positional encodings.

A cubic field is six multi-plane images (one per cube face) sharing a single
inverse-depth plane set and the 90-degree intrinsics from the geometry
module.  Plane b of every face lives on the surface of the axis-aligned cube
of half-extent z_b centered at the field origin.

Array payloads may be NumPy arrays or torch tensors; shapes follow the
[d][w][w][channels] layout with channels (r, g, b) for radiance and a single
channel for density.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import DataError
from .geometry import FACES, face_rotation

DEFAULT_NEAR = 0.3
DEFAULT_FAR = 10.0
DEFAULT_PLANES = 32

EMBED_DIM = 1024
_FIELD_MANIFEST = "manifest.json"


def _to_numpy(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x
    return x.detach().cpu().numpy()


@dataclass(frozen=True)
class DepthPlaneSet:
    """Ordered plane depths, uniform in inverse depth from near to far."""

    z: np.ndarray
    near: float
    far: float

    @property
    def d(self) -> int:
        return len(self.z)

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        object.__setattr__(self, "z", z)
        if z.ndim != 1 or len(z) < 2:
            raise ValueError("a depth plane set needs at least two planes")
        if not (0 < self.near < self.far):
            raise ValueError("need 0 < near < far")
        if np.any(np.diff(z) <= 0):
            raise ValueError("plane depths must be strictly increasing")


def make_depth_planes(near: float, far: float, d: int) -> DepthPlaneSet:
    """Build d planes spaced uniformly in 1/z, endpoints exactly near/far."""
    if not 0 < near < far:
        raise ValueError("need 0 < near < far")
    if d < 2:
        raise ValueError("need at least two planes")
    z = 1.0 / np.linspace(1.0 / near, 1.0 / far, d)
    z[0], z[-1] = near, far
    return DepthPlaneSet(z=z, near=float(near), far=float(far))


def _check_range(name, arr, low=None, nonneg=False):
    a = _to_numpy(arr)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    if low is not None and (a.min() < low[0] or a.max() > low[1]):
        raise ValueError(f"{name} outside [{low[0]}, {low[1]}]")
    if nonneg and a.min() < 0:
        raise ValueError(f"{name} has negative entries")


@dataclass
class Mpi:
    """One face's multi-plane image: radiance c and density sigma per plane."""

    c: object  # [d][w][w][3], values in [0, 1]
    sigma: object  # [d][w][w][1], non-negative, per meter

    def __post_init__(self):
        if tuple(self.c.shape[:3]) != tuple(self.sigma.shape[:3]):
            raise ValueError("c and sigma disagree on [d][w][w]")
        if self.c.shape[-1] != 3 or self.sigma.shape[-1] != 1:
            raise ValueError("expected 3 radiance channels and 1 density channel")
        if self.c.shape[1] != self.c.shape[2]:
            raise ValueError("faces must be square")
        _check_range("c", self.c, low=(0.0, 1.0))
        _check_range("sigma", self.sigma, nonneg=True)

    @property
    def d(self) -> int:
        return self.c.shape[0]

    @property
    def w(self) -> int:
        return self.c.shape[1]


@dataclass
class CubicField:
    """Six MPIs keyed by face name, sharing one plane set and face size."""

    mpis: dict
    planes: DepthPlaneSet
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if set(self.mpis) != set(FACES):
            raise ValueError(f"need exactly the six faces {FACES}")
        ws = {m.w for m in self.mpis.values()}
        ds = {m.d for m in self.mpis.values()}
        if len(ws) != 1 or len(ds) != 1:
            raise ValueError("all faces must share w and d")
        if self.planes.d != next(iter(ds)):
            raise ValueError("face plane count differs from the depth plane set")

    @property
    def w(self) -> int:
        return self.mpis["F"].w

    @property
    def d(self) -> int:
        return self.planes.d

    def stack(self) -> np.ndarray:
        """All faces as one (6, d, w, w, 4) array, channels (r, g, b, sigma)."""
        return np.stack(
            [
                np.concatenate(
                    [_to_numpy(self.mpis[f].c), _to_numpy(self.mpis[f].sigma)], axis=-1
                )
                for f in FACES
            ]
        )


def field_from_stack(stack, planes: DepthPlaneSet, meta: dict | None = None) -> CubicField:
    """Inverse of CubicField.stack for a (6, d, w, w, 4) array or tensor."""
    mpis = {
        f: Mpi(c=stack[i][..., :3], sigma=stack[i][..., 3:]) for i, f in enumerate(FACES)
    }
    return CubicField(mpis=mpis, planes=planes, meta=dict(meta or {}))


# ---------------------------------------------------------------------------
# positional encodings
# ---------------------------------------------------------------------------


def spherical_token_embedding(theta, phi) -> np.ndarray:
    """Sinusoidal embedding of a sphere point into 1024 components.

    For i = 0..255 the block [cos(a_i), sin(a_i), cos(b_i), sin(b_i)] is
    emitted, where a_i = theta*pi / 10000^(i/256) and b_i = phi*(pi/2) /
    10000^(i/256).  Accepts scalars or arrays; output shape (..., 1024).
    """
    theta = np.asarray(theta, dtype=np.float64)[..., None]
    phi = np.asarray(phi, dtype=np.float64)[..., None]
    scale = 10000.0 ** (np.arange(256) / 256.0)
    a = theta * np.pi / scale
    b = phi * (np.pi / 2.0) / scale
    out = np.stack([np.cos(a), np.sin(a), np.cos(b), np.sin(b)], axis=-1)
    return out.reshape(*out.shape[:-2], EMBED_DIM)


def nerf_gamma(u) -> np.ndarray:
    """Single-frequency positional encoding [cos(2*pi*u), sin(2*pi*u)].

    u is a 3-vector (theta, phi, 1/z) or an (..., 3) array; output (..., 6)
    with the three cosines followed by the three sines.
    """
    u = np.asarray(u, dtype=np.float64)
    return np.concatenate([np.cos(2 * np.pi * u), np.sin(2 * np.pi * u)], axis=-1)


def face_pixel_angles(face: str | int, u, v, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Longitude/latitude of the world direction through face pixel (u, v)."""
    half = w / 2.0
    a = (np.asarray(u, dtype=np.float64) - half) / half
    b = (np.asarray(v, dtype=np.float64) - half) / half
    d_face = np.stack([a, b, np.ones_like(a)], axis=-1)
    d = d_face @ face_rotation(face)
    norm = np.linalg.norm(d, axis=-1)
    theta = np.arctan2(d[..., 0], d[..., 2])
    phi = np.arcsin(np.clip(d[..., 1] / norm, -1.0, 1.0))
    return theta, phi


def point_feature(face: str | int, pixel: tuple, plane: int, field: CubicField) -> np.ndarray:
    """13-component feature of one field sample point.

    Layout: [c_r, c_g, c_b, sigma, theta, phi, 1/z, gamma([theta, phi, 1/z])]
    (3 + 1 + 3 + 6 components), where (c, sigma) are bilinearly read at the
    continuous face pixel and the angles come from the face pixel's world
    direction.
    """
    name = FACES[face] if isinstance(face, (int, np.integer)) else face
    mpi = field.mpis[name]
    if not 0 <= plane < field.d:
        raise IndexError(f"plane {plane} outside [0, {field.d})")
    u, v = pixel
    if not (0 <= u <= field.w and 0 <= v <= field.w):
        raise IndexError(f"pixel {pixel} outside the face square")
    from .geometry import _sample_face_bilinear

    c = _sample_face_bilinear(_to_numpy(mpi.c)[plane], np.asarray(u), np.asarray(v))
    sigma = _sample_face_bilinear(_to_numpy(mpi.sigma)[plane], np.asarray(u), np.asarray(v))
    theta, phi = face_pixel_angles(name, u, v, field.w)
    inv_z = 1.0 / field.planes.z[plane]
    angles = np.array([float(theta), float(phi), inv_z])
    return np.concatenate([np.asarray(c, dtype=np.float64), np.asarray(sigma, dtype=np.float64), angles, nerf_gamma(angles)])


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def save_field(field: CubicField, path: str | Path) -> None:
    """Write a field as a directory: JSON manifest + one raw tensor per face.

    Face files are little-endian float32, layout [d][w][w][4] with channels
    (r, g, b, sigma).
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    files = {f: f"face_{f}.f32" for f in FACES}
    manifest = {
        "kind": "cubic-field",
        "w": field.w,
        "d": field.d,
        "near": field.planes.near,
        "far": field.planes.far,
        "faces": list(FACES),
        "files": files,
    }
    (path / _FIELD_MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    stack = field.stack().astype("<f4")
    for i, f in enumerate(FACES):
        (path / files[f]).write_bytes(np.ascontiguousarray(stack[i]).tobytes())


def load_field(path: str | Path) -> CubicField:
    """Read a field directory written by save_field."""
    path = Path(path)
    mf = path / _FIELD_MANIFEST
    if not mf.is_file():
        raise DataError(f"no field manifest at {mf}")
    try:
        manifest = json.loads(mf.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"unparseable field manifest: {e}") from e
    for key in ("w", "d", "near", "far", "faces", "files"):
        if key not in manifest:
            raise DataError(f"field manifest missing key {key!r}")
    w, d = int(manifest["w"]), int(manifest["d"])
    if list(manifest["faces"]) != list(FACES):
        raise DataError(f"unexpected face order {manifest['faces']}")
    planes = make_depth_planes(float(manifest["near"]), float(manifest["far"]), d)
    mpis = {}
    for f in FACES:
        fp = path / manifest["files"][f]
        if not fp.is_file():
            raise DataError(f"missing face tensor {fp}")
        raw = np.frombuffer(fp.read_bytes(), dtype="<f4")
        if raw.size != d * w * w * 4:
            raise DataError(f"face tensor {fp} has wrong size")
        t = raw.reshape(d, w, w, 4)
        try:
            mpis[f] = Mpi(c=t[..., :3], sigma=t[..., 3:])
        except ValueError as e:
            raise DataError(f"face {f}: {e}") from e
    return CubicField(mpis=mpis, planes=planes)
