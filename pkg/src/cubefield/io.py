"""Scene manifests, camera trajectories, and image/depth file formats.

Formats:
  - scene manifest: YAML mapping (reference, near, far, face_size, planes,
    seed, views) with one entry per posed view
  - trajectory: text, one "qw qx qy qz tx ty tz" pose per line
  - images: 8-bit PNG (values scaled to [0, 1] on load)
  - depth: PFM (1-channel float32, little-endian, scale -1.0) or 16-bit PNG
    in millimeters

Missing input files raise UsageError (bad path on the command line);
unparseable or inconsistent content raises DataError.
"""

from __future__ import annotations

import io as _stdio
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from .errors import DataError, UsageError
from .rendering import Pose

DEPTH_MM_PER_UNIT = 1000.0  # 16-bit PNG depth quantization: 1 unit = 1 mm


@dataclass(frozen=True)
class SceneView:
    image: Path
    rotation: np.ndarray  # unit quaternion, wxyz
    translation: np.ndarray

    def pose(self) -> Pose:
        return Pose.from_quaternion(self.rotation, self.translation)


@dataclass(frozen=True)
class SceneManifest:
    reference: Path
    views: tuple
    near: float
    far: float
    face_size: int
    planes: int
    seed: int


def _vector(entry, key: str, n: int, where: str) -> np.ndarray:
    try:
        v = np.asarray([float(x) for x in entry[key]], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{where}: bad or missing {key!r}") from e
    if v.shape != (n,):
        raise DataError(f"{where}: {key!r} needs {n} numbers")
    return v


def load_scene(path) -> SceneManifest:
    """Parse and validate a scene manifest file."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"no scene manifest at {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise DataError(f"unparseable manifest {path}: {e}") from e
    if not isinstance(doc, dict):
        raise DataError(f"manifest {path} is not a mapping")
    for key in ("reference", "near", "far", "views"):
        if key not in doc:
            raise DataError(f"manifest missing key {key!r}")
    try:
        near = float(doc["near"])
        far = float(doc["far"])
        face_size = int(doc.get("face_size", 128))
        planes = int(doc.get("planes", 32))
        seed = int(doc.get("seed", 0))
    except (TypeError, ValueError) as e:
        raise DataError(f"manifest scalar fields: {e}") from e
    if not 0 < near < far:
        raise DataError("manifest needs 0 < near < far")
    if face_size < 1 or planes < 2:
        raise DataError("manifest needs face_size >= 1 and planes >= 2")
    raw_views = doc["views"]
    if not isinstance(raw_views, list) or not raw_views:
        raise DataError("manifest needs at least one view besides the reference")
    base = path.parent
    views = []
    for k, entry in enumerate(raw_views):
        where = f"view {k}"
        if not isinstance(entry, dict) or "image" not in entry:
            raise DataError(f"{where}: needs an image path")
        rot = _vector(entry, "rotation", 4, where)
        if abs(np.linalg.norm(rot) - 1.0) > 1e-6:
            raise DataError(f"{where}: rotation is not a unit quaternion")
        t = _vector(entry, "translation", 3, where)
        if np.max(np.abs(t)) >= near:
            raise DataError(f"{where}: translation leaves the near cube")
        views.append(SceneView(image=base / str(entry["image"]), rotation=rot, translation=t))
    return SceneManifest(
        reference=base / str(doc["reference"]),
        views=tuple(views),
        near=near,
        far=far,
        face_size=face_size,
        planes=planes,
        seed=seed,
    )


def load_trajectory(path, interpolate: int = 0) -> list:
    """Poses from a trajectory file, optionally with in-between poses.

    interpolate inserts that many linearly interpolated poses between each
    pair of waypoints (translation lerp, quaternion nlerp).
    """
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"no trajectory file at {path}")
    if interpolate < 0:
        raise UsageError("interpolate must be >= 0")
    rows = []
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 7:
            raise DataError(f"{path}:{ln}: expected 7 numbers (qw qx qy qz tx ty tz)")
        try:
            vals = np.array([float(p) for p in parts])
        except ValueError as e:
            raise DataError(f"{path}:{ln}: {e}") from e
        rows.append((vals[:4], vals[4:]))
    if not rows:
        raise DataError(f"trajectory {path} has no poses")
    keys = rows
    if interpolate and len(rows) > 1:
        keys = []
        for (qa, ta), (qb, tb) in zip(rows[:-1], rows[1:]):
            qb = qb if np.dot(qa, qb) >= 0 else -qb  # stay on the short arc
            keys.append((qa, ta))
            for j in range(1, interpolate + 1):
                a = j / (interpolate + 1)
                keys.append(((1 - a) * qa + a * qb, (1 - a) * ta + a * tb))
        keys.append(rows[-1])
    poses = []
    for q, t in keys:
        try:
            poses.append(Pose.from_quaternion(q, t))
        except ValueError as e:
            raise DataError(f"trajectory {path}: {e}") from e
    return poses


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------


def load_image(path) -> np.ndarray:
    """Decode an image file to a float64 (H, W, 3) array in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"no image at {path}")
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except (OSError, SyntaxError) as e:
        raise DataError(f"unreadable image {path}: {e}") from e
    return arr


def load_panorama(path) -> np.ndarray:
    """load_image plus the 2:1 equirectangular aspect check."""
    arr = load_image(path)
    h, w = arr.shape[:2]
    if w != 2 * h:
        raise DataError(f"panorama {path} is {w}x{h}, not 2:1 aspect")
    return arr


def image_png_bytes(img: np.ndarray) -> bytes:
    """Encode a [0, 1] float image as 8-bit PNG bytes (deterministic)."""
    arr = np.asarray(img, dtype=np.float64)
    u8 = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = _stdio.BytesIO()
    Image.fromarray(u8).save(buf, format="PNG")
    return buf.getvalue()


def save_image(path, img: np.ndarray) -> None:
    Path(path).write_bytes(image_png_bytes(img))


# ---------------------------------------------------------------------------
# depth maps
# ---------------------------------------------------------------------------


def _write_pfm(depth: np.ndarray) -> bytes:
    h, w = depth.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    # PFM rows run bottom-to-top
    return header + np.ascontiguousarray(np.flipud(depth)).astype("<f4").tobytes()


def _read_pfm(data: bytes, path) -> np.ndarray:
    try:
        parts = data.split(b"\n", 3)
        kind, dims, scale_s, raw = parts[0], parts[1], parts[2], parts[3]
        if kind not in (b"Pf", b"PF"):
            raise ValueError(f"bad magic {kind!r}")
        if kind == b"PF":
            raise ValueError("color PFM is not a depth map")
        w, h = (int(x) for x in dims.split())
        scale = float(scale_s)
        dtype = "<f4" if scale < 0 else ">f4"
        arr = np.frombuffer(raw, dtype=dtype, count=h * w)
        if arr.size != h * w:
            raise ValueError("truncated pixel data")
    except (IndexError, ValueError) as e:
        raise DataError(f"unreadable PFM {path}: {e}") from e
    return np.flipud(arr.reshape(h, w).astype(np.float64))


def depth_png_bytes(depth: np.ndarray) -> bytes:
    """Encode depth as 16-bit PNG in millimeters."""
    mm = np.round(np.asarray(depth, dtype=np.float64) * DEPTH_MM_PER_UNIT)
    u16 = np.clip(mm, 0, 65535).astype("<u2")
    buf = _stdio.BytesIO()
    Image.fromarray(u16).save(buf, format="PNG")  # uint16 -> I;16
    return buf.getvalue()


def save_depth(path, depth: np.ndarray) -> None:
    """Write a (H, W) depth map; format chosen by extension (.pfm or .png)."""
    path = Path(path)
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ValueError("depth must be a (H, W) array")
    if path.suffix.lower() == ".pfm":
        path.write_bytes(_write_pfm(depth))
    elif path.suffix.lower() == ".png":
        path.write_bytes(depth_png_bytes(depth))
    else:
        raise UsageError(f"unsupported depth format {path.suffix!r} (use .pfm or .png)")


def load_depth(path) -> np.ndarray:
    """Read a depth map written by save_depth, back in meters."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"no depth map at {path}")
    if path.suffix.lower() == ".pfm":
        return _read_pfm(path.read_bytes(), path)
    if path.suffix.lower() == ".png":
        try:
            with Image.open(path) as im:
                if im.mode not in ("I;16", "I"):
                    raise DataError(f"{path} is not a 16-bit depth PNG (mode {im.mode})")
                arr = np.asarray(im, dtype=np.float64)
        except (OSError, SyntaxError) as e:
            raise DataError(f"unreadable depth PNG {path}: {e}") from e
        return arr / DEPTH_MM_PER_UNIT
    raise UsageError(f"unsupported depth format {path.suffix!r} (use .pfm or .png)")
