"""Equirectangular <-> cube-face projection geometry.

Conventions used throughout the package:

* World frame: x right, y down, z forward (right-handed).  A unit direction
  q = [cos(phi)sin(theta), sin(phi), cos(phi)cos(theta)] corresponds to
  longitude theta = atan2(x, z) in [-pi, pi) and latitude phi = asin(y) in
  [-pi/2, pi/2].  phi grows toward the bottom image row.
* ERP pixel coordinates (m, n): m horizontal in [0, W], n vertical in [0, H],
  with the principal point at (W/2, H/2) so that theta = 2*pi*(m - W/2)/W and
  phi = pi*(n - H/2)/H.  Array entry (row r, col c) covers the unit square
  centered at (c + 0.5, r + 0.5).
* Cube faces: six 90-degree pinhole cameras sharing the panorama center, in
  canonical order B, D, F, L, R, U.  Face F looks along +z, B along -z, L
  along -x, R along +x, U along -y, D along +y; "up" is continuous across the
  equatorial ring (image-down equals world +y on B, F, L, R).  r_F is the
  identity.  Intrinsics are K = [[w/2, 0, w/2], [0, w/2, w/2], [0, 0, 1]],
  i.e. face pixel (u, v) in [0, w]^2 spans a half-angle of 45 degrees.
* All resampling is bilinear with longitude wrap-around and latitude clamp.

Everything here is pure NumPy on float64 coordinates; image payloads keep
their input dtype.
"""

from __future__ import annotations

import numpy as np

FACES = ("B", "D", "F", "L", "R", "U")
FACE_INDEX = {name: i for i, name in enumerate(FACES)}

# Rows of each rotation are the face camera axes (x right, y image-down,
# z forward) expressed in world coordinates, so r_i maps world -> face.
_FACE_ROTATIONS = {
    "B": np.array([[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]),
    "D": np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
    "F": np.eye(3),
    "L": np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]]),
    "R": np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]),
    "U": np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]]),
}
for _r in _FACE_ROTATIONS.values():
    _r.setflags(write=False)

# (face, edge) -> (neighbor face, neighbor edge, reversed) for the four edges
# of each face.  "top" is the v=0 side, "bottom" v=w, "left" u=0, "right" u=w.
# Bands along top/bottom edges are indexed by u, along left/right edges by v;
# `reversed` is True when the neighbor's along-edge index runs the other way.
EDGES = ("top", "bottom", "left", "right")
ADJACENCY = {
    ("F", "top"): ("U", "bottom", False),
    ("F", "bottom"): ("D", "top", False),
    ("F", "left"): ("L", "right", False),
    ("F", "right"): ("R", "left", False),
    ("R", "top"): ("U", "right", True),
    ("R", "bottom"): ("D", "right", False),
    ("R", "left"): ("F", "right", False),
    ("R", "right"): ("B", "left", False),
    ("B", "top"): ("U", "top", True),
    ("B", "bottom"): ("D", "bottom", True),
    ("B", "left"): ("R", "right", False),
    ("B", "right"): ("L", "left", False),
    ("L", "top"): ("U", "left", False),
    ("L", "bottom"): ("D", "left", True),
    ("L", "left"): ("B", "right", False),
    ("L", "right"): ("F", "left", False),
    ("U", "top"): ("B", "top", True),
    ("U", "bottom"): ("F", "top", False),
    ("U", "left"): ("L", "top", False),
    ("U", "right"): ("R", "top", True),
    ("D", "top"): ("F", "bottom", False),
    ("D", "bottom"): ("B", "bottom", True),
    ("D", "left"): ("L", "bottom", True),
    ("D", "right"): ("R", "bottom", False),
}


def face_rotation(face: str | int) -> np.ndarray:
    """Return the world-to-face rotation r_i for a face name or index."""
    if isinstance(face, (int, np.integer)):
        face = FACES[face]
    return _FACE_ROTATIONS[face]


def intrinsics(w: int) -> np.ndarray:
    """Shared pinhole intrinsics K for face size w (90-degree FoV)."""
    h = w / 2.0
    return np.array([[h, 0.0, h], [0.0, h, h], [0.0, 0.0, 1.0]])


# ---------------------------------------------------------------------------
# sphere <-> pixel mappings
# ---------------------------------------------------------------------------


def erp_pixel_to_sphere(pixel: np.ndarray, height: int, width: int) -> np.ndarray:
    """Map continuous ERP pixel coordinates to unit directions.

    Args:
        pixel: (..., 2) array of (m, n) coordinates; m wraps in longitude,
            n is clamped to the valid latitude range.
        height: panorama height H.
        width: panorama width W.

    Returns:
        (..., 3) array of unit directions.
    """
    pixel = np.asarray(pixel, dtype=np.float64)
    theta = 2.0 * np.pi * (pixel[..., 0] - width / 2.0) / width
    phi = np.pi * (np.clip(pixel[..., 1], 0.0, height) - height / 2.0) / height
    cos_phi = np.cos(phi)
    return np.stack(
        [cos_phi * np.sin(theta), np.sin(phi), cos_phi * np.cos(theta)], axis=-1
    )


def sphere_to_erp_pixel(q: np.ndarray, height: int, width: int) -> np.ndarray:
    """Map directions to continuous ERP pixel coordinates (m, n).

    Raises:
        ValueError: if any direction has zero norm.
    """
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1)
    if np.any(norm == 0.0):
        raise ValueError("zero direction has no ERP coordinates")
    theta = np.arctan2(q[..., 0], q[..., 2])
    phi = np.arcsin(np.clip(q[..., 1] / norm, -1.0, 1.0))
    m = width * theta / (2.0 * np.pi) + width / 2.0
    n = height * phi / np.pi + height / 2.0
    return np.stack([m, n], axis=-1)


def sphere_to_face_pixel(q: np.ndarray, face: str | int, w: int):
    """Project a unit direction onto one cube face.

    Returns the continuous (u, v) face coordinates, or None when the
    direction points into the hemisphere behind the face camera.
    """
    p = face_rotation(face) @ np.asarray(q, dtype=np.float64)
    if p[2] <= 0.0:
        return None
    half = w / 2.0
    return (half * p[0] / p[2] + half, half * p[1] / p[2] + half)


def face_of_direction(q: np.ndarray) -> np.ndarray:
    """Assign directions to cube faces.

    The owning face is the one with the largest forward component, which
    equals the largest |axis component| of q with the sign selecting the
    face.  Exact ties resolve to the first face in canonical B<D<F<L<R<U
    order, so every direction has exactly one owner.

    Args:
        q: (..., 3) directions (need not be normalized).

    Returns:
        (...) int array of face indices into FACES.
    """
    q = np.asarray(q, dtype=np.float64)
    forward = np.stack(
        [q @ _FACE_ROTATIONS[name][2] for name in FACES], axis=-1
    )
    return np.argmax(forward, axis=-1)


def _face_directions(face: str, w: int) -> np.ndarray:
    """Unit world directions through the pixel centers of one face."""
    centers = (np.arange(w, dtype=np.float64) + 0.5) * 2.0 / w - 1.0
    a, b = np.meshgrid(centers, centers, indexing="xy")
    d_face = np.stack([a, b, np.ones_like(a)], axis=-1)
    d_world = d_face @ face_rotation(face)  # rows of r_i are cam axes: d @ r = r^T d
    return d_world / np.linalg.norm(d_world, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# bilinear samplers
# ---------------------------------------------------------------------------


def _sample_erp_bilinear(pano: np.ndarray, m: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Sample a panorama at continuous (m, n) with wrap in m, clamp in n."""
    h, w = pano.shape[:2]
    sm = m - 0.5
    sn = np.clip(n - 0.5, 0.0, float(h - 1))
    m0 = np.floor(sm).astype(np.int64)
    n0 = np.floor(sn).astype(np.int64)
    fm = sm - m0
    fn = sn - n0
    m0 %= w
    m1 = (m0 + 1) % w
    n1 = np.minimum(n0 + 1, h - 1)
    fm = fm[..., None]
    fn = fn[..., None]
    top = pano[n0, m0] * (1.0 - fm) + pano[n0, m1] * fm
    bot = pano[n1, m0] * (1.0 - fm) + pano[n1, m1] * fm
    return top * (1.0 - fn) + bot * fn


def _sample_face_bilinear(face_img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample one face image at continuous (u, v) with edge clamping."""
    h, w = face_img.shape[:2]
    su = np.clip(u - 0.5, 0.0, float(w - 1))
    sv = np.clip(v - 0.5, 0.0, float(h - 1))
    u0 = np.floor(su).astype(np.int64)
    v0 = np.floor(sv).astype(np.int64)
    fu = (su - u0)[..., None]
    fv = (sv - v0)[..., None]
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    top = face_img[v0, u0] * (1.0 - fu) + face_img[v0, u1] * fu
    bot = face_img[v1, u0] * (1.0 - fu) + face_img[v1, u1] * fu
    return top * (1.0 - fv) + bot * fv


# ---------------------------------------------------------------------------
# E2C / C2E
# ---------------------------------------------------------------------------


def erp_to_cubemap(pano: np.ndarray, w: int) -> np.ndarray:
    """Resample a panorama into six cube faces.

    Args:
        pano: (H, W, C) image with W = 2H.
        w: output face size in pixels.

    Returns:
        (6, w, w, C) faces in canonical order.
    """
    pano = np.asarray(pano)
    squeeze = pano.ndim == 2
    if squeeze:
        pano = pano[..., None]
    h, pw = pano.shape[:2]
    faces = np.empty((6, w, w, pano.shape[2]), dtype=np.float64)
    for i, name in enumerate(FACES):
        mn = sphere_to_erp_pixel(_face_directions(name, w), h, pw)
        faces[i] = _sample_erp_bilinear(pano, mn[..., 0], mn[..., 1])
    if np.issubdtype(pano.dtype, np.floating):
        faces = faces.astype(pano.dtype, copy=False)
    return faces[..., 0] if squeeze else faces


def cubemap_to_erp(faces: np.ndarray, height: int, width: int) -> np.ndarray:
    """Assemble a panorama from six cube faces.

    Each ERP pixel is owned by exactly one face (largest forward component,
    canonical-order tie-break) and bilinearly sampled there.  Faces are
    cube-padded by one pixel first so samples near face borders interpolate
    into the geometrically correct neighbor instead of clamping.
    """
    faces = np.asarray(faces)
    squeeze = faces.ndim == 3
    if squeeze:
        faces = faces[..., None]
    w = faces.shape[1]
    padded = cube_pad(faces, 1)
    cols = np.arange(width, dtype=np.float64) + 0.5
    rows = np.arange(height, dtype=np.float64) + 0.5
    m, n = np.meshgrid(cols, rows, indexing="xy")
    q = erp_pixel_to_sphere(np.stack([m, n], axis=-1), height, width)
    owner = face_of_direction(q)
    out = np.empty((height, width, faces.shape[3]), dtype=np.float64)
    half = w / 2.0
    for i, name in enumerate(FACES):
        mask = owner == i
        if not np.any(mask):
            continue
        p = q[mask] @ face_rotation(name).T
        u = half * p[:, 0] / p[:, 2] + half
        v = half * p[:, 1] / p[:, 2] + half
        # +1 offsets the one-pixel pad ring
        out[mask] = _sample_face_bilinear(padded[i], u + 1.0, v + 1.0)
    if np.issubdtype(faces.dtype, np.floating):
        out = out.astype(faces.dtype, copy=False)
    return out[..., 0] if squeeze else out


def panorama_to_perspective(
    pano: np.ndarray, fov_deg: float, height: int, width: int
) -> np.ndarray:
    """Pinhole re-projection of a panorama looking along +z.

    fov_deg is the horizontal field of view; pixels are bilinearly sampled
    from the panorama with longitude wrap.
    """
    if not 0 < fov_deg < 180:
        raise ValueError("fov must lie in (0, 180) degrees")
    pano = np.asarray(pano)
    squeeze = pano.ndim == 2
    if squeeze:
        pano = pano[..., None]
    f = (width / 2.0) / np.tan(np.deg2rad(fov_deg) / 2.0)
    xs = (np.arange(width) + 0.5 - width / 2.0) / f
    ys = (np.arange(height) + 0.5 - height / 2.0) / f
    x, y = np.meshgrid(xs, ys, indexing="xy")
    dirs = np.stack([x, y, np.ones_like(x)], axis=-1)
    mn = sphere_to_erp_pixel(dirs, pano.shape[0], pano.shape[1])
    out = _sample_erp_bilinear(pano, mn[..., 0], mn[..., 1])
    return out[..., 0] if squeeze else out


# ---------------------------------------------------------------------------
# cube padding
# ---------------------------------------------------------------------------


def _edge_band(face_img: np.ndarray, edge: str, depth: int) -> np.ndarray:
    """Inner band of `depth` rows/cols along an edge.

    Returns a (depth, w, C) array: band[k, j] is the pixel k steps inward
    from the edge at along-edge index j (j = u for top/bottom, v for
    left/right).
    """
    if edge == "top":
        return face_img[:depth]
    if edge == "bottom":
        return face_img[-depth:][::-1]
    if edge == "left":
        return face_img[:, :depth].transpose(1, 0, 2)
    if edge == "right":
        return face_img[:, -depth:][:, ::-1].transpose(1, 0, 2)
    raise ValueError(f"unknown edge {edge!r}")


def cube_pad(faces: np.ndarray, pad: int) -> np.ndarray:
    """Pad every face with bands copied from its neighbors.

    Band row k (k = 1..pad, moving outward) copies the neighbor's k-th
    row/column inward from the shared edge, reversed when the adjacency
    entry says so.  The four pad x pad corner blocks average the horizontal
    continuation of the top/bottom band and the vertical continuation of
    the left/right band.  pad=0 returns the faces unchanged.
    """
    faces = np.asarray(faces)
    if not np.issubdtype(faces.dtype, np.floating):
        faces = faces.astype(np.float64)
    if pad == 0:
        return faces
    w = faces.shape[1]
    if not 0 < pad < w:
        raise ValueError("pad must satisfy 0 <= pad < w")
    squeeze = faces.ndim == 3
    if squeeze:
        faces = faces[..., None]
    c = faces.shape[3]
    out = np.zeros((6, w + 2 * pad, w + 2 * pad, c), dtype=faces.dtype)
    out[:, pad:-pad, pad:-pad] = faces
    for i, name in enumerate(FACES):
        for edge in EDGES:
            nb, nb_edge, flip = ADJACENCY[(name, edge)]
            band = _edge_band(faces[FACE_INDEX[nb]], nb_edge, pad)
            if flip:
                band = band[:, ::-1]
            if edge == "top":
                out[i, pad - 1 :: -1, pad:-pad] = band
            elif edge == "bottom":
                out[i, -pad:, pad:-pad] = band
            elif edge == "left":
                out[i, pad:-pad, pad - 1 :: -1] = band.transpose(1, 0, 2)
            else:
                out[i, pad:-pad, -pad:] = band.transpose(1, 0, 2)
        # corners: average the two adjacent bands extended into the block
        tl = (out[i, :pad, pad][:, None] + out[i, pad, :pad][None, :]) / 2
        tr = (out[i, :pad, -pad - 1][:, None] + out[i, pad, -pad:][None, :]) / 2
        bl = (out[i, -pad:, pad][:, None] + out[i, -pad - 1, :pad][None, :]) / 2
        br = (out[i, -pad:, -pad - 1][:, None] + out[i, -pad - 1, -pad:][None, :]) / 2
        out[i, :pad, :pad] = tl
        out[i, :pad, -pad:] = tr
        out[i, -pad:, :pad] = bl
        out[i, -pad:, -pad:] = br
    return out[..., 0] if squeeze else out
