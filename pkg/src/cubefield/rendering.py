"""Volume rendering of cubic fields and viewpoint transport.

Two sampling strategies move a cubic field to a novel viewpoint:

* Planar homography sampling warps each face's planes with the plane-induced
  homography and composites at the target face (fast, leaves invalid regions
  under large motion).
* Ray-cube sampling walks each target ERP ray through the nested plane cubes
  and gathers (c, sigma) from whichever face the ray exits, so every pixel of
  a target panorama is covered.

Pose convention: a view pose (R, t) places a point with view-frame
coordinates X_v at field coordinates R X_v - t, so the view's camera center
sits at -t and a view ray with unit direction q traces C(rho) = -t + rho R q
in field coordinates.  Poses must keep the center strictly inside the nearest
plane cube: ||t||_inf < near.

The differentiable core runs on torch tensors (dtype follows the inputs);
the module-level functions accept NumPy payloads and return NumPy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .field import CubicField, DepthPlaneSet, Mpi
from .geometry import ADJACENCY, EDGES, FACES, FACE_INDEX, erp_pixel_to_sphere, face_of_direction, face_rotation

_PLANE_NORMAL = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Pose:
    """Rigid pose of a target view relative to the field origin."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        if R.shape != (3, 3):
            raise ValueError("R must be 3x3")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9):
            raise ValueError("R is not orthonormal")
        if not np.isclose(np.linalg.det(R), 1.0, atol=1e-9):
            raise ValueError("R is not a proper rotation")

    @classmethod
    def identity(cls) -> "Pose":
        return cls(R=np.eye(3), t=np.zeros(3))

    @classmethod
    def from_quaternion(cls, quat, t) -> "Pose":
        """Build a pose from a (w, x, y, z) quaternion and translation."""
        q = np.asarray(quat, dtype=np.float64).reshape(4)
        norm = np.linalg.norm(q)
        if norm == 0:
            raise ValueError("zero quaternion")
        w, x, y, z = q / norm
        R = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        return cls(R=R, t=np.asarray(t, dtype=np.float64))


@dataclass
class RenderOutput:
    """Rendered radiance, expected ray distance, and leftover transmittance."""

    image: np.ndarray
    depth: np.ndarray
    tail: np.ndarray


# ---------------------------------------------------------------------------
# compositing
# ---------------------------------------------------------------------------


def _pixel_ray_norms(w: int) -> np.ndarray:
    """||K^-1 [u, v, 1]|| at the pixel centers of a face."""
    a = ((np.arange(w) + 0.5) * 2.0 / w) - 1.0
    ax, by = np.meshgrid(a, a, indexing="xy")
    return np.sqrt(ax * ax + by * by + 1.0)


def plane_distances(planes: DepthPlaneSet, w: int) -> np.ndarray:
    """Per-plane metric thickness map delta, shape (d, w, w).

    delta_b = (z_{b+1} - z_b) * ||K^-1 [u, v, 1]||; the last plane has no
    successor, so it keeps the previous gap as its thickness.
    """
    norms = _pixel_ray_norms(w)
    dz = np.diff(planes.z)
    delta = np.concatenate([dz, dz[-1:]])[:, None, None] * norms[None]
    return delta


def face_plane_depths(planes: DepthPlaneSet, w: int) -> np.ndarray:
    """Euclidean distance F_b from the origin to each plane sample, (d, w, w)."""
    return planes.z[:, None, None] * _pixel_ray_norms(w)[None]


def composite_torch(c, sigma, delta, fdist):
    """Differentiable over-compositing along the plane/ray axis.

    Args:
        c: (d, ..., 3) radiance.
        sigma: (d, ..., 1) density per meter.
        delta: (d, ...) metric thickness per sample.
        fdist: (d, ...) metric distance per sample.

    Returns:
        (image (..., 3), depth (...), tail (...)) where image multiplies
        per-plane weights T_b * alpha_b into c, depth does the same with
        fdist, and tail is the transmittance left after the last plane.
    """
    od = sigma[..., 0] * delta
    alpha = 1.0 - torch.exp(-od)
    acc = torch.cumsum(od, dim=0)
    trans = torch.exp(-torch.cat([torch.zeros_like(acc[:1]), acc[:-1]], dim=0))
    weights = trans * alpha
    image = (weights[..., None] * c).sum(dim=0)
    depth = (weights * fdist).sum(dim=0)
    tail = torch.exp(-acc[-1])
    return image, depth, tail


def composite_weights_torch(sigma, delta):
    """Per-plane rendering weights w_b = T_b * (1 - exp(-sigma delta))."""
    od = sigma[..., 0] * delta
    alpha = 1.0 - torch.exp(-od)
    acc = torch.cumsum(od, dim=0)
    trans = torch.exp(-torch.cat([torch.zeros_like(acc[:1]), acc[:-1]], dim=0))
    return trans * alpha


def composite(mpi: Mpi, planes: DepthPlaneSet) -> RenderOutput:
    """Volume-render one face from its own planes (no viewpoint change)."""
    c = torch.as_tensor(np.asarray(mpi.c))
    sigma = torch.as_tensor(np.asarray(mpi.sigma))
    delta = torch.as_tensor(plane_distances(planes, mpi.w)).to(c.dtype)
    fdist = torch.as_tensor(face_plane_depths(planes, mpi.w)).to(c.dtype)
    image, depth, tail = composite_torch(c, sigma, delta, fdist)
    return RenderOutput(image=image.numpy(), depth=depth.numpy(), tail=tail.numpy())


# ---------------------------------------------------------------------------
# planar homography sampling
# ---------------------------------------------------------------------------


def plane_homography(face: str | int, pose: Pose, z: float, w: int) -> np.ndarray:
    """Source-face -> target-face homography for the plane at depth z.

    H = K (r R^T r^T + r R^T t n^T / z) K^-1 with n = [0, 0, 1] in the
    source face frame; at the identity pose H is exactly the identity.
    """
    r = face_rotation(face)
    half = w / 2.0
    K = np.array([[half, 0, half], [0, half, half], [0, 0, 1.0]])
    Kinv = np.array([[1 / half, 0, -1.0], [0, 1 / half, -1.0], [0, 0, 1.0]])
    if np.array_equal(pose.R, np.eye(3)) and not pose.t.any():
        return np.eye(3)
    M = r @ pose.R.T @ r.T + np.outer(r @ pose.R.T @ pose.t, _PLANE_NORMAL) / z
    return K @ M @ Kinv


def _planar_grids(pose: Pose, planes: DepthPlaneSet, w: int):
    """Backward-warp grids for all faces and planes.

    Returns (grid, valid): grid is (6, d, w, w, 2) normalized source
    coordinates for grid_sample (align_corners=False), valid is a
    (6, d, w, w) bool mask of fully supported in-bounds samples.
    """
    d = planes.d
    centers = np.arange(w) + 0.5
    uu, vv = np.meshgrid(centers, centers, indexing="xy")
    ones = np.ones_like(uu)
    pix = np.stack([uu, vv, ones], axis=-1)  # (w, w, 3)
    grid = np.empty((6, d, w, w, 2))
    valid = np.zeros((6, d, w, w), dtype=bool)
    for i, name in enumerate(FACES):
        for b in range(d):
            H = plane_homography(name, pose, planes.z[b], w)
            det = np.linalg.det(H)
            if abs(det) < 1e-12:
                grid[i, b] = -2.0  # park outside the sample square
                continue
            src = pix @ np.linalg.inv(H).T
            denom = src[..., 2]
            ok = denom > 1e-12
            safe = np.where(ok, denom, 1.0)
            us = src[..., 0] / safe
            vs = src[..., 1] / safe
            valid[i, b] = ok & (us >= 0.5) & (us <= w - 0.5) & (vs >= 0.5) & (vs <= w - 0.5)
            grid[i, b, ..., 0] = np.where(ok, 2.0 * us / w - 1.0, -2.0)
            grid[i, b, ..., 1] = np.where(ok, 2.0 * vs / w - 1.0, -2.0)
    return grid, valid


def homography_warp(mpi: Mpi, face: str | int, pose: Pose, planes: DepthPlaneSet):
    """Warp one face's planes to the target view of the same face.

    Returns (c, sigma, valid): warped per-plane radiance and density with
    out-of-bounds samples zeroed, plus the per-plane validity mask.
    """
    name = FACES[face] if isinstance(face, (int, np.integer)) else face
    grid, valid = _planar_grids(pose, planes, mpi.w)
    i = FACE_INDEX[name]
    src = torch.as_tensor(
        np.concatenate([np.asarray(mpi.c), np.asarray(mpi.sigma)], axis=-1)
    ).permute(0, 3, 1, 2)
    g = torch.as_tensor(grid[i]).to(src.dtype)
    out = torch.nn.functional.grid_sample(
        src, g, mode="bilinear", padding_mode="zeros", align_corners=False
    ).permute(0, 2, 3, 1)
    out = out * torch.as_tensor(valid[i][..., None]).to(out.dtype)
    out_np = out.numpy()
    return out_np[..., :3], out_np[..., 3:], valid[i]


class PlanarSampler:
    """Precomputed homography warp for a fixed pose, reusable across fits.

    The grids depend only on (pose, planes, w), so one instance amortizes
    the geometry across every optimization step; sample() stays on the torch
    graph of its input.
    """

    def __init__(self, pose: Pose, planes: DepthPlaneSet, w: int, dtype=torch.float32):
        grid, valid = _planar_grids(pose, planes, w)
        self.grid = torch.as_tensor(grid).to(dtype)
        self.valid = torch.as_tensor(valid)
        self.pixel_valid = torch.as_tensor(valid.all(axis=1))  # (6, w, w)
        self._vmask = self.valid[..., None].to(dtype).permute(0, 1, 4, 2, 3)
        delta = plane_distances(planes, w)
        fdist = face_plane_depths(planes, w)
        self.delta = torch.as_tensor(delta).to(dtype)
        self.fdist = torch.as_tensor(fdist).to(dtype)

    def sample(self, stack: torch.Tensor) -> torch.Tensor:
        """Warp a (6, d, 4, w, w) field stack to the target view faces."""
        out = []
        for i in range(6):
            s = torch.nn.functional.grid_sample(
                stack[i], self.grid[i], mode="bilinear", padding_mode="zeros", align_corners=False
            )
            out.append(s * self._vmask[i])
        return torch.stack(out)

    def render(self, stack: torch.Tensor):
        """Warp + composite: returns (image (6,w,w,3), depth, tail)."""
        warped = self.sample(stack).permute(0, 1, 3, 4, 2)  # (6, d, w, w, 4)
        imgs, depths, tails = [], [], []
        for i in range(6):
            img, dep, tail = composite_torch(
                warped[i, ..., :3], warped[i, ..., 3:], self.delta, self.fdist
            )
            imgs.append(img)
            depths.append(dep)
            tails.append(tail)
        return torch.stack(imgs), torch.stack(depths), torch.stack(tails)


def render_novel_cubemap(field: CubicField, pose: Pose):
    """Render all six target faces by planar homography sampling.

    Returns (RenderOutput with (6, w, w) payloads, validity (6, w, w) bool).
    """
    stack_np = field.stack()
    dtype = torch.as_tensor(stack_np).dtype
    sampler = PlanarSampler(pose, field.planes, field.w, dtype=dtype)
    with torch.no_grad():
        stack = torch.as_tensor(stack_np).permute(0, 1, 4, 2, 3)
        image, depth, tail = sampler.render(stack)
    return (
        RenderOutput(image=image.numpy(), depth=depth.numpy(), tail=tail.numpy()),
        sampler.pixel_valid.numpy(),
    )


# ---------------------------------------------------------------------------
# ray-cube sampling
# ---------------------------------------------------------------------------


def ray_cube_intersect(qdir: np.ndarray, pose: Pose, z: float):
    """First crossing of a view ray with the cube of half-extent z.

    Candidates rho(+-, a) = (+-z + t_a) / (R q)_a over the three axes; the
    result is the smallest positive candidate whose point actually lies on
    the cube surface.  Returns (point, rho).

    Raises:
        ValueError: if the ray origin -t is not strictly inside the cube.
    """
    q = np.asarray(qdir, dtype=np.float64)
    if not np.isclose(np.linalg.norm(q), 1.0, atol=1e-6):
        raise ValueError("ray direction must be unit length")
    if np.max(np.abs(pose.t)) >= z:
        raise ValueError("ray origin lies outside the cube")
    g = pose.R @ q
    candidates = []
    for a in range(3):
        if abs(g[a]) < 1e-15:
            continue
        for s in (z, -z):
            rho = (s + pose.t[a]) / g[a]
            if rho > 0:
                candidates.append(rho)
    tol = 1e-6 * max(z, 1.0)
    for rho in sorted(candidates):
        point = -pose.t + rho * g
        if abs(np.max(np.abs(point)) - z) <= tol:
            return point, float(rho)
    raise ValueError("no crossing found; degenerate ray")  # unreachable for interior origins


def _exit_distances(origin: np.ndarray, g: np.ndarray, z: float) -> np.ndarray:
    """Vectorized exit distance of interior-origin rays from the |.|_inf = z cube."""
    with np.errstate(divide="ignore", invalid="ignore"):
        cand = (np.sign(g) * z - origin) / g
    cand = np.where(np.abs(g) < 1e-15, np.inf, cand)
    return cand.min(axis=-1)


def _erp_rays(height: int, width: int) -> np.ndarray:
    cols = np.arange(width) + 0.5
    rows = np.arange(height) + 0.5
    m, n = np.meshgrid(cols, rows, indexing="xy")
    return erp_pixel_to_sphere(np.stack([m, n], axis=-1), height, width)


def _sphere_lookup_atlas(points: np.ndarray, w: int) -> np.ndarray:
    """Map field-frame points to normalized atlas coordinates.

    The atlas lays the six cube-padded faces (tile size w+2) side by side in
    canonical order; a point's owning face comes from the tie-break rule and
    its face pixel from the shared intrinsics.
    """
    owner = face_of_direction(points)
    tile = w + 2
    half = w / 2.0
    u = np.empty(points.shape[:-1])
    v = np.empty(points.shape[:-1])
    for i, name in enumerate(FACES):
        mask = owner == i
        if not np.any(mask):
            continue
        p = points[mask] @ face_rotation(name).T
        u[mask] = half * p[:, 0] / p[:, 2] + half + 1.0 + i * tile
        v[mask] = half * p[:, 1] / p[:, 2] + half + 1.0
    gx = 2.0 * u / (6 * tile) - 1.0
    gy = 2.0 * v / tile - 1.0
    return np.stack([gx, gy], axis=-1)


def _cube_pad_slices(stack: torch.Tensor) -> torch.Tensor:
    """Slice-assignment cube padding; reference for the gather tables below."""
    w = stack.shape[-1]
    out = torch.zeros(
        (6, stack.shape[1], w + 2, w + 2), dtype=stack.dtype, device=stack.device
    )
    out[:, :, 1:-1, 1:-1] = stack

    def band(face: int, edge: str) -> torch.Tensor:
        img = stack[face]
        if edge == "top":
            return img[:, 0, :]
        if edge == "bottom":
            return img[:, -1, :]
        if edge == "left":
            return img[:, :, 0]
        return img[:, :, -1]

    for i, name in enumerate(FACES):
        for edge in EDGES:
            nb, nb_edge, flip = ADJACENCY[(name, edge)]
            b = band(FACE_INDEX[nb], nb_edge)
            if flip:
                b = b.flip(-1)
            if edge == "top":
                out[i, :, 0, 1:-1] = b
            elif edge == "bottom":
                out[i, :, -1, 1:-1] = b
            elif edge == "left":
                out[i, :, 1:-1, 0] = b
            else:
                out[i, :, 1:-1, -1] = b
        out[i, :, 0, 0] = (out[i, :, 0, 1] + out[i, :, 1, 0]) / 2
        out[i, :, 0, -1] = (out[i, :, 0, -2] + out[i, :, 1, -1]) / 2
        out[i, :, -1, 0] = (out[i, :, -1, 1] + out[i, :, -2, 0]) / 2
        out[i, :, -1, -1] = (out[i, :, -1, -2] + out[i, :, -2, -1]) / 2
    return out


# corner pad texel -> the two adjacent edge pad texels it averages
_CORNER_TAPS = (
    ((0, 0), (0, 1), (1, 0)),
    ((0, -1), (0, -2), (1, -1)),
    ((-1, 0), (-1, 1), (-2, 0)),
    ((-1, -1), (-1, -2), (-2, -1)),
)

_pad_source_cache: dict = {}


def _pad_sources(w: int):
    """Per-texel source index pair (ia, ib) of the padded cube atlas.

    Every padded texel copies exactly one face texel, except corners which
    average two edge pad texels.  The map is read off by padding an
    index-valued image once, so it matches _cube_pad_slices by construction.
    """
    cached = _pad_source_cache.get(w)
    if cached is not None:
        return cached
    idx = torch.arange(6 * w * w, dtype=torch.float64).reshape(6, 1, w, w)
    single = _cube_pad_slices(idx)[:, 0].round().long()
    ia, ib = single.clone(), single.clone()
    for i in range(6):
        for (r, c), (ra, ca), (rb, cb) in _CORNER_TAPS:
            ia[i, r, c] = single[i, ra, ca]
            ib[i, r, c] = single[i, rb, cb]
    pair = (ia.reshape(-1), ib.reshape(-1))
    _pad_source_cache[w] = pair
    return pair


def cube_pad_stack(stack: torch.Tensor) -> torch.Tensor:
    """One-pixel cube padding of a (6, C, w, w) torch stack (differentiable).

    Mirrors geometry.cube_pad(pad=1) including the corner averaging, but
    stays on the autograd graph of its input.  Implemented as a single
    cached-index gather; (x + x) * 0.5 == x keeps non-corner texels exact.
    """
    w = stack.shape[-1]
    ia, ib = _pad_sources(w)
    flat = stack.permute(1, 0, 2, 3).reshape(stack.shape[1], 6 * w * w)
    av = (flat[:, ia] + flat[:, ib]) * 0.5
    return av.reshape(-1, 6, w + 2, w + 2).permute(1, 0, 2, 3)


class RaySampler:
    """Precomputed ray-cube sampling of a target panorama for a fixed pose."""

    def __init__(
        self,
        pose: Pose,
        planes: DepthPlaneSet,
        height: int,
        width: int,
        w: int,
        dtype=torch.float32,
    ):
        if np.max(np.abs(pose.t)) >= planes.near:
            raise ValueError("pose translation leaves the near cube")
        self.w = w
        rays = _erp_rays(height, width)
        g = rays @ pose.R.T
        origin = -pose.t
        d = planes.d
        rho = np.empty((d, height, width))
        grid = np.empty((d, height, width, 2))
        for b in range(d):
            rho[b] = _exit_distances(origin, g, planes.z[b])
            points = origin + rho[b][..., None] * g
            grid[b] = _sphere_lookup_atlas(points, w)
        delta = np.diff(rho, axis=0)
        delta = np.concatenate([delta, delta[-1:]], axis=0)
        self.grid = torch.as_tensor(grid).to(dtype)
        self.delta = torch.as_tensor(delta).to(dtype)
        self.rho = torch.as_tensor(rho).to(dtype)

    def sample(self, stack: torch.Tensor) -> torch.Tensor:
        """Gather (d, 4, H, W) samples from a (6, d, 4, w, w) field stack."""
        padded = cube_pad_stack(stack.reshape(6, -1, self.w, self.w))
        atlas = torch.cat(list(padded), dim=-1).reshape(
            stack.shape[1], stack.shape[2], self.w + 2, 6 * (self.w + 2)
        )
        return torch.nn.functional.grid_sample(
            atlas, self.grid, mode="bilinear", padding_mode="zeros", align_corners=False
        )

    def render(self, stack: torch.Tensor):
        """Sample + composite: returns (image (H,W,3), depth, tail)."""
        s = self.sample(stack).permute(0, 2, 3, 1)  # (d, H, W, 4)
        return composite_torch(s[..., :3], s[..., 3:], self.delta, self.rho)


def render_novel_panorama(field: CubicField, pose: Pose, out_hw: tuple) -> RenderOutput:
    """Render a full target panorama by ray-cube sampling."""
    height, width = out_hw
    stack_np = field.stack()
    dtype = torch.as_tensor(stack_np).dtype
    sampler = RaySampler(pose, field.planes, height, width, field.w, dtype=dtype)
    with torch.no_grad():
        stack = torch.as_tensor(stack_np).permute(0, 1, 4, 2, 3)
        image, depth, tail = sampler.render(stack)
    return RenderOutput(image=image.numpy(), depth=depth.numpy(), tail=tail.numpy())
