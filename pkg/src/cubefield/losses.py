"""Fitting losses: photometric L1, SSIM, and cross-face edge alignment.

All losses run on torch internally so they stay differentiable inside the
optimizer; NumPy inputs are accepted and produce plain floats.  Conventions:

* Validity masks (from homography warping) remove pixels from the L1 mean
  and drop any SSIM window that touches an invalid pixel.
* Edge strips are returned in face-local order (u increasing for top/bottom
  edges, v increasing for left/right); the alignment loss re-orients the
  neighbor side through the adjacency table so both strips run along the
  same 3D direction before comparison.
* Cosine distance with zero-norm rule: exactly one zero strip gives
  distance 1, two zero strips give 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
import torch

from .field import CubicField, DepthPlaneSet
from .geometry import ADJACENCY, FACES, FACE_INDEX
from .rendering import composite_weights_torch, plane_distances

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


@dataclass(frozen=True)
class LossWeights:
    """Mixing factors for the total objective."""

    lambda_l1: float = 1.0
    lambda_ssim: float = 1.0
    lambda_edge: float = 0.1

    def __post_init__(self):
        for v in (self.lambda_l1, self.lambda_ssim, self.lambda_edge):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError("loss weights must be finite and non-negative")


@dataclass
class EdgeWeightStrip:
    """Rendering weights along one cube edge: E[j, b], position x plane."""

    E: np.ndarray


def _as_tensor(x):
    if isinstance(x, torch.Tensor):
        return x, True
    return torch.as_tensor(np.asarray(x, dtype=np.float64)), False


def _ret(value: torch.Tensor, any_torch: bool):
    return value if any_torch else float(value)


def photometric_l1(rendered_pano, target_pano, rendered_faces, target_faces, masks=(None, None)):
    """Masked mean absolute error, panorama term plus cubemap term.

    masks is a (pano_mask, face_mask) pair of boolean arrays ((H, W) and
    (6, w, w)); None means fully valid.  Each term averages |difference|
    over its valid elements, so identical shifts of both terms add up:
    a constant offset of 0.1 under full masks scores 0.1 + 0.1 = 0.2.

    Raises:
        ValueError: if a provided mask has no valid pixel.
    """
    pano_mask, face_mask = masks
    total = None
    any_torch = False
    for pred, tgt, mask in (
        (rendered_pano, target_pano, pano_mask),
        (rendered_faces, target_faces, face_mask),
    ):
        p, t1 = _as_tensor(pred)
        g, t2 = _as_tensor(tgt)
        any_torch = any_torch or t1 or t2
        if p.shape != g.shape:
            raise ValueError("image shapes differ")
        diff = (p - g).abs()
        if mask is None:
            term = diff.mean()
        else:
            m, _ = _as_tensor(mask)
            m = m.to(torch.bool)
            if not m.any():
                raise ValueError("mask has no valid pixels")
            term = diff[m].mean()
        total = term if total is None else total + term
    return _ret(total, any_torch)


def _gaussian_kernel(win: int, sigma: float, dtype, device):
    half = (win - 1) / 2.0
    x = torch.arange(win, dtype=dtype, device=device) - half
    g = torch.exp(-(x * x) / (2 * sigma * sigma))
    g = g / g.sum()
    return torch.outer(g, g)


def _ssim_pair(pred: torch.Tensor, tgt: torch.Tensor, mask):
    """Mean SSIM over valid windows of one (..., H, W, 3) image batch."""
    if pred.dim() == 3:
        pred = pred[None]
        tgt = tgt[None]
        if mask is not None:
            mask = mask[None]
    n, h, w, c = pred.shape
    win = min(SSIM_WINDOW, h, w)
    if win % 2 == 0:
        win -= 1
    kern = _gaussian_kernel(win, SSIM_SIGMA, pred.dtype, pred.device)
    kern = kern.expand(c, 1, win, win)
    x = pred.permute(0, 3, 1, 2)
    y = tgt.permute(0, 3, 1, 2)

    def blur(img):
        return torch.nn.functional.conv2d(img, kern, groups=c)

    mu_x = blur(x)
    mu_y = blur(y)
    sig_x = blur(x * x) - mu_x * mu_x
    sig_y = blur(y * y) - mu_y * mu_y
    cov = blur(x * y) - mu_x * mu_y
    ssim = ((2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)) / (
        (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sig_x + sig_y + SSIM_C2)
    )
    if mask is None:
        return ssim.mean()
    ones = torch.ones((1, 1, win, win), dtype=pred.dtype, device=pred.device)
    hits = torch.nn.functional.conv2d(mask.to(pred.dtype)[:, None], ones)
    keep = (hits >= win * win - 0.5).expand_as(ssim)
    if not keep.any():
        return None  # no fully valid window: nothing to score
    return ssim[keep].mean()


def ssim_loss(rendered, target, mask=None):
    """1 - mean SSIM (11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03).

    Accepts one image (H, W, 3) or a face batch (6, w, w, 3); windows that
    touch a masked-out pixel are dropped.  The window shrinks to the image
    when a side is smaller than 11 pixels.
    """
    p, t1 = _as_tensor(rendered)
    g, t2 = _as_tensor(target)
    if p.shape != g.shape:
        raise ValueError("image shapes differ")
    m = None
    if mask is not None:
        m, _ = _as_tensor(mask)
        m = m.to(torch.bool)
    mean_ssim = _ssim_pair(p, g, m)
    if mean_ssim is None:
        return _ret(p.new_zeros(()), t1 or t2)
    return _ret(1.0 - mean_ssim, t1 or t2)


def border_weight_strips(sigma_stack: torch.Tensor, planes: DepthPlaneSet, w: int):
    """Rendering-weight strips for all 24 (face, edge) slots.

    sigma_stack: (6, d, w, w) torch densities.  Returns a dict keyed by
    (face_name, edge) holding (w, d) tensors in face-local order.
    """
    delta = torch.as_tensor(plane_distances(planes, w)).to(sigma_stack.dtype)
    weights = composite_weights_torch(
        sigma_stack.permute(1, 0, 2, 3)[..., None],
        delta[:, None].expand(-1, 6, -1, -1),
    )  # (d, 6, w, w)
    strips = {}
    for i, name in enumerate(FACES):
        wf = weights[:, i]  # (d, w, w)
        strips[(name, "top")] = wf[:, 0, :].transpose(0, 1)
        strips[(name, "bottom")] = wf[:, -1, :].transpose(0, 1)
        strips[(name, "left")] = wf[:, :, 0].transpose(0, 1)
        strips[(name, "right")] = wf[:, :, -1].transpose(0, 1)
    return strips


def edge_strip(field: CubicField, face, edge: str) -> EdgeWeightStrip:
    """Per-plane rendering weights along one face border, shape (w, d)."""
    name = FACES[face] if isinstance(face, (int, np.integer)) else face
    sigma = torch.as_tensor(
        np.stack([np.asarray(field.mpis[f].sigma)[..., 0] for f in FACES]).astype(np.float64)
    )
    strips = border_weight_strips(sigma, field.planes, field.w)
    return EdgeWeightStrip(E=strips[(name, edge)].numpy())


def _cosine_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    na = torch.linalg.vector_norm(a)
    nb = torch.linalg.vector_norm(b)
    eps = torch.finfo(a.dtype).tiny
    a_zero = float(na.detach()) <= eps
    b_zero = float(nb.detach()) <= eps
    if a_zero and b_zero:
        return a.new_zeros(())
    if a_zero or b_zero:
        return a.new_ones(())
    return 1.0 - (a * b).sum() / (na * nb)


def undirected_edges():
    """The 12 cube edges as ((face, edge), (face, edge)) pairs plus flip."""
    seen = []
    for (face, edge), (nb, nb_edge, flip) in ADJACENCY.items():
        key = ((face, edge), (nb, nb_edge))
        if (key[1], key[0]) in [(a, b) for (a, b), _ in seen]:
            continue
        seen.append((key, flip))
    assert len(seen) == 12
    return seen


_UNDIRECTED_EDGES = undirected_edges()


def edge_align_from_strips(strips: dict) -> torch.Tensor:
    """Average cross-face inconsistency over the 12 cube edges.

    Each edge contributes cosine distance + mean absolute error between the
    two adjacent faces' strips after orientation alignment.
    """
    total = None
    for ((face, edge), (nb, nb_edge)), flip in _UNDIRECTED_EDGES:
        a = strips[(face, edge)]
        b = strips[(nb, nb_edge)]
        if flip:
            b = b.flip(0)
        term = _cosine_distance(a.reshape(-1), b.reshape(-1)) + (a - b).abs().mean()
        total = term if total is None else total + term
    return total / 12.0


def edge_align_loss(field: CubicField) -> float:
    """Geometric consistency of rendering weights across face borders."""
    sigma = torch.as_tensor(
        np.stack([np.asarray(field.mpis[f].sigma)[..., 0] for f in FACES]).astype(np.float64)
    )
    strips = border_weight_strips(sigma, field.planes, field.w)
    return float(edge_align_from_strips(strips))


def total_loss(parts, weights: LossWeights):
    """Weighted sum of (l1, ssim, edge) loss parts."""
    l1, ssim, edge = parts
    return weights.lambda_l1 * l1 + weights.lambda_ssim * ssim + weights.lambda_edge * edge
