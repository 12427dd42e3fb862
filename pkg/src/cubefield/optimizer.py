"""Direct per-scene fitting of a cubic field to posed panoramas.

The field is reparameterized so every iterate is a valid field: radiance
through a logistic map, density through softplus.  Gradients are exact
reverse-mode derivatives of the composed map

    params -> (c, sigma) -> [optional blending] -> warped/sampled views
           -> photometric + SSIM + edge losses,

and updates use Adam-style per-parameter second-moment scaling with an
exponential step-size decay.  Fitting is deterministic for a fixed seed:
computation is pinned to one thread and no stochastic sampling is used.

Supervision: every provided view contributes; the reference view (whose
panorama also seeds the initialization) is typically the identity pose.
Sampling modes select which transport path drives the photometric terms:
`planar` supervises warped cube faces, `raycube` supervises re-rendered
panoramas, `both` sums the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from types import SimpleNamespace

import numpy as np
import torch

from .errors import NumericError
from .field import CubicField, DepthPlaneSet, Mpi
from .geometry import FACES, cubemap_to_erp, erp_to_cubemap
from .losses import (
    LossWeights,
    border_weight_strips,
    edge_align_from_strips,
    ssim_loss,
    total_loss,
)
from .rendering import PlanarSampler, Pose, RaySampler, composite_torch, face_plane_depths, plane_distances

_SAMPLING_MODES = ("planar", "raycube", "both")
_LOGIT_EPS = 1e-5


@dataclass
class PosedView:
    """One input panorama with the pose it was captured from."""

    pano: np.ndarray
    pose: Pose


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 200
    step_size: float = 0.1
    decay: float = 1.0
    seed: int = 0
    weights: LossWeights = dc_field(default_factory=LossWeights)
    sampling: str = "both"
    optimize_blending: bool = False
    # optional warm-up at half face width before the full-width iterations;
    # large faces started from the broadcast init tend to keep their density
    # uniform, while a coarse stage locks the geometry in first
    coarse_iterations: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step size must be positive")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.sampling not in _SAMPLING_MODES:
            raise ValueError(f"sampling must be one of {_SAMPLING_MODES}")
        if self.coarse_iterations < 0:
            raise ValueError("coarse iterations must be >= 0")
        if self.coarse_iterations and self.optimize_blending:
            raise ValueError("coarse-to-fine cannot carry blending weights across widths")


class FieldParams:
    """Unconstrained field parameters: chat (6,d,3,w,w), shat (6,d,1,w,w)."""

    def __init__(self, chat: torch.Tensor, shat: torch.Tensor, planes: DepthPlaneSet):
        if chat.shape[:2] != shat.shape[:2] or chat.shape[-2:] != shat.shape[-2:]:
            raise ValueError("chat and shat describe different fields")
        self.chat = chat
        self.shat = shat
        self.planes = planes

    @property
    def w(self) -> int:
        return self.chat.shape[-1]

    @property
    def d(self) -> int:
        return self.chat.shape[1]

    def stack(self) -> torch.Tensor:
        """Constrained (6, d, 4, w, w) field tensor on the autograd graph."""
        return torch.cat(
            [torch.sigmoid(self.chat), torch.nn.functional.softplus(self.shat)], dim=2
        )

    def to_field(self) -> CubicField:
        with torch.no_grad():
            s = self.stack().permute(0, 1, 3, 4, 2).cpu().numpy()
        mpis = {
            name: Mpi(c=np.ascontiguousarray(s[i, ..., :3]), sigma=np.ascontiguousarray(s[i, ..., 3:]))
            for i, name in enumerate(FACES)
        }
        return CubicField(mpis=mpis, planes=self.planes)

    @classmethod
    def from_reference(
        cls, pano: np.ndarray, w: int, planes: DepthPlaneSet, dtype=torch.float32
    ) -> "FieldParams":
        """Start the render near the reference view.

        chat is the logit of the reference panorama's cube faces, the same
        on every plane; shat makes sigma * delta about 1/d per plane, so the
        initial render is a dimmed copy of the reference.
        """
        faces = erp_to_cubemap(np.asarray(pano, dtype=np.float64), w)
        faces = np.clip(faces, _LOGIT_EPS, 1 - _LOGIT_EPS)
        chat_face = np.log(faces) - np.log1p(-faces)  # (6, w, w, 3)
        d = planes.d
        chat = (
            torch.as_tensor(chat_face).to(dtype).permute(0, 3, 1, 2)[:, None].repeat(1, d, 1, 1, 1)
        )
        gaps = np.diff(planes.z)
        gaps = np.concatenate([gaps, gaps[-1:]])
        sigma0 = 1.0 / (d * gaps)
        shat_vals = sigma0 + np.log(-np.expm1(-sigma0))
        shat = (
            torch.as_tensor(shat_vals).to(dtype)[None, :, None, None, None].repeat(6, 1, 1, w, w)
        )
        return cls(chat=chat, shat=shat, planes=planes)

    @classmethod
    def from_field(cls, field: CubicField, dtype=torch.float64) -> "FieldParams":
        """Invert the parameterization (clamping saturated values)."""
        stack = field.stack().astype(np.float64)
        c = np.clip(stack[..., :3], _LOGIT_EPS, 1 - _LOGIT_EPS)
        sigma = np.maximum(stack[..., 3:], 1e-8)
        chat = np.log(c) - np.log1p(-c)
        shat = sigma + np.log(-np.expm1(-sigma))
        return cls(
            chat=torch.as_tensor(chat).to(dtype).permute(0, 1, 4, 2, 3).contiguous(),
            shat=torch.as_tensor(shat).to(dtype).permute(0, 1, 4, 2, 3).contiguous(),
            planes=field.planes,
        )


class _BlendContext:
    """Constant context + leaf weights for in-graph blending."""

    def __init__(self, reference_pano: np.ndarray, w: int, d: int, seed: int, dtype):
        from . import blending

        self.patch = blending.PATCH
        self.p = w // self.patch
        if w % self.patch:
            raise ValueError(f"optimize_blending needs face width divisible by {self.patch}")
        self.pos = torch.as_tensor(blending.face_token_positions(w)).to(dtype)
        arr = np.asarray(reference_pano)
        h, ww = arr.shape[:2]
        h32 = (h // blending.ERP_REDUCE) * blending.ERP_REDUCE
        w32 = (ww // blending.ERP_REDUCE) * blending.ERP_REDUCE
        arr = arr[:h32, :w32]
        erp_wts = blending.ErpTokenizerWeights.seeded(seed)
        self.z_erp = torch.as_tensor(blending.tokenize_erp(arr, erp_wts).tokens).to(dtype)
        self.pos_e = torch.as_tensor(blending.erp_token_positions(h32, w32)).to(dtype)
        self.angle_feat = torch.as_tensor(blending._angle_features(w)).to(dtype)

        def leaves(wts_obj, names):
            return {n: torch.as_tensor(getattr(wts_obj, n)).to(dtype).requires_grad_() for n in names}

        att_names = ("w_q", "w_k", "w_v", "ffn1", "b1", "ffn2", "b2")
        self.sa = leaves(blending.AttentionWeights.seeded(seed + 1), att_names)
        self.ca = leaves(blending.AttentionWeights.seeded(seed + 2), att_names)
        self.pad = leaves(
            blending.PaddingWeights.diffusion(), ("conv", "conv_b", "readout", "readout_b")
        )
        self._blending = blending

    def parameters(self):
        for group in (self.sa, self.ca, self.pad):
            yield from group.values()

    def apply(self, chat: torch.Tensor, shat: torch.Tensor, planes_z):
        """chat/shat -> blended constrained stack (6, d, 4, w, w)."""
        six, d, _, w, _ = chat.shape
        p, patch = self.p, self.patch
        stack = torch.cat([torch.sigmoid(chat), torch.nn.functional.softplus(shat)], dim=2)
        tok = (
            stack.permute(0, 1, 3, 4, 2)
            .reshape(six, d, p, patch, p, patch, 4)
            .permute(1, 0, 2, 4, 3, 5, 6)
            .reshape(d, six * p * p, patch * patch * 4)
        )
        tok, _ = self._blending._attend(tok, self.pos, tok, self.pos, SimpleNamespace(**self.sa))
        tok, _ = self._blending._attend(
            tok, self.pos, self.z_erp[0], self.pos_e, SimpleNamespace(**self.ca)
        )
        stack = (
            tok.reshape(d, six, p, p, patch, patch, 4)
            .permute(1, 0, 2, 4, 3, 5, 6)
            .reshape(six, d, w, w, 4)
            .permute(0, 1, 4, 2, 3)
        )
        c = stack[:, :, :3].clamp(_LOGIT_EPS, 1 - _LOGIT_EPS)
        sigma = stack[:, :, 3:].clamp(min=1e-8)
        chat2 = torch.logit(c)
        shat2 = sigma + torch.log(-torch.expm1(-sigma))
        chat3, shat3 = self._blending.padding_blend_core(
            chat2, shat2, planes_z, self.angle_feat, SimpleNamespace(**self.pad)
        )
        return torch.cat(
            [torch.sigmoid(chat3), torch.nn.functional.softplus(shat3)], dim=2
        )


class Objective:
    """Precomputed samplers + targets; evaluates the total loss of a stack."""

    def __init__(
        self,
        views,
        planes: DepthPlaneSet,
        w: int,
        cfg: FitConfig,
        reference: int = 0,
        dtype=torch.float32,
    ):
        if len(views) < 1:
            raise ValueError("need at least one view")
        if not 0 <= reference < len(views):
            raise ValueError("reference index out of range")
        for v in views:
            if np.max(np.abs(v.pose.t)) >= planes.near:
                raise ValueError("a view pose leaves the near cube")
        self.cfg = cfg
        self.planes = planes
        self.w = w
        self.dtype = dtype
        self.views = []
        for v in views:
            pano = np.asarray(v.pano, dtype=np.float64)
            entry = {"pose": v.pose}
            if cfg.sampling in ("planar", "both"):
                entry["planar"] = PlanarSampler(v.pose, planes, w, dtype=dtype)
                entry["gt_faces"] = torch.as_tensor(erp_to_cubemap(pano, w)).to(dtype)
            if cfg.sampling in ("raycube", "both"):
                h, ww = pano.shape[:2]
                entry["ray"] = RaySampler(v.pose, planes, h, ww, w, dtype=dtype)
            entry["gt_pano"] = torch.as_tensor(pano).to(dtype)
            self.views.append(entry)
        self.blend = None
        if cfg.optimize_blending:
            self.blend = _BlendContext(views[reference].pano, w, planes.d, cfg.seed, dtype)

    def stack_of(self, params: FieldParams) -> torch.Tensor:
        if self.blend is not None:
            return self.blend.apply(params.chat, params.shat, self.planes.z)
        return params.stack()

    def __call__(self, stack: torch.Tensor):
        """Returns (total, l1, ssim, edge) as torch scalars."""
        cfg = self.cfg
        l1 = stack.new_zeros(())
        ssim = stack.new_zeros(())
        for entry in self.views:
            if "planar" in entry:
                sampler = entry["planar"]
                image, _, _ = sampler.render(stack)
                mask = sampler.pixel_valid
                diff = (image - entry["gt_faces"]).abs()
                l1 = l1 + diff[mask].mean()
                ssim = ssim + ssim_loss(image, entry["gt_faces"], mask=mask)
            if "ray" in entry:
                sampler = entry["ray"]
                image, _, _ = sampler.render(stack)
                diff = (image - entry["gt_pano"]).abs()
                l1 = l1 + diff.mean()
                ssim = ssim + ssim_loss(image, entry["gt_pano"])
        n = len(self.views)
        l1 = l1 / n
        ssim = ssim / n
        strips = border_weight_strips(stack[:, :, 3], self.planes, self.w)
        edge = edge_align_from_strips(strips)
        total = total_loss((l1, ssim, edge), cfg.weights)
        return total, l1, ssim, edge


def loss_gradient(params: FieldParams, views, cfg: FitConfig, reference: int = 0):
    """Exact gradient of the total loss for the given views.

    Returns {"chat": tensor, "shat": tensor} plus one entry per blending
    weight when cfg.optimize_blending is set.
    """
    chat = params.chat.detach().clone().requires_grad_()
    shat = params.shat.detach().clone().requires_grad_()
    p = FieldParams(chat=chat, shat=shat, planes=params.planes)
    objective = Objective(views, params.planes, params.w, cfg, reference, dtype=chat.dtype)
    total, _, _, _ = objective(objective.stack_of(p))
    leaves = {"chat": chat, "shat": shat}
    if objective.blend is not None:
        for group_name, group in (("sa", objective.blend.sa), ("ca", objective.blend.ca), ("pad", objective.blend.pad)):
            for name, leaf in group.items():
                leaves[f"blend.{group_name}.{name}"] = leaf
    grads = torch.autograd.grad(total, list(leaves.values()), allow_unused=True)
    out = {}
    for (name, leaf), g in zip(leaves.items(), grads):
        out[name] = g if g is not None else torch.zeros_like(leaf)
    return out


@dataclass
class FitResult:
    field: CubicField
    trace: list
    params: FieldParams


def _upsampled(params: FieldParams) -> FieldParams:
    """Double the face width of the parameters by bilinear interpolation."""

    def up(t: torch.Tensor) -> torch.Tensor:
        n, d, ch, hw, _ = t.shape
        flat = t.detach().reshape(n * d, ch, hw, hw)
        big = torch.nn.functional.interpolate(
            flat, scale_factor=2, mode="bilinear", align_corners=False
        )
        return big.reshape(n, d, ch, 2 * hw, 2 * hw).contiguous()

    return FieldParams(chat=up(params.chat), shat=up(params.shat), planes=params.planes)


def fit(
    views,
    cfg: FitConfig,
    planes: DepthPlaneSet,
    w: int,
    reference: int = 0,
) -> FitResult:
    """Optimize a cubic field against the posed panoramas.

    With cfg.coarse_iterations set, a warm-up stage runs at half face width
    and its result is upsampled to seed the full-width stage; the step-size
    decay keeps counting across the boundary so the refinement starts gentle.
    The loss trace rows are (iteration, L1, SSIM, edge, total), recorded at
    the parameters of that iteration (before the update); warm-up rows come
    first, with the iteration index running on.

    Raises:
        NumericError: if the loss becomes non-finite, naming the iteration.
    """
    torch.manual_seed(cfg.seed)
    torch.set_num_threads(1)
    dtype = torch.float32
    stages = [(w, cfg.iterations)]
    if cfg.coarse_iterations:
        if w % 2:
            raise ValueError("coarse-to-fine needs an even face width")
        stages.insert(0, (w // 2, cfg.coarse_iterations))
    params = FieldParams.from_reference(views[reference].pano, stages[0][0], planes, dtype=dtype)
    trace = []
    start = 0
    for stage_w, stage_iters in stages:
        if params.w != stage_w:
            params = _upsampled(params)
        params.chat.requires_grad_()
        params.shat.requires_grad_()
        objective = Objective(views, planes, stage_w, cfg, reference, dtype=dtype)
        leaves = [params.chat, params.shat]
        if objective.blend is not None:
            leaves += list(objective.blend.parameters())
        opt = torch.optim.Adam(leaves, lr=cfg.step_size)
        for i in range(start, start + stage_iters):
            for group in opt.param_groups:
                group["lr"] = cfg.step_size * (cfg.decay**i)
            opt.zero_grad(set_to_none=True)
            total, l1, ssim, edge = objective(objective.stack_of(params))
            if not torch.isfinite(total):
                raise NumericError(f"loss diverged at iteration {i}")
            total.backward()
            opt.step()
            trace.append(
                (i, float(l1.detach()), float(ssim.detach()), float(edge.detach()), float(total.detach()))
            )
        start += stage_iters
    return FitResult(field=params.to_field(), trace=trace, params=params)


def loss_trace_csv(trace) -> str:
    """CSV rows (iteration, L1, SSIM, edge, total) for a fit trace."""
    lines = ["iteration,L1,SSIM,edge,total"]
    for it, l1, ssim, edge, total in trace:
        lines.append(f"{it},{l1:.8f},{ssim:.8f},{edge:.8f},{total:.8f}")
    return "\n".join(lines) + "\n"


@dataclass
class DepthExtraction:
    """Composited depth plus emptiness diagnostics."""

    depth: np.ndarray
    tail: np.ndarray
    empty: bool


def extract_depth(field: CubicField, as_: str = "cubemap", out_hw=None) -> DepthExtraction:
    """Composite per-face depth, optionally fused into a panorama.

    as_ selects "cubemap" ((6, w, w) output) or "panorama" (cubemap_to_erp
    on the depth channel, default size (2w, 4w)).  A field whose density is
    zero everywhere renders depth 0 with tail 1 and is flagged empty.
    """
    if as_ not in ("cubemap", "panorama"):
        raise ValueError('as_ must be "cubemap" or "panorama"')
    stack = torch.as_tensor(field.stack().astype(np.float64)).permute(0, 1, 4, 2, 3)
    delta = torch.as_tensor(plane_distances(field.planes, field.w))
    fdist = torch.as_tensor(face_plane_depths(field.planes, field.w))
    with torch.no_grad():
        depths, tails = [], []
        for i in range(6):
            planes4 = stack[i].permute(0, 2, 3, 1)
            _, dep, tail = composite_torch(
                planes4[..., :3], planes4[..., 3:], delta, fdist
            )
            depths.append(dep.numpy())
            tails.append(tail.numpy())
    depth = np.stack(depths)
    tail = np.stack(tails)
    empty = bool(np.all(tail > 1 - 1e-6))
    if as_ == "cubemap":
        return DepthExtraction(depth=depth, tail=tail, empty=empty)
    h, ww = out_hw if out_hw is not None else (2 * field.w, 4 * field.w)
    pano_depth = cubemap_to_erp(depth[..., None], h, ww)[..., 0]
    pano_tail = cubemap_to_erp(tail[..., None], h, ww)[..., 0]
    return DepthExtraction(depth=pano_depth, tail=pano_tail, empty=empty)
