"""Fusion stages that couple the six per-face MPIs into one cubic field.

Three stages, applied in order:

1. self_attention over the 16x16-patch tokens of all faces at each depth
   level, so faces exchange content before compositing.
2. cross_attention from those tokens into a token pyramid of the reference
   panorama (tokenize_erp), injecting global scene context.
3. padding_blend, a local 3x3 fusion over cube-padded point features that
   nudges (c, sigma) toward cross-border agreement.

Every stage carries a residual skip, so zeroing all weights makes the whole
pipeline the identity on the MPIs.  Weights are seeded-deterministic, not
trained; the optimizer can include them in the fit when asked to.

Attention math, per depth level: q = (z + pos) W_q, k = (z + pos) W_k,
v = z W_v, A = softmax(q k^T / sqrt(M)), out = FFN(A v) + z with a two-layer
ReLU FFN.  Positional embeddings come from the spherical embedding of each
token's center direction.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np
import torch

from .errors import DataError
from .field import (
    CubicField,
    EMBED_DIM,
    Mpi,
    face_pixel_angles,
    nerf_gamma,
    spherical_token_embedding,
)
from .geometry import FACES
from .rendering import cube_pad_stack

PATCH = 16
ERP_REDUCE = 32
M_FF = 2048
_ERP_CHANNELS = (16, 32, 64, 128, 256)
_PAD_HIDDEN = 8
_POINT_CHANNELS = 13


@dataclass
class TokenSequence:
    """d x N x M token tensor plus the token -> (tag, row, col) layout."""

    tokens: np.ndarray | torch.Tensor
    layout: tuple
    w: int

    @property
    def n(self) -> int:
        return self.tokens.shape[1]


def _face_layout(w: int) -> tuple:
    p = w // PATCH
    return tuple((name, pr, pc) for name in FACES for pr in range(p) for pc in range(p))


def tokenize_faces(mpis) -> TokenSequence:
    """Cut each face's (d, w, w, 4) planes into 1024-wide patch tokens.

    Accepts a CubicField or a {face: Mpi} dict.  Patches are 16x16,
    non-overlapping, flattened row-major with channels last; faces follow
    canonical order.  Token count N = 6 * (w/16)^2 per depth level.
    """
    if hasattr(mpis, "mpis"):
        mpis = mpis.mpis
    first = mpis[FACES[0]]
    arr0 = np.asarray(first.c)
    w = arr0.shape[1]
    d = arr0.shape[0]
    if w % PATCH:
        raise ValueError(f"face width {w} not divisible by {PATCH}")
    p = w // PATCH
    per_face = []
    for name in FACES:
        mpi = mpis[name]
        plane = np.concatenate([np.asarray(mpi.c), np.asarray(mpi.sigma)], axis=-1)
        tok = (
            plane.reshape(d, p, PATCH, p, PATCH, 4)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(d, p * p, EMBED_DIM)
        )
        per_face.append(tok)
    return TokenSequence(tokens=np.concatenate(per_face, axis=1), layout=_face_layout(w), w=w)


def detokenize_faces(seq: TokenSequence) -> dict:
    """Exact inverse of tokenize_faces: {face: (d, w, w, 4)} arrays."""
    w = seq.w
    if seq.layout != _face_layout(w):
        raise ValueError("token layout does not describe six faces of this width")
    p = w // PATCH
    tokens = np.asarray(seq.tokens)
    d = tokens.shape[0]
    out = {}
    for i, name in enumerate(FACES):
        tok = tokens[:, i * p * p : (i + 1) * p * p]
        out[name] = (
            tok.reshape(d, p, p, PATCH, PATCH, 4)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(d, w, w, 4)
        )
    return out


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------


@dataclass
class AttentionWeights:
    """Single-head attention projections plus a two-layer ReLU FFN."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    ffn1: np.ndarray
    b1: np.ndarray
    ffn2: np.ndarray
    b2: np.ndarray

    @classmethod
    def seeded(cls, seed: int, m: int = EMBED_DIM, m_ff: int = M_FF) -> "AttentionWeights":
        rng = np.random.default_rng(seed)
        lim = 1.0 / np.sqrt(m)
        lim_ff = 1.0 / np.sqrt(m_ff)
        u = lambda lo, shape: rng.uniform(-lo, lo, size=shape).astype(np.float32)
        return cls(
            w_q=u(lim, (m, m)),
            w_k=u(lim, (m, m)),
            w_v=u(lim, (m, m)),
            ffn1=u(lim, (m, m_ff)),
            b1=u(lim, (m_ff,)),
            ffn2=u(lim_ff, (m_ff, m)),
            b2=u(lim_ff, (m,)),
        )

    @classmethod
    def zeros(cls, m: int = EMBED_DIM, m_ff: int = M_FF) -> "AttentionWeights":
        z = np.zeros
        return cls(
            w_q=z((m, m), np.float32),
            w_k=z((m, m), np.float32),
            w_v=z((m, m), np.float32),
            ffn1=z((m, m_ff), np.float32),
            b1=z((m_ff,), np.float32),
            ffn2=z((m_ff, m), np.float32),
            b2=z((m,), np.float32),
        )


def _ffn(x: torch.Tensor, wts: AttentionWeights) -> torch.Tensor:
    t = lambda a: torch.as_tensor(a).to(x.dtype)
    return torch.relu(x @ t(wts.ffn1) + t(wts.b1)) @ t(wts.ffn2) + t(wts.b2)


def _attend(zq, pos_q, zkv, pos_kv, wts):
    """Shared attention core; zq (d,N,M), zkv (L,Ne,M) broadcast over d."""
    t = lambda a: torch.as_tensor(a).to(zq.dtype)
    m = zq.shape[-1]
    q = (zq + pos_q) @ t(wts.w_q)
    k = (zkv + pos_kv) @ t(wts.w_k)
    v = zkv @ t(wts.w_v)
    logits = q @ k.transpose(-1, -2) / np.sqrt(m)
    att = torch.softmax(logits, dim=-1)
    return _ffn(att @ v, wts) + zq, att


def self_attention(seq: TokenSequence, pos: np.ndarray, wts: AttentionWeights) -> TokenSequence:
    """Inter-face token mixing, independently at each depth level."""
    z, was_torch = _tok_tensor(seq.tokens)
    if pos.shape[0] != seq.n:
        raise ValueError("positional embeddings do not match token count")
    p = torch.as_tensor(pos).to(z.dtype)
    out, _ = _attend(z, p, z, p, wts)
    return TokenSequence(tokens=out if was_torch else out.numpy(), layout=seq.layout, w=seq.w)


def cross_attention(
    zq: TokenSequence, z_erp: TokenSequence, pos_c, pos_e, wts: AttentionWeights
) -> TokenSequence:
    """Pull panorama context into the face tokens (queries from the cube)."""
    z, was_torch = _tok_tensor(zq.tokens)
    e, e_torch = _tok_tensor(z_erp.tokens)
    e = e.to(z.dtype)
    if z.shape[-1] != e.shape[-1]:
        raise ValueError("token widths differ")
    pc = torch.as_tensor(pos_c).to(z.dtype)
    pe = torch.as_tensor(pos_e).to(z.dtype)
    out, _ = _attend(z, pc, e[0], pe, wts)  # ERP keys broadcast across levels
    return TokenSequence(
        tokens=out if (was_torch or e_torch) else out.numpy(), layout=zq.layout, w=zq.w
    )


def _tok_tensor(tokens):
    if isinstance(tokens, torch.Tensor):
        return tokens, True
    return torch.as_tensor(np.asarray(tokens)), False


def face_token_positions(w: int) -> np.ndarray:
    """Spherical embeddings of the face patch centers, ordered like tokenize_faces."""
    p = w // PATCH
    out = np.empty((6 * p * p, EMBED_DIM))
    idx = 0
    for name in FACES:
        for pr in range(p):
            for pc in range(p):
                u = (pc + 0.5) * PATCH
                v = (pr + 0.5) * PATCH
                theta, phi = face_pixel_angles(name, u, v, w)
                out[idx] = spherical_token_embedding(float(theta), float(phi))
                idx += 1
    return out


def erp_token_positions(height: int, width: int) -> np.ndarray:
    """Spherical embeddings of the 32x reduced panorama token centers."""
    from .geometry import erp_pixel_to_sphere

    hr, wr = height // ERP_REDUCE, width // ERP_REDUCE
    centers = []
    for tr in range(hr):
        for tc in range(wr):
            m = (tc + 0.5) * ERP_REDUCE
            n = (tr + 0.5) * ERP_REDUCE
            q = erp_pixel_to_sphere(np.array([m, n]), height, width)
            theta = np.arctan2(q[0], q[2])
            phi = np.arcsin(np.clip(q[1], -1, 1))
            centers.append(spherical_token_embedding(theta, phi))
    return np.stack(centers)


# ---------------------------------------------------------------------------
# panorama tokenizer
# ---------------------------------------------------------------------------


@dataclass
class ErpTokenizerWeights:
    """Five fixed 3x3 filters with 2x2 pooling, then a 1x1 projection to 1024."""

    kernels: tuple
    biases: tuple
    proj: np.ndarray
    proj_b: np.ndarray

    @classmethod
    def seeded(cls, seed: int, in_channels: int = 3) -> "ErpTokenizerWeights":
        rng = np.random.default_rng(seed)
        kernels, biases = [], []
        cin = in_channels
        for cout in _ERP_CHANNELS:
            lim = 1.0 / np.sqrt(9 * cin)
            kernels.append(rng.uniform(-lim, lim, size=(cout, cin, 3, 3)).astype(np.float32))
            biases.append(rng.uniform(-lim, lim, size=(cout,)).astype(np.float32))
            cin = cout
        lim = 1.0 / np.sqrt(cin)
        proj = rng.uniform(-lim, lim, size=(EMBED_DIM, cin)).astype(np.float32)
        proj_b = rng.uniform(-lim, lim, size=(EMBED_DIM,)).astype(np.float32)
        return cls(kernels=tuple(kernels), biases=tuple(biases), proj=proj, proj_b=proj_b)


def tokenize_erp(pano, wts: ErpTokenizerWeights) -> TokenSequence:
    """Reduce a panorama 32x into a single level of 1024-wide tokens.

    Each stage wraps horizontally (the panorama seam) and replicates
    vertically before its 3x3 filter, then average-pools 2x2.  A constant
    panorama therefore yields identical tokens.
    """
    arr = np.asarray(pano, dtype=np.float64)
    h, w = arr.shape[:2]
    if h % ERP_REDUCE or w % ERP_REDUCE:
        raise ValueError(f"panorama sides must be divisible by {ERP_REDUCE}")
    x = torch.as_tensor(arr).permute(2, 0, 1)[None]
    for kern, bias in zip(wts.kernels, wts.biases):
        x = torch.nn.functional.pad(x, (1, 1, 0, 0), mode="circular")
        x = torch.nn.functional.pad(x, (0, 0, 1, 1), mode="replicate")
        x = torch.nn.functional.conv2d(x, torch.as_tensor(kern).to(x.dtype), torch.as_tensor(bias).to(x.dtype))
        x = torch.nn.functional.avg_pool2d(x, 2)
    proj = torch.as_tensor(wts.proj).to(x.dtype)
    proj_b = torch.as_tensor(wts.proj_b).to(x.dtype)
    y = torch.einsum("nchw,mc->nmhw", x, proj) + proj_b[None, :, None, None]
    hr, wr = h // ERP_REDUCE, w // ERP_REDUCE
    tokens = y[0].permute(1, 2, 0).reshape(1, hr * wr, EMBED_DIM).numpy()
    layout = tuple(("erp", tr, tc) for tr in range(hr) for tc in range(wr))
    return TokenSequence(tokens=tokens, layout=layout, w=0)


# ---------------------------------------------------------------------------
# padding blend
# ---------------------------------------------------------------------------


@dataclass
class PaddingWeights:
    """3x3 fusion over cube-padded point features: conv + ReLU + linear readout."""

    conv: np.ndarray
    conv_b: np.ndarray
    readout: np.ndarray
    readout_b: np.ndarray

    @classmethod
    def diffusion(cls, rate: float = 0.5) -> "PaddingWeights":
        """Default weights: an exact signed 3x3 diffusion on (c, sigma).

        Paired ReLU units recover the signed quantity mean3x3 - center per
        channel, and the readout scales it by `rate`, so each blend step
        moves border pixels toward their cross-border neighborhood mean.
        """
        conv = np.zeros((_PAD_HIDDEN, _POINT_CHANNELS, 3, 3), np.float32)
        readout = np.zeros((4, _PAD_HIDDEN), np.float32)
        for ch in range(4):
            conv[2 * ch, ch] = 1.0 / 9.0
            conv[2 * ch, ch, 1, 1] -= 1.0
            conv[2 * ch + 1, ch] = -conv[2 * ch, ch]
            readout[ch, 2 * ch] = rate
            readout[ch, 2 * ch + 1] = -rate
        return cls(
            conv=conv,
            conv_b=np.zeros(_PAD_HIDDEN, np.float32),
            readout=readout,
            readout_b=np.zeros(4, np.float32),
        )

    @classmethod
    def seeded(cls, seed: int) -> "PaddingWeights":
        rng = np.random.default_rng(seed)
        lim = 1.0 / np.sqrt(9 * _POINT_CHANNELS)
        lim_r = 1.0 / np.sqrt(_PAD_HIDDEN)
        return cls(
            conv=rng.uniform(-lim, lim, size=(_PAD_HIDDEN, _POINT_CHANNELS, 3, 3)).astype(np.float32),
            conv_b=rng.uniform(-lim, lim, size=(_PAD_HIDDEN,)).astype(np.float32),
            readout=rng.uniform(-lim_r, lim_r, size=(4, _PAD_HIDDEN)).astype(np.float32),
            readout_b=rng.uniform(-lim_r, lim_r, size=(4,)).astype(np.float32),
        )

    @classmethod
    def zeros(cls) -> "PaddingWeights":
        return cls(
            conv=np.zeros((_PAD_HIDDEN, _POINT_CHANNELS, 3, 3), np.float32),
            conv_b=np.zeros(_PAD_HIDDEN, np.float32),
            readout=np.zeros((4, _PAD_HIDDEN), np.float32),
            readout_b=np.zeros(4, np.float32),
        )


def inverse_softplus(x: torch.Tensor) -> torch.Tensor:
    """y with softplus(y) = x, elementwise; x = 0 maps to -inf."""
    return x + torch.log(-torch.expm1(-x))


def _angle_features(w: int) -> np.ndarray:
    """Per-face (theta, phi) maps at pixel centers, shape (6, 2, w, w)."""
    centers = np.arange(w) + 0.5
    uu, vv = np.meshgrid(centers, centers, indexing="xy")
    out = np.empty((6, 2, w, w))
    for i, name in enumerate(FACES):
        theta, phi = face_pixel_angles(name, uu, vv, w)
        out[i, 0] = theta
        out[i, 1] = phi
    return out


def point_feature_maps(c_b: torch.Tensor, sigma_b: torch.Tensor, inv_z: float, angle_feat):
    """Stack the 13 point-feature channels for one plane, (6, 13, w, w).

    Channel order matches field.point_feature: c (3), sigma (1), theta, phi,
    1/z, then the single-frequency cos/sin encoding of those three angles.
    """
    dtype = c_b.dtype
    six, _, w, _ = c_b.shape
    ang = torch.as_tensor(angle_feat).to(dtype)
    invz = torch.as_tensor(inv_z, dtype=dtype).expand(six, 1, w, w)
    gam = torch.cat(
        [
            torch.cos(2 * np.pi * ang),
            torch.cos(2 * np.pi * invz),
            torch.sin(2 * np.pi * ang),
            torch.sin(2 * np.pi * invz),
        ],
        dim=1,
    )
    return torch.cat([c_b, sigma_b, ang, invz, gam], dim=1)


def padding_blend_core(
    chat: torch.Tensor, shat: torch.Tensor, planes_z, angle_feat: torch.Tensor, wts: PaddingWeights
):
    """Differentiable padding blend in unconstrained space.

    chat/shat: (6, d, 3|1, w, w) logit-radiance and inverse-softplus density.
    Returns updated (chat, shat) with the 3x3 fused residual added.
    """
    dtype = chat.dtype
    d = chat.shape[1]
    c = torch.sigmoid(chat)
    sigma = torch.nn.functional.softplus(shat)
    conv = torch.as_tensor(wts.conv).to(dtype)
    conv_b = torch.as_tensor(wts.conv_b).to(dtype)
    readout = torch.as_tensor(wts.readout).to(dtype)
    readout_b = torch.as_tensor(wts.readout_b).to(dtype)
    res_c = []
    res_s = []
    for b in range(d):
        feat = point_feature_maps(c[:, b], sigma[:, b], float(1.0 / planes_z[b]), angle_feat)
        padded = cube_pad_stack(feat)
        hidden = torch.relu(
            torch.nn.functional.conv2d(padded, conv, conv_b)
        )
        res = torch.einsum("nchw,rc->nrhw", hidden, readout) + readout_b[None, :, None, None]
        res_c.append(res[:, :3])
        res_s.append(res[:, 3:])
    res_c = torch.stack(res_c, dim=1)
    res_s = torch.stack(res_s, dim=1)
    return chat + res_c, shat + res_s


def padding_blend(field: CubicField, wts: PaddingWeights) -> CubicField:
    """Blend face borders through cube padding; returns a new field."""
    stack = field.stack().astype(np.float64)
    chat = torch.logit(torch.as_tensor(stack[..., :3])).permute(0, 1, 4, 2, 3)
    shat = inverse_softplus(torch.as_tensor(stack[..., 3:])).permute(0, 1, 4, 2, 3)
    angle_feat = torch.as_tensor(_angle_features(field.w))
    with torch.no_grad():
        chat2, shat2 = padding_blend_core(chat, shat, field.planes.z, angle_feat, wts)
        c = torch.sigmoid(chat2).permute(0, 1, 3, 4, 2).numpy()
        sigma = torch.nn.functional.softplus(shat2).permute(0, 1, 3, 4, 2).numpy()
    mpis = {
        name: Mpi(c=c[i], sigma=sigma[i]) for i, name in enumerate(FACES)
    }
    return CubicField(mpis=mpis, planes=field.planes, meta=dict(field.meta))


# ---------------------------------------------------------------------------
# full pipeline and checkpointing
# ---------------------------------------------------------------------------


@dataclass
class BlendWeights:
    """All blending parameters: self-attention, cross-attention, tokenizer, padding."""

    sa: AttentionWeights
    ca: AttentionWeights
    erp: ErpTokenizerWeights
    pad: PaddingWeights

    @classmethod
    def seeded(cls, seed: int) -> "BlendWeights":
        return cls(
            sa=AttentionWeights.seeded(seed),
            ca=AttentionWeights.seeded(seed + 1),
            erp=ErpTokenizerWeights.seeded(seed + 2),
            pad=PaddingWeights.diffusion(),
        )

    @classmethod
    def zeros(cls) -> "BlendWeights":
        return cls(
            sa=AttentionWeights.zeros(),
            ca=AttentionWeights.zeros(),
            erp=ErpTokenizerWeights.seeded(0),
            pad=PaddingWeights.zeros(),
        )


def blend_pipeline(field: CubicField, pano, weights: BlendWeights) -> CubicField:
    """Run all three fusion stages against a reference panorama."""
    seq = tokenize_faces(field)
    pos = face_token_positions(field.w)
    seq = self_attention(seq, pos, weights.sa)
    z_erp = tokenize_erp(pano, weights.erp)
    pos_e = erp_token_positions(np.asarray(pano).shape[0], np.asarray(pano).shape[1])
    seq = cross_attention(seq, z_erp, pos, pos_e, weights.ca)
    planes4 = detokenize_faces(seq)
    mpis = {
        name: Mpi(
            c=np.clip(arr[..., :3], 0.0, 1.0),
            sigma=np.clip(arr[..., 3:], 0.0, None),
        )
        for name, arr in planes4.items()
    }
    mixed = CubicField(mpis=mpis, planes=field.planes, meta=dict(field.meta))
    return padding_blend(mixed, weights.pad)


def _weight_items(weights: BlendWeights):
    for stage in dataclass_fields(weights):
        obj = getattr(weights, stage.name)
        for f in dataclass_fields(obj):
            val = getattr(obj, f.name)
            if isinstance(val, tuple):
                for i, item in enumerate(val):
                    yield f"{stage.name}.{f.name}.{i}", np.asarray(item)
            else:
                yield f"{stage.name}.{f.name}", np.asarray(val)


def save_blend_weights(weights: BlendWeights, path) -> None:
    """Single-file checkpoint: JSON manifest + little-endian float32 blobs."""
    entries = {}
    blobs = []
    offset = 0
    for key, arr in _weight_items(weights):
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries[key] = {"shape": list(arr.shape), "offset": offset}
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(entries).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_blend_weights(path) -> BlendWeights:
    """Read a checkpoint written by save_blend_weights."""
    try:
        with open(path, "rb") as fh:
            (hlen,) = struct.unpack("<I", fh.read(4))
            entries = json.loads(fh.read(hlen).decode())
            blob = fh.read()
    except (OSError, ValueError, struct.error, json.JSONDecodeError) as exc:
        raise DataError(f"unreadable blend checkpoint {path}: {exc}") from exc

    def pull(key):
        if key not in entries:
            raise DataError(f"checkpoint missing tensor {key!r}")
        meta = entries[key]
        count = int(np.prod(meta["shape"])) if meta["shape"] else 1
        start = meta["offset"]
        raw = blob[start : start + 4 * count]
        if len(raw) != 4 * count:
            raise DataError(f"checkpoint tensor {key!r} truncated")
        return np.frombuffer(raw, dtype="<f4").reshape(meta["shape"]).copy()

    def attention(stage):
        return AttentionWeights(
            w_q=pull(f"{stage}.w_q"),
            w_k=pull(f"{stage}.w_k"),
            w_v=pull(f"{stage}.w_v"),
            ffn1=pull(f"{stage}.ffn1"),
            b1=pull(f"{stage}.b1"),
            ffn2=pull(f"{stage}.ffn2"),
            b2=pull(f"{stage}.b2"),
        )

    n_stages = len(_ERP_CHANNELS)
    erp = ErpTokenizerWeights(
        kernels=tuple(pull(f"erp.kernels.{i}") for i in range(n_stages)),
        biases=tuple(pull(f"erp.biases.{i}") for i in range(n_stages)),
        proj=pull("erp.proj"),
        proj_b=pull("erp.proj_b"),
    )
    pad = PaddingWeights(
        conv=pull("pad.conv"),
        conv_b=pull("pad.conv_b"),
        readout=pull("pad.readout"),
        readout_b=pull("pad.readout_b"),
    )
    return BlendWeights(sa=attention("sa"), ca=attention("ca"), erp=erp, pad=pad)
