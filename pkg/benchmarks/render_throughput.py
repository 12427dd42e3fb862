"""Measure novel-view render throughput on CPU.

Builds a procedural field (no fitting) and times repeated renders at a few
output sizes, for both panorama and perspective outputs.  The interactive
viewer needs roughly 2 fps at 256x512 to feel responsive; this script tells
you how much headroom a machine has.

Usage: python benchmarks/render_throughput.py [--w 128] [--d 16] [--frames 20]
"""

import argparse
import time

import numpy as np
import torch

from cubefield.field import field_from_stack, make_depth_planes
from cubefield.geometry import panorama_to_perspective
from cubefield.rendering import Pose, render_novel_panorama
from cubefield.synthetic import BoxRoom, render_room_pano
from cubefield.geometry import erp_to_cubemap


def build_field(w: int, d: int):
    room = BoxRoom(half_extents=(1.6, 1.5, 1.8), texture_frequency=3.0)
    pano, depth = render_room_pano(room, Pose.identity(), 2 * w, 4 * w)
    faces = erp_to_cubemap(pano, w)
    # one mostly-opaque plane near the wall depth per texel keeps the field
    # realistic without running the optimizer
    planes = make_depth_planes(1.3, 3.0, d)
    face_depth = erp_to_cubemap(depth[..., None], w)[..., 0]
    stack = np.zeros((6, d, w, w, 4))
    idx = np.clip(
        np.searchsorted(planes.z, face_depth), 0, d - 1
    )  # (6, w, w) plane index nearest each texel depth
    for b in range(d):
        hit = idx == b
        stack[:, b, ..., :3] = faces * hit[..., None]
        stack[:, b, ..., 3] = 50.0 * hit
    return field_from_stack(stack, planes)


def time_renders(field, out_hw, frames, rng):
    poses = []
    for _ in range(frames):
        t = rng.uniform(-0.3, 0.3, size=3)
        poses.append(Pose(R=np.eye(3), t=t))
    start = time.perf_counter()
    for pose in poses:
        render_novel_panorama(field, pose, out_hw)
    return frames / (time.perf_counter() - start)


def time_perspective(field, side, fov, frames, rng):
    pano_hw = (2 * field.w, 4 * field.w)
    start = time.perf_counter()
    for _ in range(frames):
        t = rng.uniform(-0.3, 0.3, size=3)
        out = render_novel_panorama(field, Pose(R=np.eye(3), t=t), pano_hw)
        panorama_to_perspective(out.image, fov, side, side)
    return frames / (time.perf_counter() - start)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--w", type=int, default=128, help="face width")
    ap.add_argument("--d", type=int, default=16, help="plane count")
    ap.add_argument("--frames", type=int, default=20, help="frames per timing")
    args = ap.parse_args()

    torch.set_num_threads(1)
    rng = np.random.default_rng(0)
    field = build_field(args.w, args.d)
    print(f"field w={args.w} d={args.d}, single thread")
    for hw in ((128, 256), (256, 512), (512, 1024)):
        fps = time_renders(field, hw, args.frames, rng)
        print(f"panorama {hw[0]}x{hw[1]}: {fps:6.2f} fps")
    fps = time_perspective(field, 256, 90.0, args.frames, rng)
    print(f"perspective 256x256 (fov 90): {fps:6.2f} fps")


if __name__ == "__main__":
    main()
