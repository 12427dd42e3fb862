"""Build a small demo field for the live viewer check, no fitting involved.

Walls of an analytic box room are baked into the nearest plane of an MPI
stack, which is all the viewer needs: real parallax, real depth, fast
renders.  Usage: python scripts/make_demo_field.py OUTDIR [--w 64] [--d 8]
"""

import argparse

import numpy as np

from cubefield.field import field_from_stack, make_depth_planes, save_field
from cubefield.geometry import erp_to_cubemap
from cubefield.rendering import Pose
from cubefield.synthetic import BoxRoom, render_room_pano


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("outdir")
    ap.add_argument("--w", type=int, default=64)
    ap.add_argument("--d", type=int, default=8)
    args = ap.parse_args()

    room = BoxRoom(half_extents=(1.6, 1.5, 1.8), texture_frequency=4.0)
    pano, depth = render_room_pano(room, Pose.identity(), 2 * args.w, 4 * args.w)
    faces = erp_to_cubemap(pano, args.w)
    face_depth = erp_to_cubemap(depth[..., None], args.w)[..., 0]
    planes = make_depth_planes(1.3, 3.0, args.d)
    idx = np.clip(np.searchsorted(planes.z, face_depth), 0, args.d - 1)
    stack = np.zeros((6, args.d, args.w, args.w, 4))
    for b in range(args.d):
        hit = idx == b
        stack[:, b, ..., :3] = faces * hit[..., None]
        stack[:, b, ..., 3] = 50.0 * hit
    save_field(field_from_stack(stack, planes), args.outdir)
    print(f"demo field (w={args.w}, d={args.d}) written to {args.outdir}")


if __name__ == "__main__":
    main()
