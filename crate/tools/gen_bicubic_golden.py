#!/usr/bin/env python3
"""Golden-file generator for the bicubic resampler.

Independent numpy implementation of the Matlab `imresize` convention
(Keys cubic a = -0.5, half-pixel-centered mapping, antialiased kernel when
downscaling, border clamp, height axis first). The Rust resampler is tested
against these files; regenerate with:

    python3 tools/gen_bicubic_golden.py
"""

import os

import numpy as np

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "crates", "srsenet", "tests", "data")

SRC_W, SRC_H = 48, 32


def source_plane():
    x = np.arange(SRC_W)[None, :]
    y = np.arange(SRC_H)[:, None]
    v = (x * 7 + y * 13 + (x * y) // 3) % 256
    return v.astype(np.float64)


def cubic(x):
    x = np.abs(x)
    f = (1.5 * x**3 - 2.5 * x**2 + 1) * (x <= 1)
    f += (-0.5 * x**3 + 2.5 * x**2 - 4 * x + 2) * ((x > 1) & (x <= 2))
    return f


def contributions(in_len, out_len):
    scale = out_len / in_len
    kernel_width = 4.0 if scale >= 1 else 4.0 / scale
    x = np.arange(1, out_len + 1, dtype=np.float64)
    u = x / scale + 0.5 * (1 - 1 / scale)
    left = np.floor(u - kernel_width / 2)
    p = int(np.ceil(kernel_width)) + 2
    indices = left[:, None] + np.arange(p)
    if scale < 1:
        weights = scale * cubic(scale * (u[:, None] - indices))
    else:
        weights = cubic(u[:, None] - indices)
    weights /= weights.sum(axis=1, keepdims=True)
    indices = np.clip(indices, 1, in_len).astype(int) - 1
    return indices, weights


def resize_axis0(plane, out_len):
    indices, weights = contributions(plane.shape[0], out_len)
    return np.einsum("op,opw->ow", weights, plane[indices, :])


def imresize(plane, out_h, out_w):
    tmp = resize_axis0(plane, out_h)
    return resize_axis0(tmp.T, out_w).T


def quantize(plane):
    return np.clip(np.floor(plane + 0.5), 0, 255).astype(np.uint8)


def main():
    os.makedirs(OUT_DIR, exist_ok=True)
    src = source_plane()
    quantize(src).tofile(os.path.join(OUT_DIR, f"bicubic_src_{SRC_W}x{SRC_H}.raw"))
    cases = [
        ("down2", SRC_W // 2, SRC_H // 2),
        ("down4", SRC_W // 4, SRC_H // 4),
        ("down8", SRC_W // 8, SRC_H // 8),
        ("up2", SRC_W * 2, SRC_H * 2),
        ("up4", SRC_W * 4, SRC_H * 4),
        ("up8", SRC_W * 8, SRC_H * 8),
    ]
    for name, w, h in cases:
        out = quantize(imresize(src, h, w))
        path = os.path.join(OUT_DIR, f"bicubic_{name}_{w}x{h}.raw")
        out.tofile(path)
        print(f"{path}: {w}x{h}")


if __name__ == "__main__":
    main()
