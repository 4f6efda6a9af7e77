"""Regenerate the bundled fixture images and point-cloud CSVs.

The content image is a simple geometric scene; the style image is the same
scene recolored into a dark concentrated palette with a stroke texture, so
the pair shares spatial structure while differing in style. Everything is
seeded and deterministic.
"""

import pathlib

import numpy as np
from PIL import Image

HERE = pathlib.Path(__file__).resolve().parent


def main():
    rng = np.random.default_rng(42)
    h = w = 64
    yy, xx = np.mgrid[0:h, 0:w] / h

    content = np.zeros((h, w, 3))
    content[..., 0] = yy
    content[..., 1] = 0.3
    content[..., 2] = xx
    content[12:36, 12:36] = [0.9, 0.9, 0.2]
    mask = (np.mgrid[0:h, 0:w][0] - 44) ** 2 + (np.mgrid[0:h, 0:w][1] - 44) ** 2 < 144
    content[mask] = [0.1, 0.8, 0.8]
    content = np.clip(content, 0, 1)
    Image.fromarray((content * 255).round().astype(np.uint8)).save(HERE / "content.png")

    r, g, b = content[..., 0], content[..., 1], content[..., 2]
    accent = (r > 0.8) & (g > 0.8)
    style = np.zeros_like(content)
    style[..., 0] = 0.05 + 0.18 * b + 0.5 * accent
    style[..., 1] = 0.08 + 0.15 * r + 0.45 * accent
    style[..., 2] = 0.30 + 0.35 * r - 0.15 * accent
    strokes = 0.08 * np.sin(18 * xx + 7 * np.sin(9 * yy))
    style += strokes[..., None] * np.array([0.4, 0.6, 1.0])
    style += 0.03 * rng.standard_normal((h, w, 3))
    style = np.clip(style, 0, 1)
    Image.fromarray((style * 255).round().astype(np.uint8)).save(HERE / "style.png")

    np.savetxt(HERE / "ones_n4.csv", np.ones((4, 4)), delimiter=",")
    np.savetxt(HERE / "negones_n4.csv", -np.ones((4, 4)), delimiter=",")


if __name__ == "__main__":
    main()
