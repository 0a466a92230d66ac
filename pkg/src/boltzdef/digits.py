"""Procedural handwritten-digit stand-in corpus.

Renders digit glyphs as jittered polyline strokes on a 28x28 grid and
writes standard IDX pairs, so the full pipeline can run offline when no
real MNIST files are available. Not a benchmark dataset substitute for
reporting purposes; a deterministic fixture for tests and demos.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, write_idx


def _oval(cx, cy, rx, ry, n=14, start=0.0):
    t = np.linspace(start, start + 2 * np.pi, n)
    return list(zip(cx + rx * np.sin(t), cy - ry * np.cos(t)))


# polyline control points per digit, unit square, y pointing down
_GLYPHS: dict[int, list[list[tuple[float, float]]]] = {
    0: [_oval(0.5, 0.5, 0.21, 0.3)],
    1: [[(0.4, 0.32), (0.56, 0.18), (0.56, 0.82)]],
    2: [[(0.31, 0.33), (0.37, 0.22), (0.5, 0.18), (0.63, 0.22), (0.69, 0.33),
         (0.62, 0.47), (0.31, 0.8), (0.72, 0.8)]],
    3: [[(0.33, 0.25), (0.46, 0.18), (0.6, 0.22), (0.65, 0.32), (0.58, 0.43),
         (0.47, 0.48)],
        [(0.47, 0.48), (0.62, 0.53), (0.68, 0.64), (0.61, 0.76), (0.45, 0.82),
         (0.32, 0.75)]],
    4: [[(0.56, 0.2), (0.29, 0.6), (0.75, 0.6)], [(0.62, 0.26), (0.62, 0.82)]],
    5: [[(0.68, 0.2), (0.35, 0.2), (0.33, 0.47), (0.5, 0.44), (0.64, 0.5),
         (0.68, 0.63), (0.6, 0.77), (0.43, 0.82), (0.31, 0.74)]],
    6: [[(0.62, 0.19), (0.46, 0.3), (0.35, 0.47), (0.33, 0.65), (0.42, 0.79),
         (0.58, 0.8), (0.67, 0.68), (0.63, 0.55), (0.47, 0.52), (0.35, 0.62)]],
    7: [[(0.3, 0.2), (0.7, 0.2), (0.46, 0.82)]],
    8: [_oval(0.5, 0.34, 0.16, 0.15), _oval(0.5, 0.66, 0.19, 0.17)],
    9: [_oval(0.52, 0.36, 0.17, 0.17),
        [(0.69, 0.36), (0.66, 0.6), (0.55, 0.82)]],
}


def _segment_distance(px, py, p, q):
    """Distance from every pixel center to segment p-q."""
    vx, vy = q[0] - p[0], q[1] - p[1]
    denom = vx * vx + vy * vy
    if denom == 0.0:
        return np.hypot(px - p[0], py - p[1])
    t = np.clip(((px - p[0]) * vx + (py - p[1]) * vy) / denom, 0.0, 1.0)
    return np.hypot(px - (p[0] + t * vx), py - (p[1] + t * vy))


def render_digit(label: int, rng: np.random.Generator, size: int = 28) -> np.ndarray:
    """Rasterize one jittered glyph; returns a flat [0,1] pixel vector."""
    strokes = _GLYPHS[label]
    scale = rng.uniform(0.82, 1.12)
    angle = rng.uniform(-0.18, 0.18)
    shear = rng.uniform(-0.15, 0.15)
    tx, ty = rng.uniform(-0.06, 0.06, size=2)
    rot = np.array([[np.cos(angle), -np.sin(angle)],
                    [np.sin(angle), np.cos(angle)]])
    aff = rot @ np.array([[scale, shear * scale], [0.0, scale]])

    coords = (np.arange(size) + 0.5) / size
    px, py = np.meshgrid(coords, coords)
    canvas = np.zeros((size, size))
    half_width = rng.uniform(0.045, 0.062)
    soft = 0.035
    for stroke in strokes:
        pts = np.asarray(stroke) - 0.5
        pts = pts @ aff.T + 0.5 + np.array([tx, ty])
        pts += rng.normal(0.0, 0.008, size=pts.shape)
        for p, q in zip(pts, pts[1:]):
            d = _segment_distance(px, py, p, q)
            canvas = np.maximum(canvas, np.clip((half_width + soft - d) / soft, 0, 1))
    canvas += rng.normal(0.0, 0.02, size=canvas.shape)
    return np.clip(canvas, 0.0, 1.0).ravel()


def make_digits(n: int, seed: int, size: int = 28) -> Dataset:
    """A deterministic n-item corpus with uniformly random labels."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n)
    pixels = np.stack([render_digit(int(y), rng, size) for y in labels])
    # snap to the byte grid so IDX round trips are exact
    pixels = np.round(pixels * 255.0) / 255.0
    return Dataset(pixels, labels, size, size, num_classes=10)


def write_digits_idx(n: int, seed: int, image_path, label_path) -> Dataset:
    ds = make_digits(n, seed)
    write_idx(ds, image_path, label_path)
    return ds
