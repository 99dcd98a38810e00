"""Tile maps and the multi-resolution Innovation Capacity (IC) metric.

A tile map records, for every synthesis pixel, the exemplar position of the
patch it matches best.  Where a synthesis region is a verbatim copy, the
map advances in lock-step with the pixel grid; IC counts the neighbour pairs
where it does not.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import image as im
from .transport import DEFAULT_SLICE_BYTES, augment, nn_match

# 3x3 neighbourhood without its centre
NEIGHBOR_OFFSETS = tuple((dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0))


@dataclass
class TileMap:
    """``indices[r, c]`` is the row-major exemplar patch index matched at ``(r, c)``."""

    indices: np.ndarray
    exemplar_shape: tuple[int, int]

    def coords(self):
        """Exemplar ``(rows, cols)`` arrays for every synthesis pixel."""
        return np.divmod(self.indices, self.exemplar_shape[1])


@dataclass
class ICReport:
    per_scale: list[float]
    patch_side: int

    @property
    def num_scales(self) -> int:
        return len(self.per_scale) - 1

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_scale))

    def format(self) -> str:
        lines = [f"# innovation capacity  J={self.num_scales}  patch={self.patch_side}"]
        lines += [f"scale {j}: {v:.4f}" for j, v in enumerate(self.per_scale)]
        lines.append(f"mean: {self.mean:.4f}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scale", "ic"])
            for j, v in enumerate(self.per_scale):
                w.writerow([j, f"{v:.6f}"])
            w.writerow(["mean", f"{self.mean:.6f}"])


def tile_map(x_j: np.ndarray, y_j: np.ndarray, b: int,
             slice_bytes: int = DEFAULT_SLICE_BYTES) -> TileMap:
    """Full nearest-neighbour field from ``y_j`` patches to ``x_j`` patches."""
    X = im.patchify(x_j, b, 1.0)
    Y = im.patchify(y_j, b, 1.0)
    m = nn_match(augment(X.data), augment(Y.data), slice_bytes)
    return TileMap(m.forward.reshape(y_j.shape[:2]), tuple(x_j.shape[:2]))


def untiled_fraction(tm: TileMap) -> float:
    """Fraction of (pixel, neighbour) pairs whose matches are not adjacent in the exemplar.

    A pair ``(q, q + o)`` is tiled when the match of ``q + o`` sits exactly at
    offset ``o`` from the match of ``q``, with both offsets wrapped
    periodically and compared as 2-D displacements.
    """
    hx, wx = tm.exemplar_shape
    rows, cols = tm.coords()
    untiled = 0
    for dr, dc in NEIGHBOR_OFFSETS:
        nr = np.roll(rows, (-dr, -dc), axis=(0, 1))
        nc = np.roll(cols, (-dr, -dc), axis=(0, 1))
        tiled = ((nr - rows - dr) % hx == 0) & ((nc - cols - dc) % wx == 0)
        untiled += int(np.count_nonzero(~tiled))
    return untiled / (len(NEIGHBOR_OFFSETS) * rows.size)


def innovation_capacity(x: np.ndarray, y: np.ndarray, J: int = 4, b: int = 4,
                        slice_bytes: int = DEFAULT_SLICE_BYTES) -> ICReport:
    """Mean untiled fraction of the tile maps at scales ``0..J``."""
    values = []
    for j in range(J + 1):
        tm = tile_map(im.downsample(x, j), im.downsample(y, j), b, slice_bytes)
        values.append(untiled_fraction(tm))
    return ICReport(values, b)


def tile_map_render(tm: TileMap) -> np.ndarray:
    """Colour each pixel by its source position: ``(row / H, col / W, 0.5)``."""
    hx, wx = tm.exemplar_shape
    rows, cols = tm.coords()
    out = np.empty(tm.indices.shape + (3,), dtype=np.float32)
    out[..., 0] = rows / hx
    out[..., 1] = cols / wx
    out[..., 2] = 0.5
    return out
