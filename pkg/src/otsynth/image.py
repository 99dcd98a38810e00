"""Images, pyramids and the periodic patch operator.

Images are plain ``numpy`` arrays of shape ``(H, W, 3)`` holding values in
``[0, 1]``.  They are stored as ``float32``; every reduction in this module
accumulates in ``float64`` before the result is clamped and cast back.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DegenerateScaleError, InvalidTargetError

IMAGE_DTYPE = np.float32


def as_image(arr) -> np.ndarray:
    """Validate ``arr`` as an ``(H, W, 3)`` image and return a float32 copy clamped to [0, 1]."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ConfigError(f"expected an (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ConfigError(f"image must be at least 1x1, got {img.shape[:2]}")
    if not np.all(np.isfinite(img)):
        raise ConfigError("image contains non-finite values")
    return np.clip(img, 0.0, 1.0).astype(IMAGE_DTYPE)


def _store(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0).astype(IMAGE_DTYPE)


# ---------------------------------------------------------------------------
# pyramid
# ---------------------------------------------------------------------------

def scale_dims(h: int, w: int, j: int) -> tuple[int, int]:
    """Dimensions of an ``h x w`` image at resolution ``2**-j`` (floored per octave)."""
    if j < 0:
        raise ConfigError(f"scale index must be >= 0, got {j}")
    # floor(floor(h/2)/2) == floor(h/4), so iterating per octave equals one floor
    hj, wj = h >> j, w >> j
    if hj < 1 or wj < 1:
        raise DegenerateScaleError(
            f"{h}x{w} image has no pixels at scale {j} ({hj}x{wj})")
    return hj, wj


@dataclass(frozen=True)
class PyramidSpec:
    """Number of scales below the original resolution.

    Scales run ``j = num_scales, ..., 0``; scale 0 is the input size.
    """

    num_scales: int

    def __post_init__(self):
        if self.num_scales < 0:
            raise ConfigError("num_scales must be non-negative")

    def dims(self, h: int, w: int) -> list[tuple[int, int]]:
        return [scale_dims(h, w, j) for j in range(self.num_scales + 1)]


def downsample(img: np.ndarray, j: int) -> np.ndarray:
    """Return ``img`` at resolution ``2**-j``.

    Each octave averages non-overlapping 2x2 blocks; an odd trailing row or
    column is dropped, giving ``floor(dim / 2)`` per octave.
    """
    h, w = img.shape[:2]
    scale_dims(h, w, j)
    out = np.asarray(img, dtype=np.float64)
    for _ in range(j):
        h2, w2 = out.shape[0] // 2, out.shape[1] // 2
        out = out[: 2 * h2, : 2 * w2]
        out = 0.25 * (out[0::2, 0::2] + out[1::2, 0::2] + out[0::2, 1::2] + out[1::2, 1::2])
    return _store(out)


def _linear_weights(n_in: int, n_out: int):
    # half-pixel centres, clamped at the borders
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def bilinear(img: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear resize in float64 without clamping."""
    src = np.asarray(img, dtype=np.float64)
    h, w = src.shape[:2]
    lo, hi, f = _linear_weights(h, target_h)
    rows = src[lo] * (1.0 - f)[:, None, None] + src[hi] * f[:, None, None]
    lo, hi, f = _linear_weights(w, target_w)
    return rows[:, lo] * (1.0 - f)[None, :, None] + rows[:, hi] * f[None, :, None]


def upsample(img: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear interpolation of ``img`` to ``(target_h, target_w)``."""
    h, w = img.shape[:2]
    if target_h < h or target_w < w:
        raise InvalidTargetError(
            f"upsample target {target_h}x{target_w} is smaller than source {h}x{w}")
    return _store(bilinear(img, target_h, target_w))


def blend_with_coarse(y_fine: np.ndarray, y_coarse: np.ndarray, weight: float = 0.5) -> np.ndarray:
    """``(1 - weight) * y_fine + weight * upsample(y_coarse)``."""
    if not 0.0 <= weight <= 1.0:
        raise ConfigError(f"blend weight must lie in [0, 1], got {weight}")
    if weight == 0.0:
        return np.array(y_fine, dtype=IMAGE_DTYPE)
    h, w = y_fine.shape[:2]
    up = upsample(y_coarse, h, w).astype(np.float64)
    return _store((1.0 - weight) * np.asarray(y_fine, dtype=np.float64) + weight * up)


def init_noise(h: int, w: int, seed) -> np.ndarray:
    """I.i.d. uniform [0, 1) image, reproducible for a given seed."""
    if h < 1 or w < 1:
        raise ConfigError(f"noise dims must be positive, got {h}x{w}")
    rng = np.random.default_rng(seed)
    return rng.random((h, w, 3)).astype(IMAGE_DTYPE)


# ---------------------------------------------------------------------------
# patch operator
# ---------------------------------------------------------------------------

@dataclass
class PatchMatrix:
    """Row-stacked ``b x b x 3`` patches of a periodically extended image.

    Attributes
    ----------
    data : ndarray, shape (n, 3 * b * b)
        Flattened patches in ``(row, col, channel)`` order, float64.
    origins : ndarray of int, shape (n, 2)
        Top-left ``(row, col)`` of every patch in the source image.
    patch_side : int
    shape : (int, int)
        ``(H, W)`` of the source image.
    """

    data: np.ndarray
    origins: np.ndarray
    patch_side: int
    shape: tuple[int, int]

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    def linear_origins(self) -> np.ndarray:
        return self.origins[:, 0] * self.shape[1] + self.origins[:, 1]


def _window_indices(origins: np.ndarray, b: int, h: int, w: int):
    off = np.arange(b)
    rr = (origins[:, 0, None] + off[None, :]) % h
    cc = (origins[:, 1, None] + off[None, :]) % w
    return rr[:, :, None], cc[:, None, :]


def patches_at(img: np.ndarray, b: int, origins: np.ndarray) -> np.ndarray:
    """Flattened ``b x b x 3`` windows of ``img`` at the given origins (periodic)."""
    h, w = img.shape[:2]
    rr, cc = _window_indices(np.asarray(origins), b, h, w)
    return np.asarray(img, dtype=np.float64)[rr, cc].reshape(len(origins), 3 * b * b)


def sample_origins(h: int, w: int, subsample_fraction: float = 1.0, seed=None) -> np.ndarray:
    """Patch origins, either every pixel or a uniform subset without replacement."""
    if not 0.0 < subsample_fraction <= 1.0:
        raise ConfigError(f"subsample fraction must lie in (0, 1], got {subsample_fraction}")
    n = h * w
    if subsample_fraction == 1.0:
        flat = np.arange(n)
    else:
        k = max(1, int(round(subsample_fraction * n)))
        rng = np.random.default_rng(seed)
        flat = np.sort(rng.choice(n, size=k, replace=False))
    return np.stack(np.divmod(flat, w), axis=1)


def patchify(img: np.ndarray, b: int, subsample_fraction: float = 1.0, seed=None) -> PatchMatrix:
    """Extract ``b x b`` patches with one origin per pixel (or a random subset).

    With ``subsample_fraction < 1`` the subset has ``round(fraction * H * W)``
    origins drawn without replacement, in row-major order.
    """
    if b < 1:
        raise ConfigError(f"patch side must be >= 1, got {b}")
    h, w = img.shape[:2]
    origins = sample_origins(h, w, subsample_fraction, seed)
    return PatchMatrix(patches_at(img, b, origins), origins, b, (h, w))


def patch_adjoint(data: np.ndarray, origins: np.ndarray, b: int, h: int, w: int):
    """Scatter-add patch rows back onto an ``h x w`` grid.

    Returns ``(sums, counts)`` where ``sums`` has shape ``(h, w, 3)`` and
    ``counts`` ``(h, w)``.  ``sums`` alone is the adjoint of :func:`patches_at`.
    """
    origins = np.asarray(origins)
    rr, cc = _window_indices(origins, b, h, w)
    lin = (rr * w + cc).reshape(-1)
    vals = np.asarray(data, dtype=np.float64).reshape(-1, 3)
    sums = np.empty((h * w, 3))
    for ch in range(3):
        sums[:, ch] = np.bincount(lin, weights=vals[:, ch], minlength=h * w)
    counts = np.bincount(lin, minlength=h * w).astype(np.float64)
    return sums.reshape(h, w, 3), counts.reshape(h, w)


def fold(patches: PatchMatrix, target_h: int, target_w: int, fallback=None) -> np.ndarray:
    """Re-average patch rows into an image.

    Every covered pixel becomes the uniform mean of the patch entries landing
    on it.  Uncovered pixels take their value from ``fallback`` (zero when no
    fallback is given).
    """
    sums, counts = patch_adjoint(patches.data, patches.origins, patches.patch_side,
                                 target_h, target_w)
    covered = counts > 0
    out = np.zeros((target_h, target_w, 3))
    out[covered] = sums[covered] / counts[covered][:, None]
    if fallback is not None and not covered.all():
        out[~covered] = np.asarray(fallback, dtype=np.float64)[~covered]
    return _store(out)


# ---------------------------------------------------------------------------
# PNG i/o
# ---------------------------------------------------------------------------

def read_png(path) -> np.ndarray:
    """Read an image file as an ``(H, W, 3)`` float32 array in [0, 1]."""
    with Image.open(Path(path)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr.astype(IMAGE_DTYPE)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, img: np.ndarray) -> None:
    """Write an 8-bit RGB PNG."""
    Image.fromarray(to_uint8(img), mode="RGB").save(Path(path), format="PNG")
