"""Texture synthesis by matching gram matrices of random rectified filters.

A single periodic convolution with a fixed Gaussian filter bank, a ReLU and a
gram matrix; the synthesis is optimised with L-BFGS to match the exemplar's
gram matrix, one resolution at a time.

The convolution is written through the patch operator: with top-left
anchored periodic windows, ``conv(y, W) = patches(y) @ W`` and its adjoint is
the scatter-add of :func:`otsynth.image.patch_adjoint`.  Feature maps are
processed in chunks of pixels whose size is set by ``slice_bytes``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import image as im
from .errors import ConfigError
from .optim import lbfgs
from .transport import DEFAULT_SLICE_BYTES, rows_per_block


@dataclass
class FilterBank:
    """``weights`` has shape ``(b, b, 3, K)``."""

    weights: np.ndarray

    @property
    def side(self) -> int:
        return self.weights.shape[0]

    @property
    def count(self) -> int:
        return self.weights.shape[3]

    def matrix(self) -> np.ndarray:
        # row order matches the (row, col, channel) flattening of patches
        return self.weights.reshape(-1, self.count)


def make_filter_bank(K: int = 256, b: int = 4, seed=0) -> FilterBank:
    if K < 1 or b < 1:
        raise ConfigError(f"need K >= 1 and b >= 1, got K={K}, b={b}")
    rng = np.random.default_rng(seed)
    return FilterBank(rng.standard_normal((b, b, 3, K)))


def _chunks(h, w, fb, slice_bytes):
    n = h * w
    step = rows_per_block(slice_bytes, fb.count + 3 * fb.side**2)
    flat = np.arange(n)
    for s in range(0, n, step):
        yield np.stack(np.divmod(flat[s:s + step], w), axis=1)


def _gram(img, fb, slice_bytes):
    h, w = img.shape[:2]
    wm = fb.matrix()
    g = np.zeros((fb.count, fb.count))
    for origins in _chunks(h, w, fb, slice_bytes):
        z = im.patches_at(img, fb.side, origins) @ wm
        np.maximum(z, 0.0, out=z)
        g += z.T @ z
    return g / (h * w)


def gram_features(img: np.ndarray, fb: FilterBank, slice_bytes: int = DEFAULT_SLICE_BYTES) -> np.ndarray:
    """Normalised gram matrix ``relu(z).T @ relu(z) / (H * W)`` of the filter responses."""
    return _gram(img, fb, slice_bytes)


def gram_loss_grad(y: np.ndarray, G_x: np.ndarray, fb: FilterBank,
                   slice_bytes: int = DEFAULT_SLICE_BYTES):
    """Loss ``||G_y - G_x||_F^2`` and its gradient with respect to ``y``.

    With ``R = relu(P(y) W)`` and ``G_y = R^T R / n`` the chain rule gives
    ``dL/dR = (4 / n) R (G_y - G_x)``; the ReLU mask, ``W^T`` and the patch
    adjoint carry it back to pixels.
    """
    y = np.asarray(y, dtype=np.float64)
    h, w = y.shape[:2]
    n = h * w
    G_y = _gram(y, fb, slice_bytes)
    D = G_y - G_x
    loss = float(np.sum(D * D))
    wm = fb.matrix()
    grad = np.zeros((h, w, 3))
    for origins in _chunks(h, w, fb, slice_bytes):
        z = im.patches_at(y, fb.side, origins) @ wm
        np.maximum(z, 0.0, out=z)
        dz = (4.0 / n) * (z @ D)
        dz[z <= 0.0] = 0.0
        sums, _ = im.patch_adjoint(dz @ wm.T, origins, fb.side, h, w)
        grad += sums
    return loss, grad


@dataclass
class GramTrace:
    """Per-scale loss history; ``noise_loss`` is the loss of fresh uniform noise."""

    scales: list[int] = field(default_factory=list)
    losses: list[list[float]] = field(default_factory=list)
    noise_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    fallbacks: list[int] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("scale,iteration,loss,noise_loss,seconds\n")
            for j, losses, ref, sec in zip(self.scales, self.losses, self.noise_loss, self.seconds):
                for it, v in enumerate(losses):
                    fh.write(f"{j},{it},{v!r},{ref!r},{sec:.6f}\n")


def gram_synthesize(exemplar: np.ndarray, K: int = 256, steps: int = 500, J: int = 4, seed=0,
                    b: int = 4, output_shape=None, slice_bytes: int = DEFAULT_SLICE_BYTES):
    """Coarse-to-fine gram-loss synthesis.

    Each scale starts a new optimisation from the upsampled previous result
    (uniform noise at the coarsest scale).  Pixels are left unconstrained
    while optimising and clamped to [0, 1] only in the returned image.

    Returns
    -------
    y : ndarray, shape (H, W, 3), float32
    trace : GramTrace
    """
    x = im.as_image(exemplar)
    out_h, out_w = output_shape or x.shape[:2]
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    x_dims = [im.scale_dims(*x.shape[:2], j) for j in range(J + 1)]
    y_dims = [im.scale_dims(out_h, out_w, j) for j in range(J + 1)]
    if min(x_dims[J]) < b:
        raise ConfigError(f"exemplar is smaller than the filter side {b} at scale {J}")
    rng = np.random.default_rng(seed)
    fb = make_filter_bank(K, b, rng.integers(2**63))
    trace = GramTrace()
    y = None
    for j in range(J, -1, -1):
        t0 = time.perf_counter()
        h, w = y_dims[j]
        G_x = _gram(im.downsample(x, j), fb, slice_bytes)
        noise = im.init_noise(h, w, rng.integers(2**63))
        y0 = noise.astype(np.float64) if y is None else im.bilinear(y, h, w)

        def fun_grad(v):
            loss, g = gram_loss_grad(v.reshape(h, w, 3), G_x, fb, slice_bytes)
            return loss, g.ravel()

        res = lbfgs(fun_grad, y0.ravel(), max_steps=steps)
        y = res.x.reshape(h, w, 3)
        trace.scales.append(j)
        trace.losses.append(res.losses)
        trace.noise_loss.append(gram_loss_grad(noise, G_x, fb, slice_bytes)[0])
        trace.seconds.append(time.perf_counter() - t0)
        trace.fallbacks.append(res.fallbacks)
    return im.as_image(y), trace
