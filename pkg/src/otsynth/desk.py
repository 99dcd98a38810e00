"""Procedural periodic textures used as a small, reproducible exemplar corpus."""
import numpy as np

from .image import as_image


def _smooth_noise(rng, h, w, sigma):
    # periodic Gaussian low-pass of white noise, normalised to [0, 1]
    f = np.fft.fft2(rng.standard_normal((h, w)))
    ky = np.fft.fftfreq(h)[:, None]
    kx = np.fft.fftfreq(w)[None, :]
    f *= np.exp(-2.0 * (np.pi * sigma) ** 2 * (kx**2 + ky**2))
    field = np.real(np.fft.ifft2(f))
    field -= field.min()
    return field / max(field.max(), 1e-12)


def _fractal_noise(rng, h, w, slope=1.0):
    # periodic noise with amplitude spectrum ~ 1 / f**slope, normalised to [0, 1]
    f = np.fft.fft2(rng.standard_normal((h, w)))
    k = np.hypot(np.fft.fftfreq(h)[:, None], np.fft.fftfreq(w)[None, :])
    k[0, 0] = 1.0
    f *= k ** -slope
    f[0, 0] = 0.0
    field = np.real(np.fft.ifft2(f))
    field -= field.min()
    return field / max(field.max(), 1e-12)


def blobs(h=64, w=64, seed=0):
    """Soft coloured blobs, like lichen or stains."""
    rng = np.random.default_rng(seed)
    a = _fractal_noise(rng, h, w, 1.2)
    b = _fractal_noise(rng, h, w, 1.0)
    img = np.stack([0.2 + 0.7 * a, 0.15 + 0.6 * a * b, 0.3 + 0.5 * (1 - b) * a], axis=-1)
    return as_image(img)


def cells(h=64, w=64, seed=1, n_cells=24):
    """Periodic Voronoi cells with dark borders and per-cell colour."""
    rng = np.random.default_rng(seed)
    pts = rng.random((n_cells, 2)) * [h, w]
    colours = 0.25 + 0.7 * rng.random((n_cells, 3))
    rr, cc = np.mgrid[0:h, 0:w]
    d = []
    for py, px in pts:
        dy = np.abs(rr - py)
        dx = np.abs(cc - px)
        dy = np.minimum(dy, h - dy)
        dx = np.minimum(dx, w - dx)
        d.append(np.hypot(dy, dx))
    d = np.stack(d)
    order = np.sort(d, axis=0)
    nearest = d.argmin(axis=0)
    edge = np.clip((order[1] - order[0]) / 2.0, 0.0, 1.0)
    grain = _fractal_noise(rng, h, w, 0.8)
    img = colours[nearest] * (0.35 + 0.65 * edge)[..., None] * (0.8 + 0.2 * grain)[..., None]
    return as_image(img)


def weave(h=64, w=64, seed=2):
    """Warped stripes with fine grain."""
    rng = np.random.default_rng(seed)
    rr, cc = np.mgrid[0:h, 0:w]
    warp = _smooth_noise(rng, h, w, 4.0)
    grain = _fractal_noise(rng, h, w, 0.8)
    phase = 2 * np.pi * (3 * cc / w + 2 * rr / h) + 4.0 * warp
    s = 0.5 + 0.5 * np.sin(phase)
    t = 0.5 + 0.5 * np.sin(2 * np.pi * 5 * rr / h + 3.0 * warp)
    img = np.stack([0.15 + 0.6 * s + 0.2 * grain,
                    0.1 + 0.4 * s * t + 0.3 * grain,
                    0.2 + 0.5 * t], axis=-1)
    return as_image(img)


def corpus(h=64, w=64):
    """The three desk exemplars, keyed by name."""
    return {"blobs": blobs(h, w), "cells": cells(h, w), "weave": weave(h, w)}
