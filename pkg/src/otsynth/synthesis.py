"""Coarse-to-fine patch synthesis driven by a pluggable match heuristic."""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import image as im
from .errors import ConfigError, IncompleteMatchError
from .transport import (
    DEFAULT_SLICE_BYTES,
    UNMATCHED,
    MatchMap,
    augment,
    bs_update_targets,
    greedy_hc_match,
    match_cardinality,
    nn_match,
    sinkhorn,
)

HEURISTICS = ("nn", "bs", "ot")


@dataclass
class SynthesisConfig:
    """Parameters of one synthesis run.

    ``num_scales`` is the index of the coarsest level, so ``num_scales + 1``
    resolutions are visited.  ``output_shape`` of ``None`` means the
    exemplar's size.
    """

    patch_side: int = 4
    num_scales: int = 4
    iters_per_scale: int = 10
    heuristic: str = "ot"
    epsilon: float = 1e-3
    alpha: float = 0.25
    subsample_fraction: float = 0.35
    slice_bytes: int = DEFAULT_SLICE_BYTES
    coarse_blend_weight: float = 0.5
    seed: int = 0
    output_shape: tuple[int, int] | None = None
    sinkhorn_iters: int = 10
    greedy_rounds: int = 20
    target_mc: float = 0.99

    def __post_init__(self):
        self.heuristic = self.heuristic.lower()
        if self.heuristic not in HEURISTICS:
            raise ConfigError(f"unknown heuristic {self.heuristic!r}; choose from {HEURISTICS}")
        if self.patch_side < 1:
            raise ConfigError("patch_side must be >= 1")
        if self.num_scales < 0:
            raise ConfigError("num_scales must be >= 0")
        if self.iters_per_scale < 1:
            raise ConfigError("iters_per_scale must be >= 1")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ConfigError("subsample_fraction must lie in (0, 1]")
        # weight 0 switches coarse blending off
        if not 0.0 <= self.coarse_blend_weight <= 1.0:
            raise ConfigError("coarse_blend_weight must lie in [0, 1]")
        if self.slice_bytes < 8:
            raise ConfigError("slice_bytes must hold at least one cost entry")
        if self.sinkhorn_iters < 1 or self.greedy_rounds < 1:
            raise ConfigError("sinkhorn_iters and greedy_rounds must be >= 1")
        if not 0.0 < self.target_mc <= 1.0:
            raise ConfigError("target_mc must lie in (0, 1]")
        if self.output_shape is not None:
            self.output_shape = tuple(int(d) for d in self.output_shape)
            if len(self.output_shape) != 2 or min(self.output_shape) < 1:
                raise ConfigError(f"bad output shape {self.output_shape}")


@dataclass
class TraceRecord:
    scale: int
    iteration: int
    mc: float
    mean_cost: float
    seconds: float


@dataclass
class SynthesisTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def at_scale(self, j: int) -> list[TraceRecord]:
        return [r for r in self.records if r.scale == j]

    def final_mc(self) -> float:
        return self.records[-1].mc

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scale", "iteration", "mc", "mean_cost", "seconds"])
            for r in self.records:
                w.writerow([r.scale, r.iteration, repr(r.mc), repr(r.mean_cost), f"{r.seconds:.6f}"])


def apply_match(y_patches: im.PatchMatrix, x_patches: im.PatchMatrix, m: MatchMap) -> im.PatchMatrix:
    """Replace each synthesis patch by its matched exemplar patch."""
    if np.any(m.forward == UNMATCHED):
        raise IncompleteMatchError("cannot apply a match with unmatched rows")
    if m.forward.size != y_patches.rows:
        raise ConfigError("match length differs from the number of synthesis patches")
    return im.PatchMatrix(x_patches.data[m.forward], y_patches.origins.copy(),
                          y_patches.patch_side, y_patches.shape)


def match_step(X: im.PatchMatrix, Y: im.PatchMatrix, cfg: SynthesisConfig):
    """Run the configured heuristic; return ``(target_rows, match)``."""
    xf, yf = augment(X.data), augment(Y.data)
    if cfg.heuristic == "nn":
        m = nn_match(xf, yf, cfg.slice_bytes)
        return X.data[m.forward], m
    if cfg.heuristic == "bs":
        bs = bs_update_targets(xf, yf, cfg.alpha, cfg.slice_bytes)
        return bs.targets, bs.forward
    sp = sinkhorn(xf, yf, cfg.epsilon, cfg.sinkhorn_iters, cfg.slice_bytes)
    m = greedy_hc_match(sp, cfg.greedy_rounds, cfg.target_mc, cfg.slice_bytes)
    return X.data[m.forward], m


def synthesize(exemplar: np.ndarray, cfg: SynthesisConfig):
    """Synthesize a texture from ``exemplar``.

    Starts from uniform noise at the coarsest scale.  At every scale the
    current synthesis is repeatedly patchified, matched against the exemplar
    patches, re-averaged and blended with the previous (coarser) result.  The
    result is upsampled to seed the next finer scale.

    Returns
    -------
    y : ndarray, shape (H_out, W_out, 3)
    trace : SynthesisTrace
    """
    x = im.as_image(exemplar)
    b, J = cfg.patch_side, cfg.num_scales
    out_h, out_w = cfg.output_shape or x.shape[:2]
    x_dims = [im.scale_dims(x.shape[0], x.shape[1], j) for j in range(J + 1)]
    y_dims = [im.scale_dims(out_h, out_w, j) for j in range(J + 1)]
    if min(x_dims[J]) < b:
        raise ConfigError(
            f"exemplar is {x_dims[J][0]}x{x_dims[J][1]} at scale {J}, smaller than patch side {b}")

    rng = np.random.default_rng(cfg.seed)
    y = im.init_noise(*y_dims[J], seed=rng.integers(2**63))
    trace = SynthesisTrace()
    coarse = None
    for j in range(J, -1, -1):
        x_j = im.downsample(x, j)
        h, w = y_dims[j]
        y_j = y if coarse is None else im.upsample(coarse, h, w)
        for it in range(cfg.iters_per_scale):
            t0 = time.perf_counter()
            X = im.patchify(x_j, b, cfg.subsample_fraction, seed=rng.integers(2**63))
            Y = im.patchify(y_j, b, cfg.subsample_fraction, seed=rng.integers(2**63))
            targets, m = match_step(X, Y, cfg)
            diff = X.data[m.forward] - Y.data
            mean_cost = float(np.einsum("ij,ij->i", diff, diff).mean())
            updated = im.PatchMatrix(targets, Y.origins, b, (h, w))
            y_j = im.fold(updated, h, w, fallback=y_j)
            if coarse is not None and cfg.coarse_blend_weight > 0:
                y_j = im.blend_with_coarse(y_j, coarse, cfg.coarse_blend_weight)
            trace.records.append(TraceRecord(j, it, match_cardinality(m), mean_cost,
                                             time.perf_counter() - t0))
        coarse = y_j
    return coarse, trace


def config_items(cfg: SynthesisConfig) -> dict:
    return asdict(cfg)
