import numpy as np
import pytest

from otsynth import desk
from otsynth import image as im
from otsynth.innovation import (
    ICReport,
    TileMap,
    innovation_capacity,
    tile_map,
    tile_map_render,
    untiled_fraction,
)


@pytest.fixture(scope="module")
def exemplar():
    return desk.blobs(32, 32)


def identity_indices(h, w):
    return np.arange(h * w).reshape(h, w)


def brute_tile_map(x, y, b):
    X = im.patchify(x, b).data
    Y = im.patchify(y, b).data
    out = []
    for row in Y:
        d = [float(np.sum((row - xr) ** 2)) for xr in X]
        out.append(int(np.argmin(d)))
    return np.array(out).reshape(y.shape[:2])


def test_tile_map_identity(exemplar):
    tm = tile_map(exemplar, exemplar, 4)
    np.testing.assert_array_equal(tm.indices, identity_indices(32, 32))


def test_tile_map_shifted_copy(exemplar):
    y = np.roll(exemplar, (2, 3), axis=(0, 1))
    tm = tile_map(exemplar, y, 4)
    expected = np.roll(identity_indices(32, 32), (2, 3), axis=(0, 1))
    np.testing.assert_array_equal(tm.indices, expected)


def test_tile_map_brute_force():
    rng = np.random.default_rng(1)
    x = rng.random((9, 7, 3)).astype(np.float32)
    y = rng.random((6, 8, 3)).astype(np.float32)
    np.testing.assert_array_equal(tile_map(x, y, 3).indices, brute_tile_map(x, y, 3))


def test_ic_zero_on_identical(exemplar):
    rep = innovation_capacity(exemplar, exemplar, 3, 4)
    assert rep.per_scale == [0.0] * 4
    assert rep.mean == 0.0


def test_ic_shift_invariance(exemplar):
    rng = np.random.default_rng(2)
    y = rng.permutation(exemplar.reshape(-1, 3)).reshape(exemplar.shape)
    base = innovation_capacity(exemplar, y, 2, 2)
    for shift in [(1, 0), (5, 7), (31, 3)]:
        assert innovation_capacity(exemplar, np.roll(y, shift, axis=(0, 1)), 0, 2).per_scale[0] \
            == base.per_scale[0]


def test_ic_pixel_permutation_is_innovative():
    x = desk.cells(32, 32)
    y = np.random.default_rng(3).permutation(x.reshape(-1, 3)).reshape(x.shape)
    rep = innovation_capacity(x, y, 0, 1)
    assert rep.per_scale[0] > 0.95


def test_untiled_fraction_uses_2d_offsets():
    # matches (0, W-1) -> (1, 0) are adjacent in linear index but not in the image
    h, w = 4, 4
    idx = identity_indices(h, w)
    tm = TileMap(idx.copy(), (h, w))
    assert untiled_fraction(tm) == 0.0
    idx2 = idx.copy()
    idx2[:, 1] = idx[:, 0] + 1  # unchanged: (r, 1)
    assert untiled_fraction(TileMap(idx2, (h, w))) == 0.0
    flat_shift = (idx + 1) % (h * w)
    assert untiled_fraction(TileMap(flat_shift, (h, w))) > 0.0


def test_splicing_verbatim_tiles_lowers_ic():
    x = desk.cells(64, 64)
    rng = np.random.default_rng(4)
    base = rng.permutation(x.reshape(-1, 3)).reshape(x.shape)
    previous = innovation_capacity(x, base, 2, 4).mean
    spots = [(0, 0), (32, 32), (0, 32), (32, 0)]
    for k in (1, 2, 4):
        y = base.copy()
        for r, c in spots[:k]:
            y[r:r + 32, c:c + 32] = x[r:r + 32, c:c + 32]
        ic = innovation_capacity(x, y, 2, 4).mean
        assert ic < previous
        previous = ic


def test_report_format_and_csv(tmp_path, exemplar):
    rep = ICReport([0.5, 0.25, 0.0], 4)
    assert rep.mean == pytest.approx(0.25)
    text = rep.format()
    assert "J=2" in text and "patch=4" in text and "mean: 0.2500" in text
    rep.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_bytes().decode().split("\n")
    assert lines[0] == "scale,ic" and lines[4] == "mean,0.250000" and lines[5] == ""


def test_render_rules():
    h, w = 8, 8
    ident = tile_map_render(TileMap(identity_indices(h, w), (h, w)))
    assert np.allclose(ident[..., 2], 0.5)
    assert np.all(np.diff(ident[..., 0], axis=0) > 0) and np.all(np.diff(ident[..., 1], axis=1) > 0)
    const = tile_map_render(TileMap(np.full((h, w), 9), (h, w)))
    assert np.all(const == const[0, 0])
    shifted = tile_map_render(TileMap(np.roll(identity_indices(h, w), (0, 3), axis=(0, 1)), (h, w)))
    np.testing.assert_array_equal(shifted, np.roll(ident, 3, axis=1))
    seam = np.abs(np.diff(shifted[..., 1], axis=1))
    assert seam.argmax(axis=1).tolist() == [2] * h
