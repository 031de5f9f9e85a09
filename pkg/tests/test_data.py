import gzip

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import corpus
from oracles import idx_bytes
from stcalab.codec import StcaParams
from stcalab.data import (IDX_IMAGES, IdxFormatError, ProjectionPack, gen_gaussian, load_mnist_idx, mnist_split,
                          parse_idx, read_pgm, tile_images, write_idx, write_pgm)
from stcalab.errors import FormatError
from stcalab.linalg import SeedSpec


def test_gaussian_moments():
    ds = gen_gaussian(529, 10_000, 1.0, SeedSpec(0))
    X = ds.samples
    assert X.shape == (10_000, 529)
    assert np.all(np.abs(X.mean(axis=0)) <= 4 / np.sqrt(10_000))
    assert abs(X.var() - 1.0) <= 0.05


def test_gaussian_seeded_and_degenerate():
    a = gen_gaussian(8, 5, 2.0, SeedSpec(3)).samples
    np.testing.assert_array_equal(a, gen_gaussian(8, 5, 2.0, SeedSpec(3)).samples)
    assert not gen_gaussian(8, 5, 0.0, SeedSpec(3)).samples.any()
    with pytest.raises(ValueError):
        gen_gaussian(8, 0, 1.0, SeedSpec(3))


def test_idx_header_from_format_definition():
    raw = bytes.fromhex("00000803 00000002 0000001C 0000001C".replace(" ", "")) + bytes(2 * 28 * 28)
    arr = parse_idx(raw, IDX_IMAGES)
    assert arr.shape == (2, 28, 28)


def test_valid_fixture_loads():
    ds = load_mnist_idx(corpus.path("valid-images-idx3-ubyte"), corpus.path("valid-labels-idx1-ubyte"))
    assert ds.samples.shape == (3, 20) and ds.shape_hint == (4, 5)
    np.testing.assert_array_equal(ds.samples.reshape(-1) * 255, corpus.VALID_PIXELS)
    assert ds.labels.tolist() == corpus.VALID_LABELS
    assert ds.samples.max() <= 1.0


@pytest.mark.parametrize("case", sorted(corpus.MALFORMED))
def test_malformed_fixture_rejected(case):
    (images, labels), (category, offset) = corpus.MALFORMED[case]
    with pytest.raises(IdxFormatError) as err:
        load_mnist_idx(corpus.path(images), corpus.path(labels))
    assert (err.value.category, err.value.offset) == (category, offset)
    assert f"offset {offset}" in str(err.value)


def test_trailing_bytes_are_a_dimension_mismatch():
    raw = idx_bytes(0x803, [1, 2, 2], [1, 2, 3, 4]) + b"\x00\x00"
    with pytest.raises(IdxFormatError) as err:
        parse_idx(raw, IDX_IMAGES)
    assert err.value.category == "dimension-mismatch" and err.value.offset == 20


def test_empty_file_is_truncated():
    with pytest.raises(IdxFormatError) as err:
        parse_idx(b"\x00\x00", IDX_IMAGES)
    assert err.value.category == "truncated-file"


def test_round_trip_three_images_plain_and_gzip(tmp_path, rng):
    images = rng.integers(0, 256, size=(3, 28, 28), dtype=np.uint8)
    for name in ("imgs", "imgs.gz"):
        write_idx(tmp_path / name, images, IDX_IMAGES)
        ds = load_mnist_idx(tmp_path / name)
        assert ds.shape_hint == (28, 28)
        np.testing.assert_array_equal(np.rint(ds.samples * 255).astype(np.uint8), images.reshape(3, -1))
    assert gzip.decompress((tmp_path / "imgs.gz").read_bytes()) == (tmp_path / "imgs").read_bytes()


def test_mnist_split_finds_files(tmp_path, rng):
    write_idx(tmp_path / "train-images-idx3-ubyte.gz", rng.integers(0, 256, (4, 2, 2)), IDX_IMAGES)
    write_idx(tmp_path / "train-labels-idx1-ubyte", [1, 2, 3, 4], 2049)
    assert len(mnist_split(tmp_path, "train")) == 4
    with pytest.raises(FileNotFoundError):
        mnist_split(tmp_path, "t10k")


def test_pgm_exact_bytes(tmp_path):
    write_pgm(np.zeros(4), (2, 2), tmp_path / "z.pgm")
    assert (tmp_path / "z.pgm").read_bytes() == b"P5\n2 2\n255\n" + bytes(4)
    write_pgm(np.ones(1), (1, 1), tmp_path / "o.pgm")
    assert (tmp_path / "o.pgm").read_bytes()[-1:] == b"\xff"


def test_pgm_round_trip_within_quantization(tmp_path, rng):
    img = rng.random((7, 9))
    write_pgm(img, img.shape, tmp_path / "r.pgm")
    np.testing.assert_allclose(read_pgm(tmp_path / "r.pgm"), img, atol=0.5 / 255 + 1e-12)


def test_pgm_clamps(tmp_path):
    write_pgm(np.array([-3.0, 0.5, 7.0]), (1, 3), tmp_path / "c.pgm")
    assert list((tmp_path / "c.pgm").read_bytes()[-3:]) == [0, 128, 255]
    with pytest.raises(FormatError):
        (tmp_path / "bad.pgm").write_bytes(b"P2\n1 1\n255\n0")
        read_pgm(tmp_path / "bad.pgm")


def test_tiling_layout():
    a, b = np.zeros(4), np.ones(4)
    grid = tile_images([[a, a], [b, b]], (2, 2), gap=1)
    assert grid.shape == (5, 5)
    assert grid[0, 0] == 0 and grid[0, 3] == 1 and grid[2, 0] == 1  # gaps are white


def test_pack_round_trip_lossless(tmp_path):
    pack = ProjectionPack.build(StcaParams(m=12, n=8, s_x=3, s_ns=2), SeedSpec(4))
    pack.save(tmp_path / "p.bin")
    raw = (tmp_path / "p.bin").read_bytes()
    assert raw[:8] == b"STCAPACK" and len(raw) == 48 + 8 * (8 * 8 + 12 * 8)
    back = ProjectionPack.load(tmp_path / "p.bin")
    np.testing.assert_array_equal(back.W, pack.W)
    np.testing.assert_array_equal(back.A, pack.A)
    assert back.params == pack.params


@pytest.mark.parametrize("mutate", [lambda r: b"NOTAPACK" + r[8:], lambda r: r[:-1], lambda r: r + b"\0"])
def test_pack_rejects_corruption(tmp_path, mutate):
    ProjectionPack.build(StcaParams(m=4, n=3, s_x=1), SeedSpec(0)).save(tmp_path / "p.bin")
    (tmp_path / "p.bin").write_bytes(mutate((tmp_path / "p.bin").read_bytes()))
    with pytest.raises(FormatError):
        ProjectionPack.load(tmp_path / "p.bin")


@given(hnp.arrays(np.uint8, hnp.array_shapes(min_dims=1, max_dims=3, max_side=6)))
def test_idx_round_trip_property(arr):
    raw = idx_bytes(0x800 + arr.ndim, arr.shape, arr.tobytes())
    np.testing.assert_array_equal(parse_idx(raw, 0x800 + arr.ndim), arr)


@given(st.integers(0, 75))
def test_any_truncation_of_valid_file_is_rejected(cut):
    raw = (corpus.path("valid-images-idx3-ubyte")).read_bytes()[:cut]
    with pytest.raises(IdxFormatError) as err:
        parse_idx(raw, IDX_IMAGES)
    assert err.value.category == "truncated-file"
