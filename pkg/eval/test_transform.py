import math

import numpy as np
import pytest

from waveseg.errors import ArgumentError, ShapeError
from waveseg.filters import get_wavelet, list_wavelets, subband_tags, tensor_filters
from waveseg.tensor import Tensor
from waveseg.transform import (
    Subbands,
    affected_band_width,
    analysis_matrix,
    boundary_error_profile,
    boundary_summary,
    boundary_sweep,
    dwt,
    dwt_adjoint,
    dwt_multilevel,
    idwt,
    idwt_adjoint,
    idwt_multilevel,
    synthesis_matrix,
)

ALL = list_wavelets()
ORTHO = ["haar", "db2", "db3", "db4", "db5", "db6"]
SYMMETRIC = ["haar", "ch2.2", "ch3.3", "ch4.4", "ch5.5"]
MODES = ["periodic", "symmetric", "zero"]


def _random_subbands(rng, dim, extent, w, mode, lead=()):
    shape = tuple(lead) + tuple(n // 2 for n in extent)
    tags = subband_tags(dim)
    return Subbands(
        dim=dim,
        low=Tensor(rng.normal(size=shape)),
        highs={t: Tensor(rng.normal(size=shape)) for t in tags[1:]},
        boundary_mode=mode,
        wavelet_name=w,
        original_extent=extent,
    )


def _subband_dot(a: Subbands, b: Subbands) -> float:
    return sum(float(np.sum(x * y)) for x, y in zip(a.arrays().values(), b.arrays().values()))


class TestHaarGroundTruth:
    def test_1d(self):
        s = dwt(Tensor([1.0, 2.0, 3.0, 4.0]), "haar", dim=1, mode="periodic")
        np.testing.assert_allclose(np.asarray(s.low), [3 / math.sqrt(2), 7 / math.sqrt(2)], atol=1e-12)
        np.testing.assert_allclose(np.asarray(s["h"]), [-1 / math.sqrt(2), -1 / math.sqrt(2)], atol=1e-12)

    def test_2d(self):
        s = dwt(Tensor([[1.0, 2.0], [3.0, 4.0]]), "haar", dim=2, mode="periodic")
        assert s.low.shape == (1, 1)
        assert float(np.asarray(s["ll"])[0, 0]) == pytest.approx(5.0, abs=1e-12)
        assert float(np.asarray(s["lh"])[0, 0]) == pytest.approx(-2.0, abs=1e-12)
        assert float(np.asarray(s["hl"])[0, 0]) == pytest.approx(-1.0, abs=1e-12)
        assert float(np.asarray(s["hh"])[0, 0]) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("name", ORTHO)
    def test_constant_signal(self, name):
        s = dwt(np.full(16, 3.0), name, dim=1, mode="periodic")
        np.testing.assert_allclose(np.asarray(s["h"]), 0.0, atol=1e-10)
        np.testing.assert_allclose(np.asarray(s.low), 3.0 * math.sqrt(2), atol=1e-10)

    def test_constant_image(self):
        s = dwt(np.full((8, 8), 0.25), "haar", dim=2, mode="periodic")
        np.testing.assert_allclose(np.asarray(s.low), 0.5, atol=1e-12)
        for tag in ("lh", "hl", "hh"):
            np.testing.assert_allclose(np.asarray(s[tag]), 0.0, atol=1e-12)

    def test_smooth_image_energy_sits_in_ll(self):
        i, j = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
        image = 0.5 + 0.3 * np.sin(2 * np.pi * i / 32) * np.cos(2 * np.pi * j / 32)
        s = dwt(image, "haar", dim=2, mode="symmetric")
        assert s.low.norm() ** 2 / s.energy() >= 0.95

    def test_horizontal_edge_lands_in_lh(self):
        image = np.zeros((8, 8))
        image[5:, :] = 1.0
        s = dwt(image, "haar", dim=2, mode="periodic")
        assert np.max(np.abs(np.asarray(s["lh"]))) > 0.1
        for tag in ("hl", "hh"):
            np.testing.assert_allclose(np.asarray(s[tag]), 0.0, atol=1e-12)


class TestPerfectReconstruction:
    @pytest.mark.parametrize("name", ALL)
    @pytest.mark.parametrize("shape,dim", [((4,), 1), ((10,), 1), ((64,), 1), ((2, 16, 16), 2), ((1, 8, 8, 8), 3)])
    def test_periodic(self, rng, name, shape, dim):
        x = rng.normal(size=shape)
        back = np.asarray(idwt(dwt(x, name, dim, "periodic")))
        assert back.shape == x.shape
        assert np.max(np.abs(back - x)) <= 1e-8 * max(1.0, np.max(np.abs(x)))

    @pytest.mark.parametrize("name", SYMMETRIC)
    @pytest.mark.parametrize("shape,dim", [((8,), 1), ((34,), 1), ((16, 16), 2), ((3, 10, 12), 2), ((8, 8, 8), 3)])
    def test_symmetric(self, rng, name, shape, dim):
        x = rng.normal(size=shape)
        back = np.asarray(idwt(dwt(x, name, dim, "symmetric")))
        assert np.max(np.abs(back - x)) <= 1e-8 * max(1.0, np.max(np.abs(x)))

    @pytest.mark.parametrize("name", ["haar", "db3", "ch3.3"])
    def test_multilevel(self, rng, name):
        x = rng.normal(size=(1, 32, 32))
        p = dwt_multilevel(x, name, 2, "periodic", depth=3)
        assert p.depth == 3
        assert p.low.shape == (1, 4, 4)
        back = np.asarray(idwt_multilevel(p))
        assert np.max(np.abs(back - x)) <= 1e-7

    def test_multilevel_depth_one_matches_single_level(self, rng):
        x = rng.normal(size=(8, 8))
        p = dwt_multilevel(x, "db2", 2, "periodic", depth=1)
        single = dwt(x, "db2", 2, "periodic")
        for tag in single.tags:
            assert p.levels[0][tag].equals(single[tag])


class TestProperties:
    @pytest.mark.parametrize("name", ORTHO)
    def test_energy_is_conserved(self, rng, name):
        for _ in range(10):
            x = rng.normal(size=(2, 16, 16))
            s = dwt(x, name, 2, "periodic")
            assert s.energy() == pytest.approx(float(np.sum(x * x)), rel=1e-8)

    @pytest.mark.parametrize("mode", MODES)
    def test_linearity(self, rng, mode):
        x, y = rng.normal(size=(2, 12, 12))
        a, b = 1.7, -0.3
        lhs = dwt(a * x + b * y, "db2", 2, mode).arrays()
        sx = dwt(x, "db2", 2, mode).arrays()
        sy = dwt(y, "db2", 2, mode).arrays()
        for tag, value in lhs.items():
            np.testing.assert_allclose(value, a * sx[tag] + b * sy[tag], atol=1e-10)

    @pytest.mark.parametrize("mode", MODES)
    def test_odd_extent_shape_law(self, rng, mode):
        s = dwt(rng.normal(size=7), "db2", 1, mode)
        assert s.low.shape == (3,)
        assert idwt(s).shape == (7,)
        s2 = dwt(rng.normal(size=(1, 7, 9)), "haar", 2, mode)
        assert s2["hh"].shape == (1, 3, 4)
        assert idwt(s2).shape == (1, 7, 9)

    def test_matches_tensor_product_kernels(self, rng):
        x = rng.normal(size=(8, 10))
        H, W = x.shape
        for name in ("haar", "db2", "ch2.2"):
            w = get_wavelet(name)
            s = dwt(x, w, 2, "periodic")
            for tag, kernel in tensor_filters(w, "analysis", 2).items():
                L = kernel.shape[0]
                expected = np.zeros((H // 2, W // 2))
                for r in range(H // 2):
                    for c in range(W // 2):
                        rows = (2 * r + np.arange(L)) % H
                        cols = (2 * c + np.arange(L)) % W
                        expected[r, c] = np.sum(kernel * x[np.ix_(rows, cols)])
                np.testing.assert_allclose(np.asarray(s[tag]), expected, atol=1e-12)

    def test_separable_along_each_axis(self, rng):
        x = rng.normal(size=(12, 8))
        s2 = dwt(x, "db3", 2, "symmetric")
        along_w = dwt(x, "db3", 1, "symmetric").arrays()
        for tag in s2.tags:
            c0, c1 = tag
            along_h = dwt(along_w[c0].T, "db3", 1, "symmetric").arrays()
            np.testing.assert_allclose(np.asarray(s2[tag]), along_h[c1].T, atol=1e-12)

    @pytest.mark.parametrize("mode", MODES)
    def test_channels_are_independent_bitwise(self, rng, mode):
        x = rng.normal(size=(3, 16, 16))
        stacked = dwt(x, "db4", 2, mode)
        for c in range(3):
            single = dwt(x[c], "db4", 2, mode)
            for tag in stacked.tags:
                assert np.array_equal(np.asarray(stacked[tag])[c], np.asarray(single[tag]))
        back = np.asarray(idwt(stacked))
        assert np.array_equal(back[1], np.asarray(idwt(dwt(x[1], "db4", 2, mode))))


class TestAdjoints:
    @pytest.mark.parametrize("name", ["haar", "db2", "db5", "ch2.2", "ch4.4"])
    @pytest.mark.parametrize("mode", MODES)
    def test_dwt_adjoint_identity(self, rng, name, mode):
        for _ in range(5):
            x = rng.normal(size=(2, 10, 12))
            s = _random_subbands(rng, 2, (10, 12), name, mode, lead=(2,))
            lhs = _subband_dot(dwt(x, name, 2, mode), s)
            rhs = float(np.sum(x * np.asarray(dwt_adjoint(s))))
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    @pytest.mark.parametrize("name", ["haar", "db3", "ch3.3"])
    @pytest.mark.parametrize("mode", MODES)
    def test_idwt_adjoint_identity(self, rng, name, mode):
        for _ in range(5):
            s = _random_subbands(rng, 2, (8, 8), name, mode)
            y = rng.normal(size=(8, 8))
            lhs = float(np.sum(np.asarray(idwt(s)) * y))
            rhs = _subband_dot(s, idwt_adjoint(y, name, 2, mode))
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    def test_dwt_adjoint_matches_matrix_transpose(self, rng):
        A = analysis_matrix("db2", 10, "symmetric")
        y = rng.normal(size=10)
        s = Subbands(dim=1, low=Tensor(y[:5]), highs={"h": Tensor(y[5:])}, boundary_mode="symmetric",
                     wavelet_name="db2", original_extent=(10,))
        np.testing.assert_allclose(np.asarray(dwt_adjoint(s)), A.T @ y, atol=1e-12)

    @pytest.mark.parametrize("name", ORTHO)
    def test_orthogonal_periodic_matrices(self, name):
        A = analysis_matrix(name, 16, "periodic")
        np.testing.assert_allclose(A @ A.T, np.eye(16), atol=1e-10)
        np.testing.assert_allclose(synthesis_matrix(name, 16, "periodic"), A.T, atol=1e-10)

    def test_orthogonal_periodic_adjoint_is_inverse(self, rng):
        s = _random_subbands(rng, 2, (8, 8), "db2", "periodic")
        np.testing.assert_allclose(np.asarray(dwt_adjoint(s)), np.asarray(idwt(s)), atol=1e-10)


class TestErrors:
    def test_rank_too_small(self):
        with pytest.raises(ShapeError):
            dwt(np.zeros(8) + 1.0, "haar", dim=2)

    def test_extent_too_small(self):
        with pytest.raises(ShapeError):
            dwt(np.ones((1, 8)), "haar", dim=2)

    def test_unknown_mode(self):
        with pytest.raises(ArgumentError):
            dwt(np.ones(8), "haar", dim=1, mode="reflect101")

    def test_bad_dim(self):
        with pytest.raises(ArgumentError):
            dwt(np.ones((2, 2, 2, 2)), "haar", dim=4)

    def test_wavelet_mismatch(self, rng):
        s = dwt(rng.normal(size=(8, 8)), "db2", 2, "periodic")
        with pytest.raises(ArgumentError):
            idwt(s, "db3")

    def test_inconsistent_components(self):
        with pytest.raises(ShapeError):
            Subbands(dim=2, low=Tensor(np.ones((4, 4))),
                     highs={"lh": Tensor(np.ones((4, 4))), "hl": Tensor(np.ones((4, 4))),
                            "hh": Tensor(np.ones((4, 3)))},
                     boundary_mode="periodic", wavelet_name="haar", original_extent=(8, 8))

    def test_missing_detail_tag(self):
        with pytest.raises(ShapeError):
            Subbands(dim=1, low=Tensor(np.ones(4)), highs={}, boundary_mode="periodic",
                     wavelet_name="haar", original_extent=(8,))

    def test_multilevel_depth_limits(self, rng):
        x = rng.normal(size=(8, 8))
        with pytest.raises(ArgumentError):
            dwt_multilevel(x, "haar", 2, "periodic", depth=0)
        with pytest.raises(ArgumentError):
            dwt_multilevel(x, "haar", 2, "periodic", depth=4)


class TestBoundary:
    def test_haar_symmetric_is_exact(self, rng):
        errors = boundary_error_profile(rng.random((32, 32)), "haar", "symmetric")
        assert np.max(np.abs(np.asarray(errors))) <= 1e-10
        assert affected_band_width(errors) == 0

    def test_profile_accepts_channel_axis(self, rng):
        errors = boundary_error_profile(rng.random((1, 16, 16)), "db2", "zero")
        assert errors.shape == (16, 16)

    def test_band_width_of_error_map(self):
        error_map = np.zeros((16, 16))
        error_map[3, 10] = 1e-3
        assert affected_band_width(error_map) == 4
        error_map[0, 0] = 1.0
        assert affected_band_width(error_map) == 4

    def test_zero_mode_widths_grow_with_filter_length(self):
        widths = {name: boundary_summary(name, "zero", 64, 0)["affected_band_width"] for name in ORTHO}
        assert widths == {"haar": 0, "db2": 2, "db3": 4, "db4": 6, "db5": 8, "db6": 10}

    def test_db6_zero_mode_error_stays_near_edges(self):
        summary = boundary_summary("db6", "zero", 64, 0)
        assert summary["max_interior_err"] <= 1e-10
        assert summary["max_boundary_err"] > 1e-6

    def test_sweep_is_sorted_by_filter_length(self):
        frame = boundary_sweep(["db3", "haar", "db2"], "zero", 32, 1)
        assert list(frame["wavelet"]) == ["haar", "db2", "db3"]
        assert list(frame.columns) == [
            "wavelet", "filter_length", "affected_band_width", "max_interior_err", "max_boundary_err",
        ]

    def test_odd_size_rejected(self):
        with pytest.raises(ArgumentError):
            boundary_summary("haar", "zero", 31)
