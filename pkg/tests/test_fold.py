import numpy as np
import pytest

from vseg.fold import GeometryError, fold, geometry, unfold_to_channels, unfold_to_time


def fold_oracle(window: np.ndarray, s: int, w: int, n: int) -> np.ndarray:
    """Brute-force index map: out[p*s + c, j] = in[c, p*n + j]."""
    out = np.empty((n, n), dtype=window.dtype)
    for p in range(n // s):
        for c in range(s):
            for j in range(n):
                out[p * s + c, j] = window[c, p * n + j]
    return out


def all_valid_geometries(max_n: int):
    for s in range(1, max_n + 1):
        for w in range(1, max_n * max_n // s + 1):
            n2 = s * w
            n = int(np.sqrt(n2) + 0.5)
            if n * n == n2 and n % s == 0 and n <= max_n:
                yield s, w, n


class TestGeometry:
    @pytest.mark.parametrize(
        "s,w,n", [(8, 8192, 256), (8, 2048, 128), (8, 512, 64), (2, 8, 4), (1, 9, 3)]
    )
    def test_valid_cases(self, s, w, n):
        assert geometry(s, w).n == n

    def test_rejects_non_square_product(self):
        with pytest.raises(GeometryError, match="perfect square"):
            geometry(8, 1000)

    def test_rejects_indivisible_side(self):
        # 8 * 2 = 16 is square (n=4) but 4 % 8 != 0
        with pytest.raises(GeometryError, match="divisible"):
            geometry(8, 2)

    def test_rejects_nonpositive(self):
        with pytest.raises(GeometryError):
            geometry(0, 10)


class TestFold:
    def test_worked_example_two_channels(self):
        # row0 = a0..a7, row1 = b0..b7 folds to [a0..a3],[b0..b3],[a4..a7],[b4..b7]
        g = geometry(2, 8)
        a = np.arange(8.0)
        b = np.arange(10.0, 18.0)
        out = fold(np.stack([a, b]), g)
        expected = np.array([a[:4], b[:4], a[4:], b[4:]])
        np.testing.assert_array_equal(out, expected)

    def test_matches_brute_force_oracle_on_all_small_geometries(self):
        rng = np.random.default_rng(0)
        cases = 0
        for s, w, n in all_valid_geometries(16):
            x = rng.normal(size=(s, w))
            np.testing.assert_array_equal(fold(x, geometry(s, w)), fold_oracle(x, s, w, n))
            cases += 1
        assert cases > 10

    def test_relocation_only(self):
        g = geometry(4, 64)
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 64))
        out = fold(x, g)
        assert sorted(out.ravel()) == sorted(x.ravel())
        np.testing.assert_array_equal(fold(np.zeros((4, 64)), g), np.zeros((16, 16)))
        np.testing.assert_array_equal(fold(np.full((4, 64), 3.5), g), np.full((16, 16), 3.5))

    def test_energy_preserved(self):
        # a pure permutation: identical squared values, so sums agree to
        # summation-order rounding
        g = geometry(8, 512)
        x = np.random.default_rng(2).normal(size=(8, 512))
        folded = fold(x, g)
        np.testing.assert_array_equal(np.sort(folded.ravel() ** 2), np.sort(x.ravel() ** 2))
        assert np.sum(folded**2) == pytest.approx(np.sum(x**2), rel=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            fold(np.zeros((2, 9)), geometry(2, 8))


class TestUnfold:
    def test_roundtrip_identity_small_geometries(self):
        rng = np.random.default_rng(3)
        for s, w, n in all_valid_geometries(16):
            g = geometry(s, w)
            x = rng.normal(size=(s, w))
            np.testing.assert_array_equal(unfold_to_channels(fold(x, g), g), x)

    def test_roundtrip_identity_paper_scale(self):
        g = geometry(8, 8192)
        x = np.random.default_rng(4).normal(size=(8, 8192))
        np.testing.assert_array_equal(unfold_to_channels(fold(x, g), g), x)

    def test_unfold_to_time_is_channel_sum(self):
        g = geometry(8, 512)
        rng = np.random.default_rng(5)
        x = rng.normal(size=(8, 512))
        np.testing.assert_allclose(unfold_to_time(fold(x, g), g), x.sum(axis=0), rtol=1e-12)

    def test_unfold_to_time_mask_block(self):
        g = geometry(8, 8192)
        mask = np.zeros((8, 8192))
        mask[:, 100:200] = 1.0
        t = unfold_to_time(fold(mask, g), g)
        np.testing.assert_array_equal(t[100:200], np.full(100, 8.0))
        assert t.sum() == 800

    def test_single_pixel_lands_on_mapped_sample(self):
        g = geometry(2, 8)
        img = np.zeros((4, 4))
        img[2, 1] = 1.0  # p=1, c=0, j=1 -> channel 0, sample 1*4+1 = 5
        t = unfold_to_time(img, g)
        assert t[5] == 1.0 and t.sum() == 1.0

    def test_all_zero(self):
        g = geometry(2, 8)
        np.testing.assert_array_equal(unfold_to_time(np.zeros((4, 4)), g), np.zeros(8))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            unfold_to_channels(np.zeros((4, 5)), geometry(2, 8))
