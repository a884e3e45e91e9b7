import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ensemble_seg.errors import DataError, DegenerateVoxelError, ShapeError, SpecError
from ensemble_seg.volume import (
    BRATS_REGIONS,
    ENHANCING_TUMOR,
    TUMOR_CORE,
    WHOLE_TUMOR,
    LabelVolume,
    ProbVolume,
    RegionSpec,
    VolumeMeta,
    argmax_labels,
    normalize,
    one_hot,
    region_mask,
)


def voxel(values):
    return ProbVolume(VolumeMeta((1, 1, 1)), np.array(values, dtype=np.float64).reshape(1, 1, 1, -1))


class TestMeta:
    def test_rejects_bad_dims_and_spacing(self):
        with pytest.raises(ShapeError):
            VolumeMeta((0, 1, 1))
        with pytest.raises(ShapeError):
            VolumeMeta((1, 1, 1), (1.0, 0.0, 1.0))

    def test_compatibility(self):
        a = VolumeMeta((2, 2, 2), (1, 1, 1))
        assert a.compatible(VolumeMeta((2, 2, 2), (1, 1, 1), "other"))
        assert not a.compatible(VolumeMeta((2, 2, 2), (1, 1, 2)))
        with pytest.raises(ShapeError):
            a.require_compatible(VolumeMeta((2, 2, 3)))


def test_label_volume_validates_range():
    with pytest.raises(DataError):
        LabelVolume(VolumeMeta((2, 1, 1)), np.array([0, 4]).reshape(2, 1, 1))
    with pytest.raises(ShapeError):
        LabelVolume(VolumeMeta((2, 1, 1)), np.zeros((1, 2, 1)))


def test_volumes_are_immutable():
    lv = LabelVolume(VolumeMeta((2, 2, 2)), np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        lv.voxels[0, 0, 0] = 1


def test_prob_volume_rejects_nan_and_negative():
    with pytest.raises(DataError):
        voxel([np.nan, 1.0])
    with pytest.raises(DataError):
        voxel([-0.1, 1.1])


class TestNormalize:
    def test_uniform_scaling(self):
        out = normalize(voxel([0.2, 0.2, 0.2, 0.2]))
        np.testing.assert_allclose(out.probs.ravel(), [0.25] * 4, atol=1e-12)

    def test_already_normalized_unchanged(self, rng):
        p = rng.random((3, 3, 3, 4))
        p /= p.sum(axis=3, keepdims=True)
        out = normalize(ProbVolume(VolumeMeta((3, 3, 3)), p))
        assert np.max(np.abs(out.probs - p)) <= 1e-7

    def test_divide_by_sum(self):
        out = normalize(voxel([1, 1, 2, 0]))
        np.testing.assert_allclose(out.probs.ravel(), [0.25, 0.25, 0.5, 0.0], atol=1e-15)

    def test_all_zero_voxel_is_an_error(self):
        p = np.ones((2, 1, 1, 4))
        p[1] = 0
        with pytest.raises(DegenerateVoxelError):
            normalize(ProbVolume(VolumeMeta((2, 1, 1)), p))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (3, 2, 2, 4), elements=st.floats(1e-3, 10.0)))
    def test_idempotent_and_proportions_preserved(self, raw):
        once = normalize(ProbVolume(VolumeMeta((3, 2, 2)), raw))
        twice = normalize(once)
        assert np.max(np.abs(once.probs.sum(axis=3) - 1)) <= 1e-7
        assert np.max(np.abs(twice.probs - once.probs)) <= 1e-7
        ratio = once.probs / raw
        assert np.allclose(ratio, ratio[..., :1], rtol=1e-12)


class TestArgmax:
    def test_picks_max(self):
        assert argmax_labels(voxel([0.1, 0.7, 0.1, 0.1])).voxels.item() == 1

    def test_tie_goes_to_lowest(self):
        assert argmax_labels(voxel([0.25] * 4)).voxels.item() == 0

    def test_inverse_of_one_hot(self, rng):
        lv = LabelVolume(VolumeMeta((5, 4, 3)), rng.integers(0, 4, (5, 4, 3)))
        back = argmax_labels(one_hot(lv))
        assert np.array_equal(back.voxels, lv.voxels)


class TestRegions:
    def test_empty_volume_gives_empty_mask(self):
        lv = LabelVolume(VolumeMeta((3, 3, 3)), np.zeros((3, 3, 3)))
        assert not region_mask(lv, WHOLE_TUMOR).any()

    def test_single_enhancing_voxel(self):
        vox = np.zeros((3, 3, 3))
        vox[1, 2, 0] = 3
        m = region_mask(LabelVolume(VolumeMeta((3, 3, 3)), vox), ENHANCING_TUMOR)
        assert m.sum() == 1 and m[1, 2, 0]

    def test_tumor_core_count(self):
        vox = np.zeros(20, dtype=np.uint8)
        vox[:5], vox[5:8], vox[8:10] = 1, 2, 3
        lv = LabelVolume(VolumeMeta((20, 1, 1)), vox.reshape(20, 1, 1))
        assert region_mask(lv, TUMOR_CORE).sum() == 7

    def test_label_beyond_classes_is_spec_error(self):
        lv = LabelVolume(VolumeMeta((1, 1, 1)), np.zeros((1, 1, 1)), n_classes=3)
        with pytest.raises(SpecError):
            region_mask(lv, RegionSpec("x", frozenset({3})))

    def test_region_spec_rejects_background(self):
        with pytest.raises(SpecError):
            RegionSpec("bad", frozenset({0, 1}))

    def test_nesting(self, rng):
        lv = LabelVolume(VolumeMeta((6, 6, 6)), rng.integers(0, 4, (6, 6, 6)))
        et, tc, wt = (region_mask(lv, r) for r in BRATS_REGIONS)
        assert np.all(et <= tc) and np.all(tc <= wt)
