import numpy as np
import pytest
from scipy import ndimage

from magfuse.errors import ConsistencyError, FormatError
from magfuse.pyramid import SynthConfig, generate_synthetic_slide_with_truth
from magfuse.tissue import (
    COLORIZATION_MAX,
    TissueMask,
    colorization_map,
    load_mask,
    otsu_threshold,
    saturation_map,
    save_mask,
    segment_tissue,
)

from _oracles import colorization_ref, otsu_brute, saturation_ref


def as_pixel(r, g, b):
    return np.array([[[r, g, b]]], dtype=np.uint8)


# ---------------------------------------------------------------------------
# Colorization and saturation values


def test_colorization_hand_values():
    # frozen hand evaluations of c = |r-m| + |g-m| + |b-m|
    assert colorization_map(as_pixel(128, 128, 128))[0, 0] == 0
    assert colorization_map(as_pixel(255, 0, 0))[0, 0] == 340  # m=85: 170+85+85
    assert colorization_map(as_pixel(200, 150, 100))[0, 0] == 100  # m=150: 50+0+50
    assert colorization_map(as_pixel(0, 0, 0))[0, 0] == 0


def test_colorization_zero_iff_grey():
    for v in (0, 1, 17, 128, 254, 255):
        assert colorization_map(as_pixel(v, v, v))[0, 0] == 0
    assert colorization_map(as_pixel(10, 10, 11))[0, 0] > 0


def test_colorization_range_bound():
    rng = np.random.default_rng(2)
    px = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
    cmap = colorization_map(px)
    assert cmap.min() >= 0 and cmap.max() <= COLORIZATION_MAX


def test_saturation_hand_values():
    assert saturation_map(as_pixel(255, 0, 0))[0, 0] == 255
    assert saturation_map(as_pixel(77, 77, 77))[0, 0] == 0
    assert saturation_map(as_pixel(0, 0, 0))[0, 0] == 0  # max=0 convention


def test_dark_grey_noise_pixel():
    # the failure mode that motivates colorization over saturation:
    # a dark-grey speckle scores high in saturation but near zero in
    # colorization
    assert saturation_map(as_pixel(30, 25, 35))[0, 0] == 73
    assert colorization_map(as_pixel(30, 25, 35))[0, 0] == 10


def test_maps_match_rational_oracle():
    rng = np.random.default_rng(8)
    px = rng.integers(0, 256, size=(40, 40, 3), dtype=np.uint8)
    cmap = colorization_map(px)
    smap = saturation_map(px)
    for y in range(40):
        for x in range(40):
            r, g, b = (int(v) for v in px[y, x])
            assert cmap[y, x] == colorization_ref(r, g, b)
            assert smap[y, x] == saturation_ref(r, g, b)


# ---------------------------------------------------------------------------
# Otsu


def test_otsu_two_spikes():
    hist = np.zeros(256, dtype=np.int64)
    hist[0] = 10
    hist[255] = 7
    # any split in [0, 254] is optimal; smallest t wins
    assert otsu_threshold(hist) == 0


def test_otsu_single_bin():
    hist = np.zeros(256, dtype=np.int64)
    hist[100] = 5
    assert otsu_threshold(hist) == 100


def test_otsu_bimodal():
    hist = np.zeros(256, dtype=np.int64)
    hist[10:20] = 50
    hist[200:210] = 50
    t = otsu_threshold(hist)
    assert t == otsu_brute(hist)
    assert 19 <= t < 200


def test_otsu_rejects_bad_input():
    with pytest.raises(ValueError):
        otsu_threshold(np.zeros(256, dtype=np.int64))
    with pytest.raises(ValueError):
        otsu_threshold(np.array([3, -1, 2]))


def test_otsu_matches_brute_force_oracle():
    rng = np.random.default_rng(13)
    for trial in range(60):
        if trial % 3 == 0:
            # sparse histograms make ties likely
            hist = np.zeros(64, dtype=np.int64)
            idx = rng.choice(64, size=int(rng.integers(1, 5)), replace=False)
            hist[idx] = rng.integers(1, 10, size=idx.size)
        else:
            hist = rng.integers(0, 100, size=int(rng.integers(2, 300))).astype(np.int64)
            if hist.sum() == 0:
                hist[0] = 1
        assert otsu_threshold(hist) == otsu_brute(hist)


# ---------------------------------------------------------------------------
# Segmentation


SPECKLED = SynthConfig(
    width=768,
    height=768,
    tissue_blob_count=2,
    tumor_region_count=0,
    dark_noise_speckle_density=0.05,
    seed=21,
)


def test_pure_white_slide_all_zero_mask():
    from magfuse.pyramid import LevelInfo, PyramidImage

    white = np.full((64, 64, 3), 255, dtype=np.uint8)
    pyr = PyramidImage(
        slide_id="w", base_magnification=40.0, microns_per_pixel=0.25,
        levels=[LevelInfo(64, 64, 1)], pixels=[white],
    )
    mask = segment_tissue(pyr, level=0)
    assert mask.degenerate
    assert mask.bits.sum() == 0


def test_mask_covers_blob_within_two_px():
    pyr, _, truth = generate_synthetic_slide_with_truth(SPECKLED)
    mask = segment_tissue(pyr, method="colorization", level=0)
    covered = mask.bits.astype(bool) & truth.tissue_mask
    assert covered.sum() >= 0.99 * truth.tissue_mask.sum()
    # nothing outside the blob dilated by 2 px
    dilated = ndimage.binary_dilation(truth.tissue_mask, iterations=2)
    assert not (mask.bits.astype(bool) & ~dilated).any()


def test_colorization_beats_saturation_on_speckle():
    pyr, _, truth = generate_synthetic_slide_with_truth(SPECKLED)
    cmask = segment_tissue(pyr, method="colorization", level=0).bits.astype(bool)
    smask = segment_tissue(pyr, method="saturation", level=0).bits.astype(bool)
    n_speckle = truth.speckle_mask.sum()
    assert n_speckle > 0
    c_incl = (cmask & truth.speckle_mask).sum() / n_speckle
    s_incl = (smask & truth.speckle_mask).sum() / n_speckle
    assert c_incl < 0.10
    assert s_incl > c_incl


def test_segment_default_level_is_downsample_32():
    pyr, _, _ = generate_synthetic_slide_with_truth(SPECKLED)
    mask = segment_tissue(pyr)
    lv = pyr.levels[mask.level]
    assert lv.downsample == 32
    assert (mask.width, mask.height) == (lv.width, lv.height)


def test_segment_unknown_method():
    pyr, _, _ = generate_synthetic_slide_with_truth(SPECKLED)
    with pytest.raises(ValueError):
        segment_tissue(pyr, method="hue")


# ---------------------------------------------------------------------------
# Mask file format


def test_mask_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    bits = (rng.random((24, 31)) < 0.4).astype(np.uint8)
    mask = TissueMask(slide_id="m", level=3, width=31, height=24, bits=bits)
    save_mask(mask, tmp_path)
    back = load_mask(tmp_path)
    assert back.slide_id == "m" and back.level == 3
    np.testing.assert_array_equal(back.bits, bits)


def test_mask_truncated_bin(tmp_path):
    bits = np.ones((4, 4), dtype=np.uint8)
    save_mask(TissueMask("m", 0, 4, 4, bits), tmp_path)
    (tmp_path / "mask.bin").write_bytes(b"\x01" * 10)
    with pytest.raises(ConsistencyError):
        load_mask(tmp_path)


def test_mask_bad_values(tmp_path):
    bits = np.ones((2, 2), dtype=np.uint8)
    save_mask(TissueMask("m", 0, 2, 2, bits), tmp_path)
    (tmp_path / "mask.bin").write_bytes(bytes([0, 1, 2, 1]))
    with pytest.raises(FormatError):
        load_mask(tmp_path)


def test_mask_missing_header(tmp_path):
    with pytest.raises(FormatError):
        load_mask(tmp_path)
