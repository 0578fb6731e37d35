import numpy as np
import pytest

from magfuse.ensemble import (
    FusedMap,
    PredictionMap,
    binarize,
    fuse_uniform,
    load_prediction_map,
    save_prediction_map,
    upsample_to_finest,
)
from magfuse.errors import ConsistencyError, FormatError
from magfuse.grid import MagSpec

from _oracles import covering_average_ref, upsample_ref

M40 = MagSpec.for_magnification(40)
M20 = MagSpec.for_magnification(20)
M10 = MagSpec.for_magnification(10)
M5 = MagSpec.for_magnification(5)
J = {M40: 1, M20: 2, M10: 4, M5: 8}


def pm(scores, mag_spec=M40, slide_id="s", model_id="m"):
    scores = np.asarray(scores, dtype=np.float64)
    return PredictionMap(
        slide_id=slide_id, model_id=model_id, mag_spec=mag_spec,
        rows=scores.shape[0], cols=scores.shape[1], scores=scores,
    )


def coarse_grid_for(finest_rows, finest_cols, mag_spec):
    j = J[mag_spec]
    return -(-finest_rows // j), -(-finest_cols // j)


# ---------------------------------------------------------------------------
# Upsampling


def test_upsample_identity_at_finest():
    scores = np.random.default_rng(0).random((5, 7))
    out = upsample_to_finest(pm(scores), 5, 7)
    np.testing.assert_array_equal(out, scores)


def test_upsample_single_5x_cell():
    # one cell at 5x becomes an 8x8 block of the same score
    out = upsample_to_finest(pm([[0.7]], mag_spec=M5), 8, 8)
    np.testing.assert_array_equal(out, np.full((8, 8), 0.7))


def test_upsample_matches_loop_oracle():
    rng = np.random.default_rng(1)
    for mag_spec in (M20, M10, M5):
        j = J[mag_spec]
        fr, fc = 13, 9  # deliberately not multiples of j
        cr, cc = coarse_grid_for(fr, fc, mag_spec)
        scores = rng.random((cr, cc))
        got = upsample_to_finest(pm(scores, mag_spec=mag_spec), fr, fc)
        np.testing.assert_array_equal(got, upsample_ref(scores, j, fr, fc))


def test_upsample_rejects_wrong_shape():
    # a 3x3 grid at 20x cannot cover a 4x4 finest grid (needs 2x2)
    with pytest.raises(ConsistencyError):
        upsample_to_finest(pm(np.zeros((3, 3)), mag_spec=M20), 4, 4)


def test_upsample_mean_is_area_weighted_coarse_mean():
    # when the finest dims are exact multiples of j the plain means agree;
    # with clipping, coarse cells weight by their covered finest-cell count
    rng = np.random.default_rng(7)
    scores = rng.random((3, 4))
    up = upsample_to_finest(pm(scores, mag_spec=M10), 12, 16)
    assert up.mean() == pytest.approx(scores.mean(), abs=1e-12)
    up_clipped = upsample_to_finest(pm(scores, mag_spec=M10), 9, 13)
    weights = np.zeros((3, 4))
    for r in range(9):
        for c in range(13):
            weights[r // 4, c // 4] += 1
    want = (scores * weights).sum() / weights.sum()
    assert up_clipped.mean() == pytest.approx(want, abs=1e-12)


# ---------------------------------------------------------------------------
# Fusion


def test_fuse_identical_members_is_identity():
    rng = np.random.default_rng(3)
    scores = rng.random((6, 6))
    fused = fuse_uniform([pm(scores, model_id=f"m{k}") for k in range(3)], 6, 6)
    np.testing.assert_allclose(fused.scores, scores, atol=1e-15)
    assert fused.model_ids == ["m0", "m1", "m2"]


def test_fuse_half_half():
    # cell-wise scores {0,1,1,0} average to 0.5
    members = [pm([[0.0]]), pm([[1.0]]), pm([[1.0]]), pm([[0.0]])]
    fused = fuse_uniform(members, 1, 1)
    assert fused.scores[0, 0] == 0.5


def test_fuse_k1_identity():
    scores = np.random.default_rng(5).random((4, 4))
    fused = fuse_uniform([pm(scores)], 4, 4)
    np.testing.assert_array_equal(fused.scores, scores)


def test_fuse_matches_covering_average_oracle():
    rng = np.random.default_rng(11)
    fr, fc = 8, 8
    members = []
    pairs = []
    for mag_spec in (M40, M10, M5):
        cr, cc = coarse_grid_for(fr, fc, mag_spec)
        scores = rng.random((cr, cc))
        members.append(pm(scores, mag_spec=mag_spec))
        pairs.append((scores, J[mag_spec]))
    fused = fuse_uniform(members, fr, fc)
    want = covering_average_ref(pairs, fr, fc)
    np.testing.assert_array_equal(fused.scores, want)  # exact, not approx


def test_fuse_permutation_invariant_exactly():
    rng = np.random.default_rng(13)
    members = [pm(rng.random((4, 4)), model_id=f"m{k}") for k in range(4)]
    a = fuse_uniform(members, 4, 4).scores
    b = fuse_uniform(members[::-1], 4, 4).scores
    c = fuse_uniform([members[2], members[0], members[3], members[1]], 4, 4).scores
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, c)


def test_fuse_requires_members_and_one_slide():
    with pytest.raises(ValueError):
        fuse_uniform([], 4, 4)
    with pytest.raises(ConsistencyError):
        fuse_uniform([pm(np.zeros((2, 2)), slide_id="a"),
                      pm(np.zeros((2, 2)), slide_id="b")], 2, 2)


def test_fused_map_to_prediction_map():
    fused = FusedMap(slide_id="s", model_ids=["a", "b"], rows=2, cols=2,
                     scores=np.full((2, 2), 0.25))
    out = fused.to_prediction_map()
    assert out.model_id == "fused:a+b"
    assert out.mag_spec == M40


# ---------------------------------------------------------------------------
# Binarization


def test_binarize_strict():
    scores = np.array([[0.0, 0.5, 0.5000001, 1.0]])
    out = binarize(scores, 0.5)
    np.testing.assert_array_equal(out, [[0, 0, 1, 1]])


def test_binarize_all_zero():
    for t in (0.0, 0.3, 0.9):
        assert binarize(np.zeros((3, 3)), t).sum() == 0


def test_binarize_monotone_in_threshold():
    rng = np.random.default_rng(2)
    scores = rng.random((10, 10))
    prev = binarize(scores, 0.1)
    for t in (0.3, 0.6, 0.9):
        cur = binarize(scores, t)
        assert (cur <= prev).all()  # raising t never adds positives
        prev = cur


# ---------------------------------------------------------------------------
# Wire format


def test_wire_round_trip_exact(tmp_path):
    rng = np.random.default_rng(6)
    scores = rng.random((5, 9)).astype(np.float32).astype(np.float64)
    src = pm(scores, mag_spec=M20)
    save_prediction_map(src, tmp_path, "mapA")
    back = load_prediction_map(tmp_path, "mapA")
    assert back.model_id == "m" and back.mag_spec == M20
    np.testing.assert_array_equal(back.scores, scores.astype(np.float32))


def test_wire_deterministic_bytes(tmp_path):
    scores = np.random.default_rng(8).random((3, 3))
    save_prediction_map(pm(scores), tmp_path / "x", "m")
    save_prediction_map(pm(scores), tmp_path / "y", "m")
    assert (tmp_path / "x" / "m.json").read_bytes() == (tmp_path / "y" / "m.json").read_bytes()
    assert (tmp_path / "x" / "m.f32").read_bytes() == (tmp_path / "y" / "m.f32").read_bytes()


def test_wire_rejects_bad_dtype(tmp_path):
    save_prediction_map(pm(np.zeros((2, 2))), tmp_path, "m")
    header = (tmp_path / "m.json").read_text().replace("f32le", "f64le")
    (tmp_path / "m.json").write_text(header)
    with pytest.raises(FormatError):
        load_prediction_map(tmp_path, "m")


def test_wire_rejects_truncated_scores(tmp_path):
    save_prediction_map(pm(np.zeros((4, 4))), tmp_path, "m")
    raw = (tmp_path / "m.f32").read_bytes()
    (tmp_path / "m.f32").write_bytes(raw[:-8])
    with pytest.raises(ConsistencyError):
        load_prediction_map(tmp_path, "m")


def test_wire_rejects_out_of_range_scores(tmp_path):
    save_prediction_map(pm(np.full((2, 2), 0.5)), tmp_path, "m")
    bad = np.array([0.5, 0.5, 1.5, 0.5], dtype="<f4")
    (tmp_path / "m.f32").write_bytes(bad.tobytes())
    with pytest.raises(FormatError, match=r"outside \[0, 1\]"):
        load_prediction_map(tmp_path, "m")


def test_wire_missing_header(tmp_path):
    with pytest.raises(FormatError):
        load_prediction_map(tmp_path, "absent")


def test_prediction_map_validation():
    with pytest.raises(ConsistencyError):
        PredictionMap("s", "m", M40, 2, 2, np.zeros((3, 2)))
    with pytest.raises(FormatError):
        pm(np.array([[0.5, np.nan]]))
    with pytest.raises(FormatError):
        pm(np.array([[-0.1, 0.5]]))
