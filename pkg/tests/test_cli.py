import hashlib
import json
from pathlib import Path

import pytest

from magfuse.cli import discover_slides, main
from magfuse.errors import FormatError

SYNTH_ARGS = [
    "--width", "1024", "--height", "1024", "--blobs", "2", "--tumors", "1",
    "--tumor-um-min", "60", "--tumor-um-max", "120", "--speckle", "0.02",
    "--seed", "5",
]


def run(argv):
    rc = main(argv)
    assert rc == 0, f"command failed ({rc}): {argv}"


def tree_digest(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Two synthetic slides taken through the whole chain with the oracle stub."""
    root = tmp_path_factory.mktemp("chain")
    slides = root / "slides"
    run(["synth", "--out", str(slides), "--count", "2", *SYNTH_ARGS])
    run(["segment", "--slides", str(slides)])
    run(["grid", "--slides", str(slides), "--tau", "0.25"])
    run(["label", "--slides", str(slides)])
    run(["predict-stub", "--slides", str(slides), "--stub", "oracle"])
    run(["fuse", "--slides", str(slides), "--prefix", "oracle"])
    report = root / "report.json"
    # fused oracle scores are 1.0 on true cells and at most 0.75 elsewhere,
    # so a 0.75 threshold recovers the truth exactly
    run(["eval", "--slides", str(slides), "--pred", "fused",
         "--threshold", "0.75", "--out", str(report), "--csv", str(root / "report.csv")])
    detect = root / "detect.json"
    run(["detect-rate", "--slides", str(slides), "--pred", "fused",
         "--threshold", "0.75", "--out", str(detect)])
    return root


def test_synth_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(["synth", "--out", str(a), "--count", "1", *SYNTH_ARGS])
    run(["synth", "--out", str(b), "--count", "1", *SYNTH_ARGS])
    da, db = tree_digest(a), tree_digest(b)
    assert da and da == db


def test_full_chain_reaches_perfect_scores(pipeline):
    doc = json.loads((pipeline / "report.json").read_text())
    assert len(doc["slides"]) == 2
    for slide in doc["slides"]:
        assert slide["mcc"] == 1.0
        assert slide["auroc"] == 1.0
        assert slide["fp"] == 0 and slide["fn"] == 0
        assert slide["tp"] > 0  # the tumor actually covers tissue cells
    agg = doc["aggregate"]
    assert agg["mcc"] == {"mean": 1.0, "std": 0.0, "n": 2}


def test_csv_report_written(pipeline):
    lines = (pipeline / "report.csv").read_text().strip().splitlines()
    assert lines[0].startswith("slide_id,")
    assert len(lines) == 4  # header, two slides, aggregate
    assert lines[-1].startswith("aggregate,")


def test_detect_rate_all_found(pipeline):
    doc = json.loads((pipeline / "detect.json").read_text())
    seen = 0
    for block in doc["pooled"].values():
        if block["total"]:
            assert block["rate"] == 1.0
            seen += block["total"]
    assert seen >= 2  # one tumor region per slide


def test_stage_rerun_is_byte_identical(pipeline):
    slides = pipeline / "slides"
    maps = [p for p in slides.rglob("maps/*") if p.is_file()]
    before = {p: hashlib.sha256(p.read_bytes()).hexdigest() for p in maps}
    run(["predict-stub", "--slides", str(slides), "--stub", "oracle"])
    run(["fuse", "--slides", str(slides), "--prefix", "oracle"])
    after = {p: hashlib.sha256(p.read_bytes()).hexdigest() for p in maps}
    assert before == after


def test_compare_identical_runs(pipeline, tmp_path):
    report = pipeline / "report.json"
    out = tmp_path / "cmp.json"
    run(["compare", "--a", str(report), "--b", str(report), "--out", str(out)])
    doc = json.loads(out.read_text())
    for name in ("mcc", "auroc"):
        assert doc[name]["t"] == 0.0
        assert doc[name]["p"] == 1.0


def test_noise_and_noisy_prediction(pipeline, tmp_path):
    slides = pipeline / "slides"
    run(["noise", "--slides", str(slides), "--preset", "weak", "--seed", "3"])
    run(["predict-stub", "--slides", str(slides), "--stub", "noisy_oracle",
         "--labels", "noisy", "--flip-p", "0.1", "--seed", "3", "--name", "noisy"])
    report = tmp_path / "noisy.json"
    run(["eval", "--slides", str(slides), "--pred", "noisy_40",
         "--out", str(report)])
    doc = json.loads(report.read_text())
    assert len(doc["slides"]) == 2  # ran end to end on corrupted labels


def test_export_patches(pipeline, tmp_path):
    slides = pipeline / "slides"
    out = tmp_path / "patches"
    run(["export-patches", "--slides", str(slides), "--mag", "10",
         "--out", str(out), "--limit", "4", "--seed", "1"])
    exported = sorted(p.name for p in out.iterdir())
    assert len(exported) == 2  # one dir per slide
    for d in out.iterdir():
        files = sorted(p.name for p in d.iterdir())
        assert "grid.json" in files
        assert sum(f.startswith("patch_") for f in files) <= 4


# ---------------------------------------------------------------------------
# Discovery and exit codes


def test_discover_slides_forms(pipeline, tmp_path):
    slides = pipeline / "slides"
    found = discover_slides(slides)
    assert len(found) == 2 and found == sorted(found)
    single = discover_slides(found[0])
    assert single == [found[0]]
    with pytest.raises(FormatError):
        discover_slides(tmp_path / "nothing-here")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(FormatError):
        discover_slides(empty)


def test_exit_code_2_on_validation_error(tmp_path):
    # tumors cannot fit: diameter range below one pixel
    rc = main(["synth", "--out", str(tmp_path / "x"), "--width", "256",
               "--height", "256", "--blobs", "1", "--tumors", "1",
               "--tumor-um-min", "5000", "--tumor-um-max", "9000"])
    assert rc == 2


def test_exit_code_2_on_missing_input(tmp_path):
    rc = main(["segment", "--slides", str(tmp_path / "no-such-dir")])
    assert rc == 2


def test_exit_code_1_on_io_error(pipeline, tmp_path):
    slides = pipeline / "slides"
    rc = main(["eval", "--slides", str(slides), "--pred", "fused",
               "--out", str(tmp_path / "missing-dir" / "r.json")])
    assert rc == 1


def test_bad_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--no-such-flag"])
    assert exc.value.code == 2


def test_unknown_magnification_rejected(pipeline):
    rc = main(["grid", "--slides", str(pipeline / "slides"), "--mags", "40,25"])
    assert rc == 2
