"""Drive the whole pipeline through the command-line interface.

Every stage writes plain files next to the slide (masks, grids, labels,
prediction maps), so each step can be rerun, inspected, or replaced by
another tool speaking the same formats. Rerunning any stage with the same
seed reproduces its outputs byte for byte.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

def magfuse(*args: str) -> str:
    cmd = [sys.executable, "-m", "magfuse.cli", *args]
    print(f"$ magfuse {' '.join(args)}")
    out = subprocess.run(cmd, check=True, text=True, capture_output=True).stdout
    for line in out.strip().splitlines():
        print(f"    {line}")
    return out


with tempfile.TemporaryDirectory() as tmp:
    slides = str(Path(tmp) / "slides")
    report = str(Path(tmp) / "report.json")
    detect = str(Path(tmp) / "detect.json")

    # Two 2048^2 slides with small tumors and background dust.
    magfuse("synth", "--out", slides, "--count", "2", "--width", "2048",
            "--height", "2048", "--blobs", "2", "--tumors", "2",
            "--tumor-um-min", "60", "--tumor-um-max", "120",
            "--speckle", "0.02", "--seed", "12")
    magfuse("segment", "--slides", slides)
    magfuse("grid", "--slides", slides, "--tau", "0.25")
    magfuse("label", "--slides", slides)

    # Oracle predictions per magnification, then uniform fusion on the
    # finest grid. With four nested members the fused map scores 1.0 on
    # true tumor cells and at most 0.75 anywhere else, so evaluating at
    # threshold 0.75 recovers the ground truth exactly.
    magfuse("predict-stub", "--slides", slides, "--stub", "oracle")
    magfuse("fuse", "--slides", slides, "--prefix", "oracle")
    magfuse("eval", "--slides", slides, "--pred", "fused",
            "--threshold", "0.75", "--out", report)
    magfuse("detect-rate", "--slides", slides, "--pred", "fused",
            "--threshold", "0.75", "--out", detect)

    doc = json.loads(Path(report).read_text())
    print("\nper-slide metrics:")
    for slide in doc["slides"]:
        print(f"  {slide['slide_id']}: mcc={slide['mcc']:.4f} "
              f"auroc={slide['auroc']:.4f} tp={slide['tp']} fp={slide['fp']}")

    layout = sorted(p.name for p in (Path(slides)).iterdir())
    first = sorted(p.name for p in (Path(slides) / layout[0]).iterdir())
    print(f"\nslide directory layout: {first}")
