"""The full command-line pipeline in one script.

Drives the hzrd CLI programmatically (each call below is exactly what the
shell command of the same shape would do): simulate a cohort, train two
models, evaluate them on the held-out split, cross-validate, and merge
everything into a report.
"""

import tempfile
from pathlib import Path

from hazardnet.cli import main

root = Path(tempfile.mkdtemp(prefix="hzrd_demo_"))
data, fits, out = root / "data", root / "fits", root / "out"

steps = [
    ["simulate", "--n", "800", "--dim", "4", "--seed", "21", "--out", str(data)],
    ["train", "--manifest", str(data / "manifest.txt"), "--model", "linear",
     "--lr", "0.02", "--dropout", "0", "--epochs", "60", "--out", str(fits / "linear")],
    ["train", "--manifest", str(data / "manifest.txt"), "--model", "mlp",
     "--hidden", "16", "--lr", "3e-3", "--dropout", "0.3", "--epochs", "40",
     "--out", str(fits / "mlp")],
    ["evaluate", "--manifest", str(data / "manifest.txt"),
     "--checkpoint", str(fits / "linear" / "checkpoint.hzrd"),
     "--split", "test", "--out", str(out / "linear")],
    ["evaluate", "--manifest", str(data / "manifest.txt"),
     "--checkpoint", str(fits / "mlp" / "checkpoint.hzrd"),
     "--split", "test", "--out", str(out / "mlp")],
    ["cv", "--manifest", str(data / "manifest.txt"), "--model", "linear",
     "--lr", "0.02", "--dropout", "0", "--epochs", "30", "--folds", "5",
     "--out", str(out / "cv")],
    ["report", "--metrics", str(out / "linear" / "metrics.csv"),
     str(out / "mlp" / "metrics.csv"), str(out / "cv" / "metrics.csv"),
     "--curves", str(out / "linear" / "km.csv"), "--out", str(out / "report")],
]

for argv in steps:
    print(f"\n$ hzrd {' '.join(argv)}")
    code = main(argv)
    assert code == 0, f"step failed with exit code {code}"

print(f"\nartifacts under {root}")
print((out / "report" / "report.txt").read_text())
