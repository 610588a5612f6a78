"""Full-data run: manifest -> features -> 370-epoch training -> reports.

Needs the SAVEE and RAVDESS speech audio on disk (not shipped). Not part of
the test suite; a CPU run of the default model takes many hours.

    python scripts/reproduce.py /data/SAVEE /data/RAVDESS --out runs/full --jobs 4
"""

import argparse
import sys
from pathlib import Path

from sertk.cli import main as sertk


def run(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("roots", nargs="+")
    ap.add_argument("--out", default="runs/full")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--config")
    ap.add_argument("--set", action="append", default=[])
    args = ap.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = (["--config", args.config] if args.config else []) + [a for s in args.set for a in ("--set", s)]
    steps = [
        ["manifest", *args.roots, "--out", str(out / "manifest.csv")],
        ["extract", "--manifest", str(out / "manifest.csv"), "--out-dir", str(out / "features"),
         "--split", "--jobs", str(args.jobs), *cfg],
        ["-v", "train", "--train", str(out / "features" / "train.csv"),
         "--test", str(out / "features" / "test.csv"), "--run-dir", str(out / "run"), *cfg],
    ]
    for step in steps:
        print("$ sertk " + " ".join(step), flush=True)
        code = sertk(step)
        if code:
            return code
    print((out / "run" / "accuracy.txt").read_text())
    return 0


if __name__ == "__main__":
    sys.exit(run())
