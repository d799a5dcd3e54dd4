"""Run each demo configuration through the ``gfk`` CLI and show its exit code.

Usage: python3 demos/run_demos.py [--builtin NAME ...]

The three configs under demos/configs exercise the non-zero exit paths:
a false claim (1), a schema violation (2) and a ladder that leaves the
domain of a transported family (3).  Built-in scenario names given with
``--builtin`` are run as well and should all exit 0.
"""
import argparse
import subprocess
import sys
import tempfile
from pathlib import Path

CONFIGS = Path(__file__).resolve().parent / "configs"
EXPECTED = {"false-negligible": 1, "missing-manifold": 2, "ladder-outside-domain": 3}


def run_one(target: str, out_dir: Path) -> int:
    cmd = [sys.executable, "-m", "gfk.cli", "run", target, "--out", str(out_dir), "--quiet"]
    done = subprocess.run(cmd, capture_output=True, text=True)
    for line in (done.stdout + done.stderr).strip().splitlines():
        print(f"    {line}")
    return done.returncode


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--builtin", nargs="*", default=["mollifier-moments", "commutation-local"])
    args = parser.parse_args()
    mismatches = 0
    with tempfile.TemporaryDirectory() as tmp:
        jobs = [(p.stem, str(p), EXPECTED.get(p.stem)) for p in sorted(CONFIGS.glob("*.json"))]
        jobs += [(name, name, 0) for name in args.builtin]
        for label, target, expected in jobs:
            print(f"{label}:")
            code = run_one(target, Path(tmp) / label)
            ok = expected is None or code == expected
            mismatches += not ok
            print(f"    exit {code}" + ("" if ok else f" (expected {expected})"))
    return 1 if mismatches else 0


if __name__ == "__main__":
    sys.exit(main())
