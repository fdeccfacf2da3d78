#!/usr/bin/env python3
"""Run each CLI subcommand at a small size and validate its JSON output.

usage: schema_check.py <depbounds binary> <output.schema.json>
"""
import json
import math
import random
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema


def write_data(dirpath: Path, n: int = 250, seed: int = 3) -> None:
    rng = random.Random(seed)
    lines = ["y,delta,x1,x2"]
    for _ in range(n):
        x1 = rng.gauss(0.0, 1.0)
        x2 = 1 if rng.random() < 0.5 else 0
        t = -math.log(1.0 - rng.random()) * math.exp(-(x1 - x2))
        c = rng.expovariate(0.3)
        lines.append(f"{min(t, c):.10g},{int(t <= c)},{x1:.10g},{x2}")
    (dirpath / "data.csv").write_text("\n".join(lines) + "\n")
    (dirpath / "schema.ini").write_text("[columns]\nx1 = continuous\nx2 = binary\n")
    (dirpath / "design.ini").write_text(
        "[design]\nn = 150\ncensoring_rate = 0.2\nfamily = x1=spline:4,x2=indicator\n")


def main() -> int:
    binary, schema_path = sys.argv[1], sys.argv[2]
    schema = json.loads(Path(schema_path).read_text())
    validator = jsonschema.Draft7Validator(schema)
    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        write_data(d)
        data = ["--data", str(d / "data.csv"), "--schema", str(d / "schema.ini")]
        runs = {
            "estimate": ["estimate", *data, "--n-boot", "100", "--mode", "single"],
            "estimate --trace": ["estimate", *data, "--n-boot", "100", "--mode", "scan", "--n-init", "30",
                                 "--trace"],
            "combine": ["combine", *data, "--times", "0.5,1", "--rule", "majority", "--n-boot", "100",
                        "--mode", "single"],
            "simulate": ["simulate", "--design", str(d / "design.ini"), "--reps", "2", "--n-boot", "50",
                         "--reps-csv", str(d / "reps.csv")],
            "oracle": ["oracle", "--design", str(d / "design.ini"), "--n-mc", "2000", "--grid-points", "11",
                       "--half-width", "5", "--error", "0.5", "--draws", "1"],
        }
        for name, args in runs.items():
            proc = subprocess.run([binary, *args], capture_output=True, text=True)
            if proc.returncode not in (0, 2):
                print(f"FAIL {name}: exit {proc.returncode}: {proc.stderr.strip()}")
                failures += 1
                continue
            try:
                doc = json.loads(proc.stdout)
            except json.JSONDecodeError as e:
                print(f"FAIL {name}: not JSON ({e})")
                failures += 1
                continue
            errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
            for e in errors:
                print(f"FAIL {name}: {'/'.join(map(str, e.path))}: {e.message}")
            failures += bool(errors)
            if not errors:
                print(f"ok   {name}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
