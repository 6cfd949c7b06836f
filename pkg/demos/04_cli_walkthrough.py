"""
Driving the simulator from the command line
===========================================

The same steps a shell user would take, run through ``nudgesim.cli.main``:
inspect a config, run it, and export plot-ready CSVs.
"""

import csv
import json
import tempfile
from pathlib import Path

from nudgesim.cli import main

config = Path(__file__).resolve().parents[1] / "configs" / "example.json"
work = Path(tempfile.mkdtemp(prefix="nudgesim-demo-"))
run_dir = work / "run"

# %% nudgesim inspect --config configs/example.json
main(["inspect", "--config", str(config)])

# %% nudgesim run --config configs/example.json --out <dir>
code = main(["run", "--config", str(config), "--out", str(run_dir), "--workers", "1"])
print(f"exit code {code}")
manifest = json.loads((run_dir / "manifest.json").read_text())
for entry in manifest["files"]:
    print(f"  {entry['name']:16s} {entry['bytes']:>10,d} bytes  {entry['sha256'][:12]}")

# %% nudgesim export {decay_shapes, activity_curve, regret_curve} --run <dir>
for what in ("decay_shapes", "activity_curve", "regret_curve"):
    main(["export", what, "--run", str(run_dir)])
    with open(run_dir / f"{what}.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    print(f"\n{what}.csv: {len(rows) - 1} rows, columns {rows[0]}")
    for row in rows[1:4]:
        print("  ", row)

print(f"\noutputs left in {work}")
