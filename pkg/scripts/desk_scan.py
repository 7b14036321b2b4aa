"""Desk-scale (10 x 10 x 50) scan with checkpointing, then light vs heavy region means.

Re-running the script resumes from the records already on disk.
"""

import argparse
import os
from pathlib import Path

from fluxmist.scan import aggregate, preset_grid, run_scan

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="artifacts/desk_scan")
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = run_scan(preset_grid("desk"), workers=args.workers, records_path=out / "records.csv")
    amap = aggregate(records)
    amap.write_csv(out / "aggregate.csv")
    light = amap.region_mean(lambda ej, el: 3 <= ej / el <= 6)
    heavy = amap.region_mean(lambda ej, el: ej / el >= 10 and ej >= 5)
    print(f"valid {sum(r.valid for r in records)}/{len(records)}")
    print(f"mean n_crit  light (E_J/E_L in [3, 6]) = {light:.2f}   heavy (E_J/E_L >= 10, E_J/E_C >= 5) = {heavy:.2f}")
