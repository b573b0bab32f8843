"""Write every built-in scan recipe to CSV + JSON sidecar and print the summaries.

    python3 scripts/figure_grids.py --outdir grids --workers 4
"""
import argparse
import contextlib
import io
import json
from pathlib import Path

from photoncatch import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--outdir", default="grids")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--recipe", action="append", choices=sorted(cli.SCAN_RECIPES), help="default: all")
    args = ap.parse_args()

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.recipe or sorted(cli.SCAN_RECIPES):
        csv = out / f"{name}.csv"
        with contextlib.redirect_stdout(io.StringIO()):
            code = cli.main(["scan", "--recipe", name, "--workers", str(args.workers), "--emit-plot-data",
                             "--out", str(csv)])
        side = json.loads(csv.with_suffix(".json").read_text())
        s = side["summary"]
        print(f"{name:8s} exit={code} points={s['n_points']} failed={s['n_failed']} max={s.get('max_efficiency', float('nan')):.6f}")


if __name__ == "__main__":
    main()
