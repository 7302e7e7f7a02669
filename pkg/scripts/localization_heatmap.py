"""Localization heatmap over (u, beta) with the F = 0.9 boundary overlaid.

    python3 scripts/localization_heatmap.py --out runs/heatmap --res 5 5

Each lattice cell is a full GP run to t = 1999 (about a minute on one core),
so resolution trades directly against wall time. Interrupted sweeps resume.
"""

import argparse
import csv
from dataclasses import replace
from pathlib import Path

import numpy as np

from dynloc.cli import run_fcontour, run_sweep
from dynloc.core import ScenarioConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("runs/heatmap"))
    ap.add_argument("--res", type=int, nargs=2, default=(5, 5), metavar=("NU", "NBETA"))
    ap.add_argument("--u", type=float, nargs=2, default=(-0.5, 0.5))
    ap.add_argument("--beta", type=float, nargs=2, default=(-3e-4, 3e-4))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--fc-res", type=int, nargs=2, default=(20, 20), metavar=("NU", "NBETA"),
                    help="F table resolution for the boundary contour")
    ap.add_argument("--t-final", type=float, default=1999.0, help="metric window is the last 100 time units")
    args = ap.parse_args()

    us = np.linspace(*args.u, args.res[0])
    # beta = 0 has no secular drift to resonate with; skip that row if the lattice hits it
    bs = np.array([b for b in np.linspace(*args.beta, args.res[1]) if abs(b) > 1e-15])
    window = (max(0.0, args.t_final - 100.0), args.t_final)
    cfg = replace(ScenarioConfig(), t_final=args.t_final, window=window,
                  sweep_u=tuple(us.tolist()), sweep_beta=tuple(bs.tolist()),
                  fc_u=tuple(args.u), fc_beta=tuple(args.beta), fc_resolution=tuple(args.fc_res))
    ledger = run_sweep(cfg, args.out / "sweep", args.workers, resume=True)
    failed = [k for k, v in ledger.items() if v != "done"]
    if failed:
        print(f"{len(failed)} cell(s) failed; see {args.out / 'sweep' / 'ledger.json'}")
    lines, _ = run_fcontour(cfg, args.out / "fcontour", 0.9, args.workers)

    heat = {}
    with open(args.out / "sweep" / "heatmap.csv") as fh:
        for row in csv.DictReader(fh):
            heat[float(row["u"]), float(row["beta"])] = float(row["sigma_x_sigma_p"])
    Z = np.array([[heat.get((u, b), np.nan) for u in us] for b in bs])

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; data written to", args.out)
        return
    fig, ax = plt.subplots(figsize=(5, 4))
    du, db = us[1] - us[0], bs[1] - bs[0] if len(bs) > 1 else 1e-4
    im = ax.imshow(np.log10(Z), origin="lower", aspect="auto", cmap="gray",
                   extent=(us[0] - du / 2, us[-1] + du / 2, bs[0] - db / 2, bs[-1] + db / 2))
    for ln in lines:
        ax.plot(ln[:, 0], ln[:, 1], color="tab:blue", lw=2)
    ax.set_xlabel("u")
    ax.set_ylabel("beta")
    fig.colorbar(im, label="log10 sigma_x sigma_p")
    fig.tight_layout()
    fig.savefig(args.out / "localization_heatmap.png", dpi=150)
    print("wrote", args.out / "localization_heatmap.png")


if __name__ == "__main__":
    main()
