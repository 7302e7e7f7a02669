"""Husimi distributions at t = 0 and t = 1999 over the separatrix, u = 0.5 and 0.1.

    python3 scripts/husimi_containment.py --out runs/husimi

Two GP runs (a few minutes). The final-time field is rotated by the phase
offset that best aligns it with the island; the offset is reported.
"""

import argparse
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from dynloc.cli import run_husimi
from dynloc.core import ScenarioConfig


def load_field(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    phi, J = np.unique(data[:, 0]), np.unique(data[:, 1])
    return phi, J, data[:, 2].reshape(len(phi), len(J))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("runs/husimi"))
    ap.add_argument("--beta", type=float, default=2e-4)
    ap.add_argument("--t-final", type=float, default=1999.0)
    args = ap.parse_args()

    cases = {}
    for u in (0.5, 0.1):
        cfg = replace(ScenarioConfig(), u=u, beta=args.beta, t_final=args.t_final)
        d = args.out / f"u={u!r}"
        s = run_husimi(cfg, d)
        cases[u] = d
        for tag, rep in s["overlay"].items():
            print(f"u={u} {tag}: inside fraction {rep['inside_fraction']:.3f}, delta_phi {rep['delta_phi']:+.3f}")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; data written to", args.out)
        return
    fig, axes = plt.subplots(2, 2, figsize=(8, 7))
    for row, (u, d) in enumerate(cases.items()):
        sep = np.array(json.loads((d / "phase_map.json").read_text())["separatrix"]["vertices"]) \
            if (d / "phase_map.json").exists() else None
        for col, tag in enumerate(("t0", "final")):
            ax = axes[row, col]
            phi, J, Q = load_field(d / f"husimi_{tag}.csv")
            ax.pcolormesh(phi, J, Q.T, shading="auto", cmap="magma")
            if sep is not None:
                ax.plot(sep[:, 0], sep[:, 1], "w", lw=1)
            meta = json.loads((d / f"husimi_{tag}.json").read_text())
            ax.set_title(f"u = {u}, t = {meta['time']:g}")
            ax.set_xlabel("phi")
            ax.set_ylabel("J")
    fig.tight_layout()
    fig.savefig(args.out / "husimi_containment.png", dpi=150)
    print("wrote", args.out / "husimi_containment.png")


if __name__ == "__main__":
    main()
