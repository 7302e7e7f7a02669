"""Contours of the averaged Hamiltonian with separatrices and full trajectories.

    python3 scripts/phase_portraits.py --out runs/portraits

Takes well under a minute. Panels are u = -0.20, -0.02, 0.10, 0.5 at beta = 2e-4.
"""

import argparse
from pathlib import Path

import numpy as np

from dynloc.classical import build_phase_map, write_H_csv, write_phase_map_json
from dynloc.core import ModelParams, from_action_angle
from dynloc.trajectories import contour_starts, integrate_batch, slow_component

PANELS = (-0.20, -0.02, 0.10, 0.5)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("runs/portraits"))
    ap.add_argument("--beta", type=float, default=2e-4)
    ap.add_argument("--t-final", type=float, default=500.0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    panels = []
    for u in PANELS:
        p = ModelParams(u, args.beta)
        pm = build_phase_map(p)
        tag = f"u={u!r}"
        write_H_csv(pm, args.out / f"H_{tag}.csv")
        write_phase_map_json(pm, args.out / f"phase_map_{tag}.json")
        starts = contour_starts(pm, (0.5,))[:1] if pm.has_separatrix else [(p.J_c, 0.0, 0.0)]
        xp = [from_action_angle(J, ph, 0.0, p.Omega, p.theta_c) for J, ph, _ in starts]
        tr = integrate_batch(xp, p, args.t_final)[0]
        tr.to_csv(args.out / f"traj_{tag}.csv")
        slow_component(tr).to_csv(args.out / f"traj_{tag}_slow.csv")
        panels.append((u, pm, tr))
        print(f"{tag}: {len(pm.fixed_points)} fixed points, separatrix area {pm.area:.2f}")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; data written to", args.out)
        return
    fig, axes = plt.subplots(2, 2, figsize=(8, 7))
    for ax, (u, pm, tr) in zip(axes.flat, panels):
        ax.contour(pm.phi_grid, pm.J_grid, pm.H_values.T, levels=30, colors="k", linewidths=0.5)
        if pm.has_separatrix:
            # draw the loop in the window and its 2 pi images so wrapped pieces show
            for shift in (-2 * np.pi, 0.0, 2 * np.pi):
                ax.plot(pm.separatrix[:, 0] + shift, pm.separatrix[:, 1], "k", lw=2)
        ax.plot(tr.phi, tr.J, ",", color="tab:red")
        ax.set_xlim(-np.pi, np.pi)
        ax.set_ylim(0, pm.J_grid[-1])
        ax.set_title(f"u = {u}")
        ax.set_xlabel("phi")
        ax.set_ylabel("J")
    fig.tight_layout()
    fig.savefig(args.out / "phase_portraits.png", dpi=150)
    print("wrote", args.out / "phase_portraits.png")


if __name__ == "__main__":
    main()
