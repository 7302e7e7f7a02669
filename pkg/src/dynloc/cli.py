"""Command-line driver.

    dynloc evolve       --config run.cfg --out DIR [--snapshot-format csv|binary]
    dynloc sweep        --config sweep.cfg --out DIR [--workers N] [--resume]
    dynloc classical    --config run.cfg --out DIR [--seed S]
    dynloc fcontour     --config box.cfg --out DIR [--level X] [--workers N] [--seed S]
    dynloc husimi       --config run.cfg --out DIR
    dynloc trajectories --config run.cfg --out DIR

Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
3 partial sweep failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from . import __version__
from . import classical, gpe, phase_space, trajectories
from .core import ConfigError, ScenarioConfig, dump_config, from_action_angle, load_config, make_initial_state

log = logging.getLogger("dynloc")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _manifest(cfg: ScenarioConfig, command: str, wall: float, **extra) -> dict:
    return {
        "schema_version": classical.SCHEMA_VERSION,
        "command": command,
        "tool": "dynloc",
        "version": __version__,
        "config": cfg.as_dict(),
        "wall_time_s": wall,
        **extra,
    }


def _write_manifest(out: Path, man: dict, cfg: ScenarioConfig) -> None:
    """Manifest plus a copy of the effective config, enough to rerun."""
    _atomic_write(out / "manifest.json", json.dumps(man, indent=1, default=list))
    _atomic_write(out / "config.cfg", dump_config(cfg))


def _split_cfg(cfg: ScenarioConfig) -> gpe.SplitStepConfig:
    try:
        return gpe.SplitStepConfig(cfg.dt, cfg.t_final, cfg.snapshot_interval, cfg.observable_interval)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _window_metric(cfg, series):
    lo, hi = cfg.window
    if series.times[-1] < lo:
        return None
    return gpe.localization_metric(series, (lo, hi))


# ---------------------------------------------------------------- evolve


def run_evolve(cfg: ScenarioConfig, out: Path, snapshot_format: str = "csv") -> dict:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    split = _split_cfg(cfg)
    try:
        state = make_initial_state(cfg.grid, cfg.x_c)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    final, series, snaps = gpe.evolve(state, cfg.params, split)
    series.to_csv(out / "observables.csv")
    if snapshot_format == "binary":
        gpe.write_snapshots_binary(out / "snapshots.bin", cfg.grid, snaps)
    else:
        (out / "snapshots").mkdir(exist_ok=True)
        gpe.write_snapshots_csv(out / "snapshots", cfg.grid, snaps)
    gpe.write_snapshots_csv(out, cfg.grid, [gpe.Snapshot(final.time, final.psi)])
    os.replace(out / "snapshot_00000.csv", out / "final_state.csv")
    metric = _window_metric(cfg, series)
    man = _manifest(cfg, "evolve", time.perf_counter() - t0, snapshot_format=snapshot_format,
                    n_snapshots=len(snaps), localization_metric=metric)
    _write_manifest(out, man, cfg)
    return man


def cmd_evolve(args) -> int:
    cfg = load_config(args.config)
    man = run_evolve(cfg, Path(args.out), args.snapshot_format)
    if man["localization_metric"] is not None:
        print(f"sigma_x*sigma_p over {list(cfg.window)}: {man['localization_metric']:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------- sweep


def cell_id(u: float, beta: float) -> str:
    return f"u={float(u)!r}_beta={float(beta)!r}"


def run_cell(cfg: ScenarioConfig, u: float, beta: float, cell_dir: str) -> dict:
    """One sweep cell: evolve without snapshots, write metric.json atomically."""
    from dataclasses import replace

    cell_dir = Path(cell_dir)
    cell_dir.mkdir(parents=True, exist_ok=True)
    c = replace(cfg, u=u, beta=beta)
    t0 = time.perf_counter()
    state = make_initial_state(c.grid, c.x_c)
    _, series, _ = gpe.evolve(state, c.params, _split_cfg(c), keep_snapshots=False)
    series.to_csv(cell_dir / "observables.csv")
    metric = gpe.localization_metric(series, c.window)
    result = {"u": u, "beta": beta, "sigma_x_sigma_p": metric}
    man = _manifest(c, "sweep-cell", time.perf_counter() - t0, result=result)
    _atomic_write(cell_dir / "manifest.json", json.dumps(man, indent=1, default=list))
    _atomic_write(cell_dir / "metric.json", json.dumps(result))
    return result


def run_sweep(cfg: ScenarioConfig, out: Path, workers: int = 1, resume: bool = False) -> dict:
    """Run every (u, beta) cell; returns the ledger ``{cell_id: status}``."""
    if not cfg.sweep_u or not cfg.sweep_beta:
        raise ConfigError("sweep needs non-empty sweep.u and sweep.beta")
    out.mkdir(parents=True, exist_ok=True)
    # plain floats keep ids and CSV text free of numpy reprs
    cells = [(float(u), float(b)) for b in cfg.sweep_beta for u in cfg.sweep_u]
    if len(set(cell_id(u, b) for u, b in cells)) != len(cells):
        raise ConfigError("duplicate (u, beta) cells in sweep lattice")
    ledger_path = out / "ledger.json"
    ledger = {}
    if resume and ledger_path.exists():
        ledger = json.loads(ledger_path.read_text())

    def done(u, b):
        return (out / "cells" / cell_id(u, b) / "metric.json").exists()

    todo = [(u, b) for u, b in cells if not (resume and done(u, b))]
    for u, b in cells:
        ledger[cell_id(u, b)] = "done" if (u, b) not in todo else "pending"
    _atomic_write(ledger_path, json.dumps(ledger, indent=1))

    def finish(key, status):
        ledger[key] = status
        _atomic_write(ledger_path, json.dumps(ledger, indent=1))
        log.info("%s: %s", key, status)

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(workers) as pool:
            futs = {pool.submit(run_cell, cfg, u, b, str(out / "cells" / cell_id(u, b))): (u, b) for u, b in todo}
            for fut in as_completed(futs):
                key = cell_id(*futs[fut])
                try:
                    fut.result()
                    finish(key, "done")
                except Exception as exc:  # worker failure marks the cell, sweep continues
                    finish(key, f"failed: {type(exc).__name__}: {exc}")
    else:
        for u, b in todo:
            key = cell_id(u, b)
            try:
                run_cell(cfg, u, b, str(out / "cells" / key))
                finish(key, "done")
            except Exception as exc:
                finish(key, f"failed: {type(exc).__name__}: {exc}")

    rows = ["u,beta,sigma_x_sigma_p"]
    for u, b in cells:
        mpath = out / "cells" / cell_id(u, b) / "metric.json"
        if mpath.exists():
            rows.append(f"{u!r},{b!r},{json.loads(mpath.read_text())['sigma_x_sigma_p']!r}")
    _atomic_write(out / "heatmap.csv", "\n".join(rows) + "\n")
    _atomic_write(out / "manifest.json", json.dumps(_manifest(cfg, "sweep", 0.0, workers=workers), indent=1, default=list))
    return ledger


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    ledger = run_sweep(cfg, Path(args.out), args.workers, args.resume)
    failed = [k for k, v in ledger.items() if v != "done"]
    for k in failed:
        print(f"cell {k}: {ledger[k]}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


# ---------------------------------------------------------------- classical


def _J_max(cfg):
    return cfg.J_max_factor * 0.5 * cfg.x_c**2


def run_classical(cfg: ScenarioConfig, out: Path, seed: int = 0) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    pmap = classical.build_phase_map(cfg.params, cfg.n_phi, cfg.n_J, _J_max(cfg), cfg.n_nodes)
    F, se = classical.confinement_fraction(cfg.params, pmap.separatrix, seed, cfg.mc_samples)
    classical.write_H_csv(pmap, out / "H.csv")
    classical.write_phase_map_json(pmap, out / "phase_map.json", F, se)
    classical.write_F_csv([classical.FResult(cfg.u, cfg.beta, F, se, pmap.area)], out / "F.csv")
    summary = classical.phase_map_summary(pmap, F, se)
    _write_manifest(out, _manifest(cfg, "classical", time.perf_counter() - t0, seed=seed), cfg)
    return summary


def cmd_classical(args) -> int:
    cfg = load_config(args.config)
    s = run_classical(cfg, Path(args.out), args.seed)
    kinds = [fp["type"] for fp in s["fixed_points"]]
    if s["separatrix"] is None:
        note = "degenerate (no isolated fixed points)" if kinds and all(k == "degenerate" for k in kinds) else "none found"
        print(f"separatrix: {note}; F = 0")
    else:
        print(f"separatrix area {s['separatrix']['area']:.6g}; F = {s['F']:.4f} +- {s['F_stderr']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------- fcontour


def run_fcontour(cfg: ScenarioConfig, out: Path, level: float = 0.9, workers: int = 1, seed: int = 0):
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        lines, us, bs, table, results = classical.f_contour(
            cfg.fc_u, cfg.fc_beta, level, cfg.fc_resolution, cfg.x_c, workers,
            seed=seed, n_samples=cfg.mc_samples, n_phi=cfg.n_phi, n_J=cfg.n_J,
            J_max=_J_max(cfg), n_nodes=cfg.n_nodes)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    classical.write_F_csv(results, out / "F_table.csv")
    rows = ["line,u,beta"]
    for i, ln in enumerate(lines):
        rows += [f"{i},{float(a)!r},{float(b)!r}" for a, b in ln]
    _atomic_write(out / "contour.csv", "\n".join(rows) + "\n")
    _write_manifest(out, _manifest(cfg, "fcontour", time.perf_counter() - t0, seed=seed, level=level,
                                   n_lines=len(lines)), cfg)
    return lines, table


def cmd_fcontour(args) -> int:
    cfg = load_config(args.config)
    lines, _ = run_fcontour(cfg, Path(args.out), args.level, args.workers, args.seed)
    print(f"{len(lines)} contour line(s) at F = {args.level}")
    return EXIT_OK


# ---------------------------------------------------------------- husimi


def _husimi_axes(cfg, pmap):
    if not cfg.husimi_n:
        return pmap.phi_grid, pmap.J_grid
    n = cfg.husimi_n
    return -np.pi + 2 * np.pi * np.arange(1, n + 1) / n, np.linspace(0, _J_max(cfg), n)


def run_husimi(cfg: ScenarioConfig, out: Path, seed: int = 0) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    pmap = classical.build_phase_map(cfg.params, cfg.n_phi, cfg.n_J, _J_max(cfg), cfg.n_nodes)
    state = make_initial_state(cfg.grid, cfg.x_c)
    F, se = classical.confinement_fraction(cfg.params, pmap.separatrix, seed, cfg.mc_samples)
    states = [("t0", state)]
    if cfg.t_final > 0:
        final, _, _ = gpe.evolve(state, cfg.params, _split_cfg(cfg), keep_snapshots=False)
        states.append(("final", final))
    reports = {}
    for tag, st in states:
        if pmap.separatrix is not None:
            n = cfg.husimi_n or None
            rep, fld = phase_space.overlay_report(st, pmap, n, n, recenter=(tag != "t0"))
            reports[tag] = rep.as_dict()
        else:
            fld = phase_space.husimi(st, cfg.params, *_husimi_axes(cfg, pmap))
        fld.to_csv(out / f"husimi_{tag}.csv")
        fld.write_sidecar(out / f"husimi_{tag}.json")
    classical.write_phase_map_json(pmap, out / "phase_map.json", F, se)
    summary = {"schema_version": classical.SCHEMA_VERSION, "F": F, "F_stderr": se, "overlay": reports}
    _atomic_write(out / "overlay.json", json.dumps(summary, indent=1))
    _write_manifest(out, _manifest(cfg, "husimi", time.perf_counter() - t0, seed=seed), cfg)
    return summary


def cmd_husimi(args) -> int:
    cfg = load_config(args.config)
    s = run_husimi(cfg, Path(args.out), args.seed)
    for tag, rep in s["overlay"].items():
        print(f"{tag}: t={rep['time']:g} inside fraction {rep['inside_fraction']:.4f} (delta_phi={rep['delta_phi']:.3f})")
    return EXIT_OK


# ---------------------------------------------------------------- trajectories


def run_trajectories(cfg: ScenarioConfig, out: Path) -> list:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    p = cfg.params
    if cfg.traj_starts:
        starts = [(J, phi) for J, phi in cfg.traj_starts]
    else:
        pmap = classical.build_phase_map(p, cfg.n_phi, cfg.n_J, _J_max(cfg), cfg.n_nodes)
        if pmap.separatrix is None:
            starts = [(p.J_c, 0.0), (1.2 * p.J_c, 0.0), (0.8 * p.J_c, 0.0)]
        else:
            starts = [(J, phi) for J, phi, _ in trajectories.contour_starts(pmap, (0.25, 0.5, 0.75))]
            # one launch just outside the island
            starts.append((float(pmap.separatrix[:, 1].max()) + 2.0, 0.0))
    xp = [from_action_angle(J, phi, 0.0, p.Omega, p.theta_c) for J, phi in starts]
    trajs = trajectories.integrate_batch(xp, p, cfg.traj_t_final, cfg.traj_dt)
    for i, tr in enumerate(trajs):
        tr.to_csv(out / f"traj_{i:03d}.csv")
        trajectories.slow_component(tr).to_csv(out / f"traj_{i:03d}_slow.csv")
    _write_manifest(out, _manifest(cfg, "trajectories", time.perf_counter() - t0,
                                   starts=[list(s) for s in starts]), cfg)
    return trajs


def cmd_trajectories(args) -> int:
    cfg = load_config(args.config)
    trajs = run_trajectories(cfg, Path(args.out))
    print(f"{len(trajs)} trajectories to t={cfg.traj_t_final:g}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dynloc", description="Dynamical localization in an anharmonic trap")
    ap.add_argument("--version", action="version", version=f"dynloc {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", required=True, metavar="DIR")
        p.add_argument("--seed", type=int, default=0, metavar="S")
        p.set_defaults(func=fn)
        return p

    p = add("evolve", cmd_evolve, "integrate one GP scenario")
    p.add_argument("--snapshot-format", choices=("csv", "binary"), default="csv")
    p = add("sweep", cmd_sweep, "localization metric over a (u, beta) lattice")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1, metavar="N")
    p.add_argument("--resume", action="store_true")
    add("classical", cmd_classical, "averaged Hamiltonian, fixed points, separatrix, F")
    p = add("fcontour", cmd_fcontour, "F level set over a (u, beta) box")
    p.add_argument("--level", type=float, default=0.9, metavar="X")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1, metavar="N")
    add("husimi", cmd_husimi, "Husimi functions and separatrix containment")
    add("trajectories", cmd_trajectories, "full classical trajectories and slow components")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (gpe.NumericalError, trajectories.IntegrationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
