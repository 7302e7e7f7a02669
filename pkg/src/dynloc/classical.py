"""Orbit-averaged resonance model in the rotating frame.

The slow dynamics of a test particle at action ``J`` and rotating-frame angle
``phi`` follows the contours of

    <H>(J, phi) = 3/4 beta J (J/2 - J_c) + <V_int>(J, phi)

where ``<V_int>`` is the interaction with the frozen initial Gaussian averaged
over one fast orbit. This module tabulates ``<H>``, finds and classifies its
fixed points, traces the separatrix around the resonance island at
``(J_c, 0)``, and measures the fraction ``F`` of the initial Wigner function
that the island captures.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from skimage.measure import find_contours

from .core import ModelParams, to_action_angle

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SQRT_PI = math.sqrt(math.pi)

ELLIPTIC = "elliptic"
HYPERBOLIC = "hyperbolic"
DEGENERATE = "degenerate"


def secular_frequency(params: ModelParams) -> float:
    """Frequency shift ``dOmega = 3/4 beta J_c``.

    Fixed by requiring ``d/dJ [J (1 - Omega) + 3/8 beta J^2] = 0`` at ``J_c``
    (3/8 is the orbit average of ``sin^4``); the interaction is assumed not to
    shift the frequency.
    """
    return 0.75 * params.beta * params.J_c


def _nodes(n_nodes):
    t = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
    return np.cos(t), np.sin(t)


def _chunks(size, n_nodes, budget=4_000_000):
    step = max(1, budget // n_nodes)
    for i in range(0, size, step):
        yield slice(i, min(size, i + step))


def avg_interaction(J, phi, params: ModelParams, n_nodes: int = 256):
    """Orbit-averaged Gaussian interaction ``<V_int>(J, phi)``.

    Trapezoid rule on ``n_nodes`` uniform nodes over one period of

        u / (2 pi sqrt(pi)) * exp(-(sqrt(2J) sin(phi + t) - sqrt(2 J_c) sin t)^2)

    which converges spectrally since the integrand is smooth and periodic.
    """
    J, phi = np.broadcast_arrays(np.asarray(J, float), np.asarray(phi, float))
    shape = J.shape
    J, phi = J.ravel(), phi.ravel()
    if np.any(J < 0):
        raise ValueError("action J must be non-negative")
    cos_t, sin_t = _nodes(n_nodes)
    r = np.sqrt(2.0 * J)
    # sqrt(2J) sin(phi + t) - sqrt(2J_c) sin t = a cos t + b sin t
    a = r * np.sin(phi)
    b = r * np.cos(phi) - math.sqrt(2.0 * params.J_c)
    out = np.empty(J.size)
    for sl in _chunks(J.size, n_nodes):
        s = a[sl, None] * cos_t + b[sl, None] * sin_t
        out[sl] = np.exp(-s * s).mean(axis=1)
    out *= params.u / SQRT_PI
    return out.reshape(shape) if shape else float(out[0])


def avg_hamiltonian(J, phi, params: ModelParams, n_nodes: int = 256):
    J = np.asarray(J, float)
    resonance = 0.75 * params.beta * J * (0.5 * J - params.J_c)
    out = resonance + avg_interaction(J, phi, params, n_nodes)
    return out if np.ndim(out) else float(out)


def avg_hamiltonian_grad(J, phi, params: ModelParams, n_nodes: int = 256):
    """``(d<H>/dJ, d<H>/dphi)`` by quadrature of the differentiated integrand (J > 0)."""
    J, phi = np.broadcast_arrays(np.asarray(J, float), np.asarray(phi, float))
    shape = J.shape
    J, phi = J.ravel(), phi.ravel()
    cos_t, sin_t = _nodes(n_nodes)
    r = np.sqrt(2.0 * J)
    sp, cp = np.sin(phi), np.cos(phi)
    a = r * sp
    b = r * cp - math.sqrt(2.0 * params.J_c)
    dJ = np.empty(J.size)
    dphi = np.empty(J.size)
    for sl in _chunks(J.size, n_nodes):
        s = a[sl, None] * cos_t + b[sl, None] * sin_t
        w = -2.0 * s * np.exp(-s * s)
        # d s / d phi = r cos(phi + t); d s / dJ = sin(phi + t) / r
        sin_pt = sp[sl, None] * cos_t + cp[sl, None] * sin_t
        cos_pt = cp[sl, None] * cos_t - sp[sl, None] * sin_t
        dJ[sl] = (w * sin_pt).mean(axis=1) / r[sl]
        dphi[sl] = (w * cos_pt).mean(axis=1) * r[sl]
    scale = params.u / SQRT_PI
    dJ = scale * dJ + 0.75 * params.beta * (J - params.J_c)
    dphi = scale * dphi
    return dJ.reshape(shape), dphi.reshape(shape)


# ---------------------------------------------------------------- fixed points


@dataclass(frozen=True)
class FixedPoint:
    J: float
    phi: float
    kind: str
    H: float
    hessian_det: float

    def as_dict(self):
        return {"J": self.J, "phi": self.phi, "type": self.kind, "H": self.H, "hessian_det": self.hessian_det}


def _H_cartesian(xi, eta, params, n_nodes):
    J = 0.5 * (xi * xi + eta * eta)
    phi = np.arctan2(eta, xi)
    return avg_hamiltonian(J, phi, params, n_nodes)


def hessian(J, phi, params: ModelParams, n_nodes: int = 256, h: float = 1e-3):
    """Hessian ``(hxx, hyy, hxy)`` of ``<H>`` in the Cartesian chart
    ``(sqrt(2J) cos phi, sqrt(2J) sin phi)``, by central differences.

    The determinant sign matches the one in ``(J, phi)`` (the chart change is
    canonical) but stays well conditioned near ``J = 0``.
    """
    r = math.sqrt(2.0 * J)
    x0, y0 = r * math.cos(phi), r * math.sin(phi)
    off = np.array([[0, 0], [h, 0], [-h, 0], [0, h], [0, -h], [h, h], [h, -h], [-h, h], [-h, -h]])
    v = _H_cartesian(x0 + off[:, 0], y0 + off[:, 1], params, n_nodes)
    hxx = (v[1] - 2 * v[0] + v[2]) / h**2
    hyy = (v[3] - 2 * v[0] + v[4]) / h**2
    hxy = (v[5] - v[6] - v[7] + v[8]) / (4 * h * h)
    return float(hxx), float(hyy), float(hxy)


def classify(J, phi, params: ModelParams, n_nodes: int = 256, rel_tol: float = 1e-7):
    """Return ``(kind, det)``; degenerate when ``|det| < rel_tol * |Hess|_F^2``."""
    hxx, hyy, hxy = hessian(J, phi, params, n_nodes)
    det = hxx * hyy - hxy * hxy
    frob2 = hxx * hxx + hyy * hyy + 2 * hxy * hxy
    if frob2 == 0.0 or abs(det) < rel_tol * frob2:
        return DEGENERATE, det
    return (ELLIPTIC if det > 0 else HYPERBOLIC), det


def find_fixed_points(params: ModelParams, J_max: float | None = None, n_nodes: int = 256,
                      n_scan: int = 4000, scale: float | None = None):
    """Stationary points of ``<H>`` on the lines ``phi = 0, pi/2, pi, -pi/2``.

    ``d<H>/dphi`` vanishes identically on ``phi = 0`` and ``phi = pi`` (``<H>`` is
    even and 2 pi periodic), so there a sign change of ``d<H>/dJ`` is a fixed
    point; on the other two lines a root must also have a vanishing angular
    derivative to count. Points are classified by :func:`classify`.

    Returns ``(points, center_found)``.
    """
    J_c = params.J_c
    if J_max is None:
        J_max = 3.0 * J_c
    if not J_max > J_c:
        raise ValueError("J_max must exceed J_c")
    if scale is None:
        Js = np.linspace(0.0, J_max, 200)
        P = np.linspace(-np.pi, np.pi, 200)
        scale = float(np.abs(avg_hamiltonian(Js[:, None], P[None, :], params, n_nodes)).max())

    Js = np.linspace(J_max * 1e-7, J_max, n_scan)
    points = []
    for line in (0.0, 0.5 * np.pi, np.pi, -0.5 * np.pi):
        dJ = avg_hamiltonian_grad(Js, np.full_like(Js, line), params, n_nodes)[0]
        if np.all(dJ == 0.0):
            roots = [J_c]  # flat field: report one degenerate point per line
        else:
            roots = list(Js[dJ == 0.0])
        sgn = np.sign(dJ)
        for i in [] if np.all(dJ == 0.0) else np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]:
            f = lambda J: float(avg_hamiltonian_grad(J, line, params, n_nodes)[0])
            roots.append(brentq(f, Js[i], Js[i + 1], xtol=1e-13, rtol=1e-13))
        for J in roots:
            gJ, gphi = avg_hamiltonian_grad(J, line, params, n_nodes)
            if abs(float(gphi)) > 1e-9 * max(scale, 1e-300) * max(1.0, J):
                continue
            kind, det = classify(J, line, params, n_nodes)
            points.append(FixedPoint(float(J), float(line), kind,
                                     float(avg_hamiltonian(J, line, params, n_nodes)), det))

    center_found = any(abs(p.phi) < 1e-12 and abs(p.J - J_c) < 1e-6 * J_c for p in points)
    if not center_found:
        log.warning("no stationary point found at (J_c, 0) for %s", params)
    return points, center_found


# ---------------------------------------------------------------- geometry


def polygon_area(poly) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def winding_number(points, poly) -> np.ndarray:
    """Winding number of the closed polyline ``poly`` around each point."""
    pts = np.atleast_2d(np.asarray(points, float))
    px, py = pts[:, 0], pts[:, 1]
    v = np.asarray(poly, float)
    if not np.allclose(v[0], v[-1]):
        v = np.vstack([v, v[:1]])
    wn = np.zeros(len(pts), dtype=int)
    lo, hi = v.min(axis=0), v.max(axis=0)
    cand = np.nonzero((px >= lo[0]) & (px <= hi[0]) & (py >= lo[1]) & (py <= hi[1]))[0]
    if cand.size == 0:
        return wn
    qx, qy = px[cand], py[cand]
    acc = np.zeros(cand.size, dtype=int)
    for (x0, y0), (x1, y1) in zip(v[:-1], v[1:]):
        if y0 == y1:
            continue
        side = (x1 - x0) * (qy - y0) - (qx - x0) * (y1 - y0)
        up = (y0 <= qy) & (y1 > qy) & (side > 0)
        down = (y0 > qy) & (y1 <= qy) & (side < 0)
        acc += up.astype(int) - down.astype(int)
    wn[cand] = acc
    return wn


def inside_periodic(phi, J, poly) -> np.ndarray:
    """Point-in-separatrix test in ``(phi, J)`` with phi taken mod 2 pi."""
    phi = np.asarray(phi, float).ravel()
    J = np.asarray(J, float).ravel()
    inside = np.zeros(phi.size, dtype=bool)
    for shift in (0.0, -2 * np.pi, 2 * np.pi):
        inside |= winding_number(np.column_stack([phi + shift, J]), poly) != 0
    return inside


# ---------------------------------------------------------------- phase map


@dataclass
class AveragedPhaseMap:
    """Tabulated ``<H>`` on ``phi in (-pi, pi]`` x ``J in [0, J_max]``.

    ``H_values[i, j]`` is the value at ``(phi_grid[i], J_grid[j])``.
    """

    params: ModelParams
    phi_grid: np.ndarray
    J_grid: np.ndarray
    H_values: np.ndarray
    n_nodes: int = 256
    fixed_points: list = field(default_factory=list)
    center_found: bool = False
    separatrix: np.ndarray | None = None  # closed polyline, columns (phi, J)
    saddle: FixedPoint | None = None
    area: float = 0.0

    @property
    def has_separatrix(self) -> bool:
        return self.separatrix is not None

    def periodic_padded(self, n_pad: int):
        """Field extended periodically by ``n_pad`` columns on each side in phi."""
        n = len(self.phi_grid)
        dphi = 2.0 * np.pi / n
        idx = np.arange(-n_pad, n + n_pad)
        phis = self.phi_grid[0] + idx * dphi
        return phis, self.H_values[idx % n]


def tabulate(params: ModelParams, n_phi: int = 600, n_J: int = 600, J_max: float | None = None,
             n_nodes: int = 256) -> AveragedPhaseMap:
    if J_max is None:
        J_max = 3.0 * params.J_c
    phi = -np.pi + 2.0 * np.pi * np.arange(1, n_phi + 1) / n_phi
    J = np.linspace(0.0, J_max, n_J)
    H = avg_hamiltonian(J[None, :], phi[:, None], params, n_nodes)
    return AveragedPhaseMap(params, phi, J, H, n_nodes)


def build_phase_map(params: ModelParams, n_phi: int = 600, n_J: int = 600, J_max: float | None = None,
                    n_nodes: int = 256) -> AveragedPhaseMap:
    """Tabulate, locate fixed points and trace the separatrix."""
    pmap = tabulate(params, n_phi, n_J, J_max, n_nodes)
    scale = float(np.abs(pmap.H_values).max())
    pmap.fixed_points, pmap.center_found = find_fixed_points(
        params, pmap.J_grid[-1], n_nodes, scale=scale)
    trace_separatrix(pmap)
    return pmap


def trace_separatrix(pmap: AveragedPhaseMap, nudges=(1e-4, 1e-3, 1e-2)):
    """Extract the separatrix enclosing ``(J_c, 0)`` by marching squares.

    For each hyperbolic point the level ``<H>`` = saddle value, moved a fraction
    ``nudge`` of the way towards the island center so the contour avoids the
    X-crossing, is contoured on the periodically padded table. Larger nudges
    are tried only when the pinch near the saddle is unresolved on the grid.
    The governing saddle is the one whose closed contour encloses
    ``(J_c, 0)``; if several do, the smallest enclosed area wins. Sets and
    returns ``pmap.separatrix`` (``None`` when nothing encloses the center).
    """
    params = pmap.params
    pmap.separatrix, pmap.saddle, pmap.area = None, None, 0.0
    saddles = [p for p in pmap.fixed_points if p.kind == HYPERBOLIC]
    if not pmap.center_found or not saddles:
        return None
    h_center = avg_hamiltonian(params.J_c, 0.0, params, pmap.n_nodes)
    n_pad = max(2, len(pmap.phi_grid) // 8)
    phis, H = pmap.periodic_padded(n_pad)
    Js = pmap.J_grid
    rows, cols = np.arange(len(phis)), np.arange(len(Js))
    center = np.array([[0.0, params.J_c]])

    best = None
    for sp in saddles:
        # keep the island side disconnected at ambiguous cells
        connect = "low" if h_center > sp.H else "high"
        for nudge in nudges:
            level = sp.H + nudge * (h_center - sp.H)
            found = None
            for c in find_contours(H, level, fully_connected=connect):
                if len(c) < 4 or not np.allclose(c[0], c[-1]):
                    continue
                poly = np.column_stack([np.interp(c[:, 0], rows, phis), np.interp(c[:, 1], cols, Js)])
                if winding_number(center, poly)[0] != 0:
                    found = poly
                    break
            if found is not None:
                area = polygon_area(found)
                if best is None or area < best[0]:
                    best = (area, found, sp)
                break
    if best is None:
        return None
    pmap.area, pmap.separatrix, pmap.saddle = best
    return pmap.separatrix


def sample_initial_wigner(params: ModelParams, n_samples: int, seed: int):
    """Draw ``(x, p)`` from ``W0 = exp(-(x - x_c)^2 - p^2) / pi``."""
    rng = np.random.default_rng(seed)
    sd = math.sqrt(0.5)
    x = params.x_c + sd * rng.standard_normal(n_samples)
    p = sd * rng.standard_normal(n_samples)
    return x, p


def confinement_fraction(params: ModelParams, separatrix, seed: int = 0, n_samples: int = 100_000):
    """Fraction of the initial Wigner function inside ``separatrix``.

    Monte Carlo over ``W0`` mapped to the t = 0 rotating frame. Returns
    ``(F, standard_error)``; ``F = 0`` when no separatrix exists.
    """
    if separatrix is None:
        return 0.0, 0.0
    x, p = sample_initial_wigner(params, n_samples, seed)
    J, phi = to_action_angle(x, p, 0.0, params.Omega, params.theta_c)
    frac = float(inside_periodic(phi, J, separatrix).mean())
    return frac, math.sqrt(frac * (1.0 - frac) / n_samples)


@dataclass(frozen=True)
class FResult:
    u: float
    beta: float
    F: float
    stderr: float
    area: float


def compute_F(params: ModelParams, seed: int = 0, n_samples: int = 100_000, n_phi: int = 600,
              n_J: int = 600, J_max: float | None = None, n_nodes: int = 256) -> FResult:
    pmap = build_phase_map(params, n_phi, n_J, J_max, n_nodes)
    F, se = confinement_fraction(params, pmap.separatrix, seed, n_samples)
    return FResult(float(params.u), float(params.beta), F, se, float(pmap.area))


def _compute_F_cell(args):
    params, kw = args
    return compute_F(params, **kw)


def f_table(u_values, beta_values, x_c: float = -8.0, workers: int = 1, **kw) -> np.ndarray:
    """``F[i, j]`` at ``(beta_values[i], u_values[j])``."""
    cells = [(ModelParams(u, b, x_c), kw) for b in beta_values for u in u_values]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_compute_F_cell, cells))
    else:
        results = [_compute_F_cell(c) for c in cells]
    return np.array([r.F for r in results]).reshape(len(beta_values), len(u_values)), results


def f_contour(u_range, beta_range, level: float = 0.9, resolution=(20, 20), x_c: float = -8.0,
              workers: int = 1, **kw):
    """Level set of ``F(u, beta)`` over a box, as polylines with columns ``(u, beta)``.

    Returns ``(polylines, u_values, beta_values, F_table, results)``; the
    polyline list is empty (with a warning) when the level is not crossed.
    """
    if not 0.0 <= level <= 1.0:
        raise ValueError("level must lie in [0, 1]")
    n_u, n_b = resolution
    us = np.linspace(u_range[0], u_range[1], n_u)
    bs = np.linspace(beta_range[0], beta_range[1], n_b)
    table, results = f_table(us, bs, x_c, workers, **kw)
    lines = []
    if table.min() < level < table.max():
        for c in find_contours(table, level):
            lines.append(np.column_stack([np.interp(c[:, 1], np.arange(n_u), us),
                                          np.interp(c[:, 0], np.arange(n_b), bs)]))
    if not lines:
        warnings.warn(f"F never crosses level {level} in the requested box", RuntimeWarning)
    return lines, us, bs, table, results


# ---------------------------------------------------------------- exports


def write_H_csv(pmap: AveragedPhaseMap, path) -> None:
    P, J = np.meshgrid(pmap.phi_grid, pmap.J_grid, indexing="ij")
    data = np.column_stack([P.ravel(), J.ravel(), pmap.H_values.ravel()])
    np.savetxt(path, data, delimiter=",", header="phi,J,H", comments="", fmt="%.17g")


def phase_map_summary(pmap: AveragedPhaseMap, F=None, stderr=None) -> dict:
    p = pmap.params
    return {
        "schema_version": SCHEMA_VERSION,
        "params": {"u": p.u, "beta": p.beta, "x_c": p.x_c, "J_c": p.J_c,
                   "delta_omega": p.delta_omega, "Omega": p.Omega},
        "center_found": pmap.center_found,
        "fixed_points": [fp.as_dict() for fp in pmap.fixed_points],
        "separatrix": None if pmap.separatrix is None else {
            "vertices": pmap.separatrix.tolist(),
            "area": pmap.area,
            "saddle": pmap.saddle.as_dict(),
        },
        "F": F,
        "F_stderr": stderr,
    }


def write_phase_map_json(pmap: AveragedPhaseMap, path, F=None, stderr=None) -> None:
    Path(path).write_text(json.dumps(phase_map_summary(pmap, F, stderr), indent=1))


def write_F_csv(results, path) -> None:
    rows = ["u,beta,F,stderr"]
    rows += [f"{r.u!r},{r.beta!r},{r.F!r},{r.stderr!r}" for r in results]
    Path(path).write_text("\n".join(rows) + "\n")
