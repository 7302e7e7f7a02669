"""Wigner and Husimi phase-space pictures of the wavepacket.

The Husimi function uses coherent states of width ``sqrt(1/2)``,

    Q(x0, p0) = |<g_{x0,p0}|psi>|^2 / (2 pi),

normalised so that ``int Q dx0 dp0 = 1``. It equals the Wigner function
convolved with ``exp(-(x^2 + p^2)) / pi``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from .classical import SCHEMA_VERSION, AveragedPhaseMap, inside_periodic
from .core import ModelParams, WaveState, from_action_angle


@dataclass
class PhaseSpaceField:
    """Scalar field on a rectilinear phase-space grid.

    ``axes`` is ``("x", "p")`` or ``("phi", "J")``; ``values[i, j]`` sits at
    ``(grid0[i], grid1[j])``.
    """

    axes: tuple
    grid0: np.ndarray
    grid1: np.ndarray
    values: np.ndarray
    kind: str = "husimi"
    frame: dict = field(default_factory=dict)

    def cell_area(self) -> float:
        return float((self.grid0[1] - self.grid0[0]) * (self.grid1[1] - self.grid1[0]))

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_area())

    def peak(self):
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.grid0[i]), float(self.grid1[j])

    def to_csv(self, path) -> None:
        A, B = np.meshgrid(self.grid0, self.grid1, indexing="ij")
        name = "Q" if self.kind == "husimi" else "W"
        np.savetxt(Path(path), np.column_stack([A.ravel(), B.ravel(), self.values.ravel()]),
                   delimiter=",", header=f"{self.axes[0]},{self.axes[1]},{name}", comments="", fmt="%.17g")

    def write_sidecar(self, path) -> None:
        meta = {"schema_version": SCHEMA_VERSION, "kind": self.kind, "axes": list(self.axes), **self.frame}
        Path(path).write_text(json.dumps(meta, indent=1))


def husimi_xp(state: WaveState, x0, p0, cutoff: float = 1e-14) -> PhaseSpaceField:
    """Husimi function on a Cartesian ``(x0, p0)`` grid by direct overlaps."""
    x0 = np.asarray(x0, float)
    p0 = np.asarray(p0, float)
    x = state.grid.x
    psi = state.psi
    keep = np.abs(psi) ** 2 > cutoff * np.max(np.abs(psi) ** 2)
    x, psi = x[keep], psi[keep]
    dx = state.grid.dx
    # <g|psi> = pi^(-1/4) int exp(-(x - x0)^2 / 2) exp(-i p0 (x - x0)) psi(x) dx
    window = np.pi**-0.25 * np.exp(-0.5 * (x0[:, None] - x[None, :]) ** 2) * psi[None, :]
    phases = np.exp(-1j * np.outer(x, p0))
    amp = (window @ phases) * dx
    Q = np.abs(amp) ** 2 / (2.0 * np.pi)
    return PhaseSpaceField(("x", "p"), x0, p0, Q, "husimi", {"time": state.time})


def husimi(state: WaveState, params: ModelParams, phi_grid, J_grid, delta_phi: float = 0.0,
           resolution: float = 0.1) -> PhaseSpaceField:
    """Husimi function in the rotating frame ``(phi, J)`` at the state's time.

    Computed on a Cartesian grid of spacing ``resolution`` and resampled
    (cubic) through ``x0 = sqrt(2J) sin(phi + delta_phi + Omega t + theta_c)``.
    A nonzero ``delta_phi`` recentres the picture and is recorded in the frame.
    """
    phi_grid = np.asarray(phi_grid, float)
    J_grid = np.asarray(J_grid, float)
    r_max = math.sqrt(2.0 * J_grid.max())
    L = state.grid.half_width
    if r_max > L:
        raise ValueError(f"requested J up to {J_grid.max():g} (radius {r_max:.3g}) exceeds box half-width {L:g}")
    n = int(math.ceil(2 * (r_max + 1.0) / resolution)) + 1
    axis = np.linspace(-r_max - 1.0, r_max + 1.0, n)
    cart = husimi_xp(state, axis, axis)
    P, J = np.meshgrid(phi_grid, J_grid, indexing="ij")
    xq, pq = from_action_angle(J, P + delta_phi, state.time, params.Omega, params.theta_c)
    h = axis[1] - axis[0]
    coords = np.array([(xq - axis[0]) / h, (pq - axis[0]) / h])
    Q = map_coordinates(cart.values, coords, order=3, mode="nearest")
    Q = np.maximum(Q, 0.0)  # cubic overshoot in the far tails
    frame = {"time": state.time, "Omega": params.Omega, "delta_phi": delta_phi}
    return PhaseSpaceField(("phi", "J"), phi_grid, J_grid, Q, "husimi", frame)


def initial_wigner(x_c: float):
    """Closed-form Wigner function of the displaced ground state."""

    def W0(x, p):
        x = np.asarray(x, float)
        p = np.asarray(p, float)
        return np.exp(-((x - x_c) ** 2) - p * p) / np.pi

    return W0


def wigner_xp(state: WaveState, x0, p0) -> PhaseSpaceField:
    """Direct Wigner transform on a small grid (used for cross-checks only).

    ``W(x, p) = 1/pi int psi*(x + y) psi(x - y) exp(2 i p y) dy`` with
    ``psi`` interpolated spectrally at the shifted points.
    """
    x0 = np.asarray(x0, float)
    p0 = np.asarray(p0, float)
    g = state.grid
    dx = g.dx
    coef = np.fft.fft(state.psi)
    k = g.k
    y = dx * np.arange(-g.n_points // 4, g.n_points // 4)

    def psi_at(xs):
        return (np.exp(1j * np.outer(xs - g.x[0], k)) @ coef) / g.n_points

    W = np.empty((x0.size, p0.size))
    for i, xv in enumerate(x0):
        f = np.conj(psi_at(xv + y)) * psi_at(xv - y)
        W[i] = (np.exp(2j * np.outer(p0, y)) @ f).real * dx / np.pi
    return PhaseSpaceField(("x", "p"), x0, p0, W, "wigner", {"time": state.time})


def inside_fraction(field_: PhaseSpaceField, separatrix, delta_sep: float = 0.0) -> float:
    """Share of the field's mass on its ``(phi, J)`` grid inside ``separatrix``.

    ``delta_sep`` rotates the separatrix by that angle before testing.
    """
    if separatrix is None:
        return 0.0
    P, J = np.meshgrid(field_.grid0, field_.grid1, indexing="ij")
    inside = inside_periodic(P.ravel() - delta_sep, J.ravel(), separatrix).reshape(P.shape)
    total = field_.values.sum()
    return float(field_.values[inside].sum() / total) if total > 0 else 0.0


def best_recentering(state: WaveState, params: ModelParams, pmap: AveragedPhaseMap, phi_grid, J_grid,
                     n_scan: int = 72):
    """Scan ``delta_phi`` and keep the one maximizing the inside fraction."""
    base = husimi(state, params, phi_grid, J_grid)
    dphi = phi_grid[1] - phi_grid[0]
    P, J = np.meshgrid(phi_grid, J_grid, indexing="ij")
    inside = inside_periodic(P.ravel(), J.ravel(), pmap.separatrix).reshape(P.shape)
    best = (-1.0, 0.0)
    for d in np.linspace(-np.pi, np.pi, n_scan, endpoint=False):
        # rolling the uniform periodic grid == recentering by a multiple of dphi
        shift = int(round(d / dphi))
        frac = float(np.roll(base.values, -shift, axis=0)[inside].sum())
        if frac > best[0]:
            best = (frac, shift * dphi)
    return best[1]


@dataclass
class OverlayReport:
    time: float
    inside_fraction: float
    inside_mass: float
    peak_phi: float
    peak_J: float
    delta_phi: float

    def as_dict(self):
        return {"schema_version": SCHEMA_VERSION, **self.__dict__}


def overlay_report(state: WaveState, pmap: AveragedPhaseMap, n_phi: int | None = None, n_J: int | None = None,
                   recenter: bool = False, delta_phi: float = 0.0):
    """Husimi containment of ``state`` in the separatrix of ``pmap``.

    ``inside_fraction`` is relative to the mass on the ``(phi, J)`` display
    window; ``inside_mass`` is absolute (the Husimi function has unit mass).
    Returns ``(report, field)``.
    """
    if pmap.separatrix is None:
        raise ValueError("phase map has no separatrix")
    params = pmap.params
    # default to the tabulation grid so the overlay needs no resampling
    phi_grid = pmap.phi_grid if n_phi is None else -np.pi + 2 * np.pi * np.arange(1, n_phi + 1) / n_phi
    J_grid = pmap.J_grid if n_J is None else np.linspace(0.0, pmap.J_grid[-1], n_J)
    if recenter:
        delta_phi = best_recentering(state, params, pmap, phi_grid, J_grid)
    fld = husimi(state, params, phi_grid, J_grid, delta_phi)
    frac = inside_fraction(fld, pmap.separatrix)
    mass = frac * fld.integral()
    pk_phi, pk_J = fld.peak()
    return OverlayReport(state.time, frac, mass, pk_phi, pk_J, delta_phi), fld
