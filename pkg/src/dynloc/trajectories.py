"""Full (unaveraged) classical motion in the anharmonic trap driven by the
orbiting Gaussian interaction potential

    x'' = -x - beta x^3 - dV/dx,   V(x, t) = u / sqrt(pi) exp(-(x - x_cen(t))^2)

with ``x_cen(t) = sqrt(2 J_c) sin(Omega t + theta_c)``. Trajectories are
reported in both ``(x, p)`` and the rotating frame ``(J, phi)`` so they can be
overlaid on contours of the averaged Hamiltonian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numba
import numpy as np

from .core import ModelParams, from_action_angle, to_action_angle, wrap_angle

SQRT_PI = math.sqrt(math.pi)


class IntegrationError(RuntimeError):
    pass


def prescribed_potential(x, t, params: ModelParams):
    """Value and x-gradient of the orbiting frozen-Gaussian potential."""
    x = np.asarray(x, float)
    x_cen = math.sqrt(2.0 * params.J_c) * np.sin(params.Omega * np.asarray(t, float) + params.theta_c)
    d = x - x_cen
    v = params.u / SQRT_PI * np.exp(-d * d)
    return v, -2.0 * d * v


@numba.njit(cache=True)
def _force(x, t, u, beta, r_c, omega, theta_c):
    d = x - r_c * math.sin(omega * t + theta_c)
    dv = -2.0 * d * u / math.sqrt(math.pi) * math.exp(-d * d)
    return -x - beta * x * x * x - dv


@numba.njit(cache=True)
def _rk4(x0, p0, n_steps, dt, every, u, beta, r_c, omega, theta_c):
    n = x0.shape[0]
    n_out = n_steps // every + 1
    xs = np.empty((n_out, n))
    ps = np.empty((n_out, n))
    ok = n_out
    for j in range(n):
        x = x0[j]
        p = p0[j]
        xs[0, j] = x
        ps[0, j] = p
        for i in range(n_steps):
            t = i * dt
            k1x = p
            k1p = _force(x, t, u, beta, r_c, omega, theta_c)
            k2x = p + 0.5 * dt * k1p
            k2p = _force(x + 0.5 * dt * k1x, t + 0.5 * dt, u, beta, r_c, omega, theta_c)
            k3x = p + 0.5 * dt * k2p
            k3p = _force(x + 0.5 * dt * k2x, t + 0.5 * dt, u, beta, r_c, omega, theta_c)
            k4x = p + dt * k3p
            k4p = _force(x + dt * k3x, t + dt, u, beta, r_c, omega, theta_c)
            x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            p = p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
            if not (math.isfinite(x) and math.isfinite(p)):
                ok = min(ok, (i + 1) // every)
                break
            if (i + 1) % every == 0:
                xs[(i + 1) // every, j] = x
                ps[(i + 1) // every, j] = p
    return xs, ps, ok


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    J: np.ndarray
    phi: np.ndarray
    params: ModelParams

    def __len__(self):
        return len(self.times)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.times, self.x, self.p, self.J, self.phi])
        np.savetxt(Path(path), data, delimiter=",", header="t,x,p,J,phi", comments="", fmt="%.17g")


def integrate_batch(starts, params: ModelParams, t_final: float, dt: float = 1e-3, sample_every: int = 10):
    """Fixed-step RK4 for several ``(x, p)`` starts; returns a list of trajectories."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    starts = np.atleast_2d(np.asarray(starts, float))
    n_steps = int(round(t_final / dt))
    every = max(1, min(sample_every, n_steps)) if n_steps else 1
    xs, ps, ok = _rk4(starts[:, 0].copy(), starts[:, 1].copy(), n_steps, dt, every,
                      params.u, params.beta, math.sqrt(2.0 * params.J_c), params.Omega, params.theta_c)
    n_out = xs.shape[0]
    if ok < n_out:
        last = (xs[max(ok - 1, 0)], ps[max(ok - 1, 0)])
        raise IntegrationError(f"non-finite state after t={ok * every * dt:.6g}; last valid (x, p) = {last}")
    times = np.arange(n_out) * every * dt
    out = []
    for j in range(starts.shape[0]):
        J, phi = to_action_angle(xs[:, j], ps[:, j], times, params.Omega, params.theta_c)
        out.append(Trajectory(times, xs[:, j].copy(), ps[:, j].copy(), J, phi, params))
    return out


def integrate_trajectory(start, params: ModelParams, t_final: float, dt: float = 1e-3,
                         sample_every: int = 10) -> Trajectory:
    return integrate_batch([start], params, t_final, dt, sample_every)[0]


def slow_component(traj: Trajectory, period: float | None = None) -> Trajectory:
    """Sliding average of ``(J, phi)`` over one fast period.

    ``phi`` is averaged on its unwrapped representation. Output samples sit at
    window centers, so the result is shorter by one window.
    """
    if period is None:
        period = 2.0 * math.pi / traj.params.Omega
    dt = traj.times[1] - traj.times[0] if len(traj) > 1 else 0.0
    w = int(round(period / dt)) if dt > 0 else 0
    if w < 1 or w > len(traj):
        raise ValueError(f"trajectory of {len(traj)} samples is shorter than one averaging window")

    def mavg(a):
        c = np.cumsum(np.concatenate([[0.0], a]))
        return (c[w:] - c[:-w]) / w

    J = mavg(traj.J)
    phi = wrap_angle(mavg(np.unwrap(traj.phi)))
    times = mavg(traj.times)
    x = mavg(traj.x)
    p = mavg(traj.p)
    return replace(traj, times=times, x=x, p=p, J=J, phi=np.atleast_1d(phi))


def oscillator_energy(x, p, beta):
    """Autonomous trap energy ``p^2/2 + x^2/2 + beta x^4/4``."""
    return 0.5 * p * p + 0.5 * x * x + 0.25 * beta * x**4


def _crossing(f, a, b, n=400):
    """First sign change of ``f`` walking from ``a`` towards ``b``, refined by bisection."""
    from scipy.optimize import brentq

    grid = np.linspace(a, b, n)
    vals = np.array([f(g) for g in grid])
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    if idx.size == 0:
        return None
    i = idx[0]
    return brentq(f, grid[i], grid[i + 1]) if vals[i] != 0 else grid[i]


def contour_starts(pmap, fractions=(0.1, 0.3, 0.5, 0.7, 0.9)):
    """Launch points on island contours ``<H> = H_c + f (H_saddle - H_c)``.

    For each fraction: the two crossings of the ``phi = 0`` axis and the two
    crossings of the ``J = J_c`` line at ``+-phi``. Returns ``[(J, phi, f), ...]``.
    """
    from .classical import avg_hamiltonian

    params = pmap.params
    if pmap.saddle is None:
        raise ValueError("no separatrix: island contours undefined")
    J_c = params.J_c
    h_c = avg_hamiltonian(J_c, 0.0, params, pmap.n_nodes)
    h_s = pmap.saddle.H
    J_lo = float(pmap.separatrix[:, 1].min())
    J_hi = float(pmap.separatrix[:, 1].max())
    out = []
    for f in fractions:
        level = h_c + f * (h_s - h_c)
        along_J = lambda J: avg_hamiltonian(J, 0.0, params, pmap.n_nodes) - level
        along_phi = lambda ph: avg_hamiltonian(J_c, ph, params, pmap.n_nodes) - level
        for J in (_crossing(along_J, J_c, J_lo), _crossing(along_J, J_c, J_hi)):
            if J is not None:
                out.append((float(J), 0.0, f))
        ph = _crossing(along_phi, 0.0, np.pi)
        if ph is not None:
            out += [(J_c, float(ph), f), (J_c, -float(ph), f)]
    return out


def averaged_consistency(params: ModelParams, pmap, t_final=500.0, dt=1e-3, fractions=(0.1, 0.3, 0.5, 0.7, 0.9)):
    """Launch on island contours and measure how well slow components keep ``<H>``.

    Returns ``(starts, variation)`` where ``variation[i]`` is
    ``max_t |<H>(slow(t)) - <H>(slow(0))|`` divided by the island depth
    ``|<H>(J_c, 0) - <H>(saddle)|``.
    """
    from .classical import avg_hamiltonian

    starts = contour_starts(pmap, fractions)
    xp = [from_action_angle(J, ph, 0.0, params.Omega, params.theta_c) for J, ph, _ in starts]
    trajs = integrate_batch(xp, params, t_final, dt)
    depth = abs(avg_hamiltonian(params.J_c, 0.0, params, pmap.n_nodes) - pmap.saddle.H)
    var = []
    for tr in trajs:
        s = slow_component(tr)
        H = avg_hamiltonian(s.J, s.phi, params, pmap.n_nodes)
        var.append(float(np.abs(H - H[0]).max() / depth))
    return starts, np.array(var)
