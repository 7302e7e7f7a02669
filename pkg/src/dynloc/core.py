"""Shared types: grids, model parameters, initial states, canonical maps, units.

Conventions (harmonic-oscillator units, hbar = m = omega_0 = 1):

* action-angle: ``x = sqrt(2J) sin(theta)``, ``p = sqrt(2J) cos(theta)``
* rotating frame: ``phi = theta - Omega t - theta_c`` where ``theta_c`` is the
  angle of the initial packet center, so the packet sits at ``phi = 0`` at t = 0.
  For ``x_c < 0`` this is ``theta_c = -pi/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy.constants as const

# CODATA values via scipy.constants; only scattering_length uses these.
PHYSICAL_CONSTANTS = {
    "hbar": const.hbar,  # J s
    "amu": const.atomic_mass,  # kg
    "mass_K39": 38.9637064864 * const.atomic_mass,  # kg, AME2020
    "mass_Rb87": 86.909180531 * const.atomic_mass,  # kg, AME2020
}

# packet tails must fit inside the periodic box
TAIL_MARGIN = 6.0


class ConfigError(ValueError):
    """Invalid scenario configuration (bad key, value, or missing file)."""


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid on ``[-L, L)`` and its FFT-ordered wavenumbers."""

    n_points: int = 2048
    half_width: float = 25.0

    def __post_init__(self):
        n = self.n_points
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"n_points must be a power of two >= 2, got {n}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n_points

    @property
    def x(self) -> np.ndarray:
        return -self.half_width + self.dx * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)


@dataclass(frozen=True)
class ModelParams:
    """Physics of one scenario: interaction ``u``, anharmonicity ``beta``,
    initial displacement ``x_c``."""

    u: float
    beta: float
    x_c: float = -8.0

    @property
    def J_c(self) -> float:
        return 0.5 * self.x_c * self.x_c

    @property
    def delta_omega(self) -> float:
        # secular shift that pins the packet center in the rotating frame
        return 0.75 * self.beta * self.J_c

    @property
    def Omega(self) -> float:
        return 1.0 + self.delta_omega

    @property
    def theta_c(self) -> float:
        """Initial angle of the packet center (``-pi/2`` for ``x_c < 0``)."""
        return math.atan2(self.x_c, 0.0)

    def flipped(self) -> "ModelParams":
        return ModelParams(-self.u, -self.beta, self.x_c)


@dataclass
class WaveState:
    grid: SpatialGrid
    psi: np.ndarray
    time: float = 0.0

    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dx)

    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2


@dataclass(frozen=True)
class PhasePoint:
    J: float
    phi: float


def wrap_angle(a):
    """Reduce angles to ``(-pi, pi]``."""
    a = np.asarray(a, dtype=float)
    out = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return out if out.ndim else float(out)


def make_initial_state(grid: SpatialGrid, x_c: float) -> WaveState:
    """Displaced harmonic ground state ``pi^(-1/4) exp(-(x - x_c)^2 / 2)``.

    Both widths equal ``sqrt(1/2)``. The discrete norm is rescaled to one so the
    grid invariant holds exactly, not just up to quadrature error.
    """
    need = abs(x_c) + TAIL_MARGIN
    if need >= grid.half_width:
        raise ValueError(
            f"box half-width {grid.half_width} too small for x_c={x_c}; need L > {need}"
        )
    x = grid.x
    psi = np.pi ** -0.25 * np.exp(-0.5 * (x - x_c) ** 2)
    psi = psi / math.sqrt(np.sum(psi * psi) * grid.dx)
    return WaveState(grid, psi.astype(np.complex128), 0.0)


def to_action_angle(x, p, t=0.0, Omega=1.0, theta_c=0.0):
    """Map ``(x, p)`` at time ``t`` to rotating-frame ``(J, phi)``.

    ``phi = atan2(x, p) - Omega t - theta_c`` reduced to ``(-pi, pi]``;
    the origin maps to ``phi = 0``. Works on scalars and arrays.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    J = 0.5 * (x * x + p * p)
    theta = np.arctan2(x, p)
    phi = wrap_angle(theta - Omega * t - theta_c)
    phi = np.where(J == 0.0, 0.0, phi)
    if J.ndim == 0:
        return float(J), float(phi)
    return J, phi


def from_action_angle(J, phi, t=0.0, Omega=1.0, theta_c=0.0):
    """Inverse of :func:`to_action_angle`."""
    J = np.asarray(J, dtype=float)
    theta = np.asarray(phi, dtype=float) + Omega * t + theta_c
    r = np.sqrt(2.0 * J)
    x, p = r * np.sin(theta), r * np.cos(theta)
    if x.ndim == 0:
        return float(x), float(p)
    return x, p


def scattering_length(u, omega0, omega_perp, n_atoms, mass):
    """s-wave scattering length (m) realising the dimensionless interaction ``u``.

    ``a_s = u * omega0 * delta / (2 N omega_perp)`` with the oscillator length
    ``delta = sqrt(hbar / (m omega0))``. Frequencies are ordinary frequencies in
    Hz (omega / 2 pi); ``mass`` in kg.
    """
    if omega0 <= 0 or omega_perp <= 0:
        raise ValueError("trap frequencies must be positive")
    if n_atoms <= 0:
        raise ValueError("atom count must be positive")
    if mass <= 0:
        raise ValueError("mass must be positive")
    w0 = 2.0 * math.pi * omega0
    delta = math.sqrt(PHYSICAL_CONSTANTS["hbar"] / (mass * w0))
    return u * omega0 * delta / (2.0 * n_atoms * omega_perp)


# ---------------------------------------------------------------- configuration


def _floats(text):
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _starts(text):
    out = []
    for item in text.split(";"):
        if item.strip():
            J, phi = item.split(":")
            out.append((float(J), float(phi)))
    return tuple(out)


@dataclass(frozen=True)
class ScenarioConfig:
    """Flat key-value scenario file. Dotted keys map onto fields via metadata."""

    u: float = 0.0
    beta: float = 0.0
    x_c: float = -8.0
    grid_n: int = field(default=2048, metadata={"key": "grid.n"})
    grid_L: float = field(default=25.0, metadata={"key": "grid.L"})
    dt: float = 5e-3
    t_final: float = 1999.0
    snapshot_interval: float = 10.0
    observable_interval: float = 1.0
    window: tuple = field(default=(1899.0, 1999.0), metadata={"parse": _floats})
    # sweep lattice
    sweep_u: tuple = field(default=(), metadata={"key": "sweep.u", "parse": _floats})
    sweep_beta: tuple = field(default=(), metadata={"key": "sweep.beta", "parse": _floats})
    # classical tabulation
    n_phi: int = field(default=600, metadata={"key": "classical.n_phi"})
    n_J: int = field(default=600, metadata={"key": "classical.n_J"})
    J_max_factor: float = field(default=3.0, metadata={"key": "classical.J_max_factor"})
    n_nodes: int = field(default=256, metadata={"key": "classical.n_nodes"})
    mc_samples: int = field(default=100_000, metadata={"key": "classical.samples"})
    # F contour box
    fc_u: tuple = field(default=(-0.5, 0.5), metadata={"key": "fcontour.u", "parse": _floats})
    fc_beta: tuple = field(default=(-3e-4, 3e-4), metadata={"key": "fcontour.beta", "parse": _floats})
    fc_resolution: tuple = field(default=(20, 20), metadata={"key": "fcontour.resolution", "parse": lambda s: tuple(int(v) for v in _floats(s))})
    # classical trajectories
    traj_t_final: float = field(default=500.0, metadata={"key": "traj.t_final"})
    traj_dt: float = field(default=1e-3, metadata={"key": "traj.dt"})
    traj_starts: tuple = field(default=(), metadata={"key": "traj.starts", "parse": _starts})
    # Husimi display grid; 0 reuses the classical tabulation grid
    husimi_n: int = field(default=0, metadata={"key": "husimi.n"})

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.u, self.beta, self.x_c)

    @property
    def grid(self) -> SpatialGrid:
        return SpatialGrid(self.grid_n, self.grid_L)

    def as_dict(self) -> dict:
        return {_key_of(f): getattr(self, f.name) for f in fields(self)}


def _key_of(f):
    return f.metadata.get("key", f.name)


_FIELDS = {_key_of(f): f for f in fields(ScenarioConfig)}


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        f = _FIELDS.get(key)
        if f is None:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        conv = f.metadata.get("parse") or type(f.default)
        try:
            values[f.name] = conv(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {val!r} ({exc})") from None
    try:
        cfg = ScenarioConfig(**values)
        cfg.grid  # validates the grid eagerly
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if cfg.dt <= 0 or cfg.t_final < 0:
        raise ConfigError(f"{source}: need dt > 0 and t_final >= 0")
    if cfg.husimi_n < 0 or cfg.husimi_n == 1:
        raise ConfigError(f"{source}: husimi.n must be 0 (tabulation grid) or >= 2")
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for key, val in cfg.as_dict().items():
        if isinstance(val, tuple):
            if val and isinstance(val[0], tuple):
                val = "; ".join(":".join(repr(v) for v in item) for item in val)
            else:
                val = ", ".join(repr(v) for v in val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
