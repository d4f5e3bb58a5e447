"""Model parameters, dimensional scaling, and configuration parsing.

The dimensionless model uses scaled position x = 2 k x_lab, scaled time
t = omega*t_lab/2 (omega is the trap drive frequency), and the effective
Planck constant kbar = 2 k^2 hbar / (m omega).  In these units the
Hamiltonian is

    H = p^2/2 + (1/2)[a + 2 q cos(2 t)] x^2 - kbar*Delta*sigma_z
        + kbar*Omega0*cos(x)*sigma_x

with Omega0 = Rabi/omega, Delta = (omega_laser - omega_atom)/omega, and the
spontaneous decay entering as gamma = 2*gamma_lab/omega so that the
non-hermitian term is -i*kbar*(gamma/2)*sigma_+ sigma_-.

Configuration files are a single JSON document with sections ``trap``,
``numerics``, ``experiment``; unknown keys are an error.  Accepted keys:

    trap:       a, q, omega0, delta, kbar, gamma
    numerics:   n_grid, x_max, tol, dt_min, dt_max, seed, t_end,
                window ([t_a, t_b]), stride, runs, trajectories, bins
    experiment: type (quantum|classical|mcwf|floquet|sweep), sweep (list of
                detunings), preset (figure preset name), initial_internal
                (superposition|ground)
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from math import pi

from scipy.constants import hbar

from dynloc import floquet

__all__ = [
    "PhysicalParams",
    "TrapParams",
    "NumericsConfig",
    "ExperimentInfo",
    "ConfigError",
    "scale_to_dimensionless",
    "validate_stability",
    "load_config",
]


class ConfigError(ValueError):
    """Raised for malformed or invalid configuration documents."""


@dataclass(frozen=True)
class PhysicalParams:
    """Laboratory-frame parameters (SI units)."""

    mass: float  # kg
    omega: float  # trap AC drive frequency, rad/s
    wavenumber: float  # laser wave number, 1/m
    rabi: float  # Rabi frequency, rad/s
    omega_laser: float  # rad/s
    omega_atom: float  # transition frequency, rad/s
    gamma_decay: float  # spontaneous decay rate, rad/s
    a_raw: float  # DC voltage parameter (already dimensionless)
    q_raw: float  # AC voltage parameter (already dimensionless)

    def __post_init__(self):
        for name in ("mass", "omega", "wavenumber"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class TrapParams:
    """Dimensionless model parameters."""

    a: float
    q: float
    omega0: float  # scaled Rabi frequency
    delta: float  # scaled detuning
    kbar: float  # effective Planck constant
    gamma: float = 0.0  # scaled decay rate

    def __post_init__(self):
        if self.kbar <= 0.0:
            raise ValueError(f"kbar must be positive, got {self.kbar}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if self.omega0 < 0.0:
            raise ValueError(f"omega0 must be nonnegative, got {self.omega0}")


@dataclass(frozen=True)
class NumericsConfig:
    """Grid, stepping, seeding, and sampling controls."""

    n_grid: int = 8192
    x_max: float = 80.0
    tol: float = 1e-8  # per-step splitting error tolerance
    dt_min: float = 1e-12
    dt_max: float = 0.05
    seed: int = 12345
    t_end: float = 100.0 * pi
    window: tuple = ()  # (t_a, t_b); default = last fifth of [0, t_end]
    stride: float = 0.0  # observable sampling interval; default t_end/400
    runs: int = 1  # quantum-jump realizations
    trajectories: int = 4096  # classical ensemble size
    bins: int = 512  # classical histogram bins

    def __post_init__(self):
        if self.n_grid < 2 or self.n_grid & (self.n_grid - 1):
            raise ValueError(f"n_grid must be a power of two, got {self.n_grid}")
        if self.x_max <= 0.0:
            raise ValueError(f"x_max must be positive, got {self.x_max}")
        if not (0.0 < self.dt_min <= self.dt_max):
            raise ValueError(f"need 0 < dt_min <= dt_max, got {self.dt_min}, {self.dt_max}")
        if self.tol <= 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.t_end <= 0.0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.runs < 1 or self.trajectories < 1 or self.bins < 1:
            raise ValueError("runs, trajectories, and bins must all be >= 1")
        window = self.window if self.window else (0.8 * self.t_end, self.t_end)
        window = (float(window[0]), float(window[1]))
        if not (window[0] < window[1] <= self.t_end):
            raise ValueError(f"window must satisfy t_a < t_b <= t_end, got {window}")
        object.__setattr__(self, "window", window)
        stride = self.stride if self.stride > 0.0 else self.t_end / 400.0
        object.__setattr__(self, "stride", float(stride))


_EXPERIMENT_KINDS = ("quantum", "classical", "mcwf", "floquet-table", "sweep")
_INTERNAL_STATES = ("superposition", "ground")


@dataclass(frozen=True)
class ExperimentInfo:
    """What to run: experiment kind plus sweep/preset descriptors."""

    kind: str = "quantum"
    preset: str | None = None
    sweep_deltas: tuple = ()
    initial_internal: str = "superposition"

    def __post_init__(self):
        if self.kind not in _EXPERIMENT_KINDS:
            raise ValueError(f"experiment type must be one of {_EXPERIMENT_KINDS}, got {self.kind!r}")
        if self.initial_internal not in _INTERNAL_STATES:
            raise ValueError(
                f"initial_internal must be one of {_INTERNAL_STATES}, got {self.initial_internal!r}"
            )
        object.__setattr__(self, "sweep_deltas", tuple(float(d) for d in self.sweep_deltas))


def scale_to_dimensionless(phys: PhysicalParams) -> TrapParams:
    """Convert laboratory parameters to the dimensionless model set."""
    return TrapParams(
        a=phys.a_raw,
        q=phys.q_raw,
        omega0=phys.rabi / phys.omega,
        delta=(phys.omega_laser - phys.omega_atom) / phys.omega,
        kbar=2.0 * phys.wavenumber**2 * hbar / (phys.mass * phys.omega),
        gamma=2.0 * phys.gamma_decay / phys.omega,
    )


def validate_stability(trap: TrapParams, tol: float = 1e-9) -> float:
    """Check (a, q) against the Mathieu stability chart; return omega_s.

    Raises ConfigError outside the stable region (or at its edge, where the
    secular frequency is ambiguous).
    """
    try:
        sol = floquet.solve_mathieu(trap.a, trap.q, tol=tol)
    except ValueError as err:
        raise ConfigError(f"trap (a={trap.a}, q={trap.q}) rejected: {err}") from err
    return sol.omega_s


_TRAP_KEYS = {"a": "a", "q": "q", "omega0": "omega0", "delta": "delta", "kbar": "kbar", "gamma": "gamma"}
_NUMERICS_KEYS = {
    "n_grid": "n_grid",
    "x_max": "x_max",
    "tol": "tol",
    "dt_min": "dt_min",
    "dt_max": "dt_max",
    "seed": "seed",
    "t_end": "t_end",
    "window": "window",
    "stride": "stride",
    "runs": "runs",
    "trajectories": "trajectories",
    "bins": "bins",
}
_EXPERIMENT_KEYS = {
    "type": "kind",
    "sweep": "sweep_deltas",
    "preset": "preset",
    "initial_internal": "initial_internal",
}
_REQUIRED_TRAP = ("a", "q", "omega0", "delta", "kbar")


def _take_section(doc: dict, name: str, keymap: dict) -> dict:
    section = doc.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"section {name!r} must be an object")
    unknown = set(section) - set(keymap)
    if unknown:
        raise ConfigError(f"unknown key(s) in section {name!r}: {sorted(unknown)}")
    out = {}
    for key, val in section.items():
        out[keymap[key]] = tuple(val) if isinstance(val, list) else val
    return out


def load_config(text: str, check_stability: bool = True):
    """Parse a JSON configuration document.

    Returns (TrapParams, NumericsConfig, ExperimentInfo) with all defaults
    applied.  Raises ConfigError with position info on parse errors and with
    the offending field name on validation errors.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"JSON parse error at line {err.lineno}, column {err.colno}: {err.msg}") from err
    if not isinstance(doc, dict):
        raise ConfigError("top-level configuration must be a JSON object")
    unknown = set(doc) - {"trap", "numerics", "experiment"}
    if unknown:
        raise ConfigError(f"unknown top-level section(s): {sorted(unknown)}")

    trap_kwargs = _take_section(doc, "trap", _TRAP_KEYS)
    missing = [k for k in _REQUIRED_TRAP if k not in trap_kwargs]
    if missing:
        raise ConfigError(f"missing required trap key(s): {missing}")
    numerics_kwargs = _take_section(doc, "numerics", _NUMERICS_KEYS)
    experiment_kwargs = _take_section(doc, "experiment", _EXPERIMENT_KEYS)
    if experiment_kwargs.get("kind") == "floquet":
        experiment_kwargs["kind"] = "floquet-table"

    try:
        trap = TrapParams(**trap_kwargs)
        numerics = NumericsConfig(**numerics_kwargs)
        experiment = ExperimentInfo(**experiment_kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err
    if check_stability:
        validate_stability(trap)
    return trap, numerics, experiment


def config_as_dict(trap: TrapParams, numerics: NumericsConfig, experiment: ExperimentInfo) -> dict:
    """Fully resolved configuration (defaults applied), for run manifests."""
    exp = asdict(experiment)
    exp["sweep_deltas"] = list(exp["sweep_deltas"])
    num = asdict(numerics)
    num["window"] = list(num["window"])
    return {"trap": asdict(trap), "numerics": num, "experiment": exp}
