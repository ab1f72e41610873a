"""System configuration: defaults, TOML loading and scenario construction."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..errors import ConfigurationError
from ..optimizer import OptimizerParams

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def _parse_complex(value) -> complex:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError as exc:
            raise ConfigurationError(f"cannot parse complex impedance {value!r}") from exc
    if isinstance(value, (int, float, complex)):
        return complex(value)
    raise ConfigurationError(f"load_impedance must be [re, im] or a string like '0.05+50j', got {value!r}")


@dataclass(frozen=True)
class SystemConfig:
    """Physical and numerical settings of one experiment.

    Powers are in dBm, lengths in meters except ``dipole_length`` and
    ``dipole_radius``, which are fractions of the wavelength. A missing
    ``coupler_spacing`` means a quarter wavelength. Couplers sit at
    ``x_n = n * coupler_spacing`` on the x axis.
    """

    carrier_frequency: float = 7e9
    dipole_length: float = 0.5
    dipole_radius: float = 1 / 500
    N: int = 3
    coupler_spacing: float | None = None
    load_impedance: complex = complex(0.05, 50.0)
    theta_max: float = math.pi
    transmit_power: float = 30.0
    noise_power: float = -90.0
    reference_distance: float = 250.0
    num_paths: int = 6
    rng_seed: int = 0
    active_array_beamformer: str = "matched"
    optimizer: OptimizerParams = field(default_factory=OptimizerParams)

    def __post_init__(self):
        object.__setattr__(self, "load_impedance", _parse_complex(self.load_impedance))
        if isinstance(self.optimizer, dict):
            object.__setattr__(self, "optimizer", OptimizerParams.from_mapping(self.optimizer))
        for name in ("carrier_frequency", "dipole_length", "dipole_radius", "reference_distance"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.coupler_spacing is not None and not self.coupler_spacing > 0:
            raise ConfigurationError("coupler_spacing must be positive")
        if int(self.N) != self.N or self.N < 0:
            raise ConfigurationError("N must be a nonnegative integer")
        if int(self.num_paths) != self.num_paths or self.num_paths < 1:
            raise ConfigurationError("num_paths must be a positive integer")
        if not 0 < self.theta_max <= math.pi:
            raise ConfigurationError("theta_max must lie in (0, pi]")
        if self.load_impedance.real < 0:
            raise ConfigurationError("load resistance must be nonnegative")
        if self.active_array_beamformer not in ("matched", "optimal"):
            raise ConfigurationError("active_array_beamformer must be 'matched' or 'optimal'")
        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise ConfigurationError("rng_seed must be a nonnegative integer")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def spacing(self) -> float:
        return self.wavelength / 4 if self.coupler_spacing is None else self.coupler_spacing

    @property
    def pathloss(self) -> float:
        """Free-space power gain ``(lambda / (4 pi r))^2`` at the reference distance."""
        return (self.wavelength / (4 * math.pi * self.reference_distance)) ** 2

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "optimizer":
                v = v.as_dict()
            elif f.name == "load_impedance":
                v = [v.real, v.imag]
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data) -> "SystemConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown configuration key(s): {', '.join(sorted(unknown))}")
        return cls(**data)


def load_config(path) -> SystemConfig:
    """Read a TOML configuration; optimizer settings go in an ``[optimizer]`` table."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed configuration {path}: {exc}") from exc
    return SystemConfig.from_dict(data)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return str(v)


def dump_config(config: SystemConfig) -> str:
    """TOML text that :func:`load_config` reads back to an equal configuration."""
    data = config.to_dict()
    opt = data.pop("optimizer")
    lines = [f"{k} = {_toml_value(v)}" for k, v in data.items() if v is not None]
    lines.append("")
    lines.append("[optimizer]")
    lines += [f"{k} = {_toml_value(v)}" for k, v in opt.items()]
    return "\n".join(lines) + "\n"


def coupler_positions(config: SystemConfig, N: int | None = None) -> np.ndarray:
    N = config.N if N is None else N
    return np.arange(1, N + 1) * config.spacing
