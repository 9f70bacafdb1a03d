"""Protocol, channel and attack parameters with their defaults and validation.

Every noise quantity is expressed in shot-noise units (SNU). Configs are
immutable; derive variants with :func:`dataclasses.replace`.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Sequence, Union

PerParticipant = Union[float, Sequence[float]]


class ConfigError(ValueError):
    """Raised when a configuration fails validation or cannot be parsed."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ProtocolConfig:
    """Protocol-level scalars shared by every link.

    ``d_dB``, ``R_e`` and ``R_p`` accept either one value for all
    participants or a sequence with one entry per participant.
    """

    n: int = 5
    V_M: float = 0.6
    V_T: float = 0.01
    eps_0: float = 0.01
    eta: float = 0.98
    eta_e: float = 0.5
    v_el: float = 0.1
    T_H: float = 0.99
    d_dB: PerParticipant = 50.0
    R_e: PerParticipant = 50.0
    R_p: PerParticipant = 50.0
    N_0: int = 10**10
    N_g: int = 5 * 10**9
    m: int = 5 * 10**9
    Z: float = 6.5
    eps_PE: float = 1e-10
    eps_bar: float = 1e-10
    eps_PA: float = 1e-10
    dim_HX: int = 2

    @property
    def V(self) -> float:
        """Variance of each participant's prepared state, 1 + V_M + V_T."""
        return 1.0 + self.V_M + self.V_T

    def per_participant(self, name: str) -> tuple[float, ...]:
        """Expand a per-participant field to a tuple of length ``n``."""
        value = getattr(self, name)
        if isinstance(value, (int, float)):
            return (float(value),) * self.n
        value = tuple(float(v) for v in value)
        if len(value) != self.n:
            raise ConfigError([f"{name} has {len(value)} entries, expected n = {self.n}"])
        return value


@dataclass(frozen=True)
class ChannelGeometry:
    """Beam, telescope and path geometry of a free-space link (SI units)."""

    wavelength: float = 1.55e-6
    W_0: float = 0.06
    r: float = 0.1
    d_cor: float = 9e-6
    D_f: float = 0.22
    L: float = 8000.0
    Cn2: float = 3e-15

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.wavelength


@dataclass(frozen=True)
class AttackSpec:
    """TDA/UDA parameters: ``p`` for B(1, p), ``mu`` for U(mu, 1), and the
    success probabilities ``p_t`` and ``p_u``."""

    p: float = 0.8
    mu: float = 0.3
    p_t: float = 0.7
    p_u: float = 0.6


ALPHA_MODES = ("offset", "zero")
CHI_MODES = ("mean", "sample")
RATE_MODES = ("asymptotic", "finite")


@dataclass(frozen=True)
class SimulationOptions:
    """Numerical and modelling switches that are not protocol parameters."""

    n_samples: int = 1000
    seed: int = 0
    mode: str = "finite"
    alpha_mode: str = "offset"
    chi_mode: str = "mean"
    habs: bool = False
    attack_all_links: bool = False


def default_config() -> tuple[ProtocolConfig, ChannelGeometry]:
    return ProtocolConfig(), ChannelGeometry()


def _in_unit(errors: list[str], name: str, value: float, open_low: bool = False) -> None:
    if not math.isfinite(value) or value > 1 or value < 0 or (open_low and value == 0):
        interval = "(0,1]" if open_low else "[0,1]"
        errors.append(f"{name} out of {interval}: {value!r}")


def _nonneg(errors: list[str], name: str, value: float) -> None:
    if not math.isfinite(value) or value < 0:
        errors.append(f"{name} must be >= 0: {value!r}")


def _positive(errors: list[str], name: str, value: float) -> None:
    if not math.isfinite(value) or value <= 0:
        errors.append(f"{name} must be > 0: {value!r}")


def _number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def validate(config: ProtocolConfig) -> list[str]:
    """Return every violated invariant of ``config``; an empty list means valid."""
    errors: list[str] = []
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name in ("d_dB", "R_e", "R_p"):
            items = [value] if _number(value) else list(value) if isinstance(value, (list, tuple)) else [value]
            if not all(_number(v) for v in items):
                errors.append(f"{f.name} must be a number or a list of numbers")
            continue
        if not _number(value):
            errors.append(f"{f.name} must be a number: {value!r}")
    if errors:
        return errors

    if not isinstance(config.n, int) or config.n < 1:
        errors.append(f"n must be an integer >= 1: {config.n!r}")
    for name in ("V_M", "V_T", "eps_0", "v_el"):
        _nonneg(errors, name, getattr(config, name))
    _in_unit(errors, "eta", config.eta, open_low=True)
    _in_unit(errors, "eta_e", config.eta_e, open_low=True)
    _in_unit(errors, "T_H", config.T_H, open_low=True)
    for name in ("eps_PE", "eps_bar", "eps_PA"):
        value = getattr(config, name)
        if not math.isfinite(value) or not 0 < value < 1:
            errors.append(f"{name} out of (0,1): {value!r}")
    _nonneg(errors, "Z", config.Z)
    for name in ("N_0", "N_g", "m"):
        value = getattr(config, name)
        if not math.isfinite(value) or value < 0 or value != int(value):
            errors.append(f"{name} must be a non-negative integer: {value!r}")
    if config.N_g < 1:
        errors.append(f"N_g must be >= 1: {config.N_g!r}")
    if config.N_g + config.m > config.N_0:
        errors.append(f"N_g + m <= N_0 violated: {config.N_g} + {config.m} > {config.N_0}")
    if not isinstance(config.dim_HX, int) or config.dim_HX < 1:
        errors.append(f"dim_HX must be an integer >= 1: {config.dim_HX!r}")
    for name in ("d_dB", "R_e", "R_p"):
        value = getattr(config, name)
        values = [value] if _number(value) else list(value)
        if not _number(value) and isinstance(config.n, int) and len(values) != config.n:
            errors.append(f"{name} has {len(values)} entries, expected n = {config.n}")
        for v in values:
            if not math.isfinite(v):
                errors.append(f"{name} must be finite: {v!r}")
    return errors


def validate_geometry(geometry: ChannelGeometry) -> list[str]:
    errors: list[str] = []
    for f in fields(geometry):
        value = getattr(geometry, f.name)
        if not _number(value):
            errors.append(f"{f.name} must be a number: {value!r}")
        elif f.name == "Cn2":
            _nonneg(errors, f.name, value)
        else:
            _positive(errors, f.name, value)
    return errors


def validate_attack(attack: AttackSpec) -> list[str]:
    errors: list[str] = []
    for f in fields(attack):
        value = getattr(attack, f.name)
        if not _number(value):
            errors.append(f"{f.name} must be a number: {value!r}")
        else:
            _in_unit(errors, f.name, value)
    return errors


def validate_options(options: SimulationOptions) -> list[str]:
    errors: list[str] = []
    if not isinstance(options.n_samples, int) or options.n_samples < 1:
        errors.append(f"n_samples must be an integer >= 1: {options.n_samples!r}")
    if not isinstance(options.seed, int) or not 0 <= options.seed < 2**64:
        errors.append(f"seed must be an unsigned 64-bit integer: {options.seed!r}")
    if options.mode not in RATE_MODES:
        errors.append(f"mode must be one of {RATE_MODES}: {options.mode!r}")
    if options.alpha_mode not in ALPHA_MODES:
        errors.append(f"alpha_mode must be one of {ALPHA_MODES}: {options.alpha_mode!r}")
    if options.chi_mode not in CHI_MODES:
        errors.append(f"chi_mode must be one of {CHI_MODES}: {options.chi_mode!r}")
    for name in ("habs", "attack_all_links"):
        if not isinstance(getattr(options, name), bool):
            errors.append(f"{name} must be a boolean")
    return errors


def check(*objects: Any) -> None:
    """Validate each object and raise :class:`ConfigError` with all problems."""
    validators = {
        ProtocolConfig: validate,
        ChannelGeometry: validate_geometry,
        AttackSpec: validate_attack,
        SimulationOptions: validate_options,
    }
    errors: list[str] = []
    for obj in objects:
        errors.extend(validators[type(obj)](obj))
    if errors:
        raise ConfigError(errors)


# --- serialization -----------------------------------------------------------

SECTIONS = {
    "protocol": ProtocolConfig,
    "geometry": ChannelGeometry,
    "attack": AttackSpec,
    "simulation": SimulationOptions,
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, as loaded from a JSON config file."""

    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    geometry: ChannelGeometry = field(default_factory=ChannelGeometry)
    attack: AttackSpec = field(default_factory=AttackSpec)
    simulation: SimulationOptions = field(default_factory=SimulationOptions)
    recipe: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {name: asdict(getattr(self, name)) for name in SECTIONS}
        for section in out.values():
            for key, value in section.items():
                if isinstance(value, tuple):
                    section[key] = list(value)
        if self.recipe:
            out["recipe"] = dict(self.recipe)
        return out


RECIPE_KEYS = ("command", "param", "values", "blocks", "bins", "description")


def _build(cls: type, data: Any, section: str, errors: list[str]) -> Any:
    if not isinstance(data, dict):
        errors.append(f"section {section!r} must be an object")
        return cls()
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        errors.append(f"unknown keys in {section!r}: {', '.join(unknown)}")
        return cls()
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    return cls(**kwargs)


def from_dict(data: dict) -> RunConfig:
    """Build a :class:`RunConfig`, rejecting unknown keys and invalid values."""
    if not isinstance(data, dict):
        raise ConfigError(["config root must be a JSON object"])
    errors: list[str] = []
    unknown = sorted(set(data) - set(SECTIONS) - {"recipe"})
    if unknown:
        errors.append(f"unknown top-level keys: {', '.join(unknown)}")
    parts = {name: _build(cls, data.get(name, {}), name, errors) for name, cls in SECTIONS.items()}
    recipe = data.get("recipe", {})
    if not isinstance(recipe, dict):
        errors.append("section 'recipe' must be an object")
        recipe = {}
    bad = sorted(set(recipe) - set(RECIPE_KEYS))
    if bad:
        errors.append(f"unknown keys in 'recipe': {', '.join(bad)}")
    if errors:
        raise ConfigError(errors)
    run = RunConfig(recipe=recipe, **parts)
    check(run.protocol, run.geometry, run.attack, run.simulation)
    return run


def dumps(run: RunConfig) -> str:
    return json.dumps(run.to_dict(), indent=2, sort_keys=True) + "\n"


def loads(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"]) from exc
    return from_dict(data)


def load(path: Union[str, Path]) -> RunConfig:
    return loads(Path(path).read_text(encoding="utf-8"))


def with_overrides(run: RunConfig, overrides: dict[str, dict[str, Any]]) -> RunConfig:
    """Apply ``{section: {field: value}}`` overrides and re-validate."""
    parts = {}
    errors: list[str] = []
    for name in SECTIONS:
        section = overrides.get(name, {})
        known = {f.name for f in fields(SECTIONS[name])}
        unknown = sorted(set(section) - known)
        if unknown:
            errors.append(f"unknown keys in {name!r}: {', '.join(unknown)}")
            continue
        parts[name] = replace(getattr(run, name), **section)
    if errors:
        raise ConfigError(errors)
    out = replace(run, **parts)
    check(out.protocol, out.geometry, out.attack, out.simulation)
    return out
