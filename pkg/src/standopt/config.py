"""Bundled model configuration and JSON loading.

A :class:`ModelConfig` collects everything one run needs: the size-class
table, biological growth parameters, prices and costs, the initial stand,
and the tuning knobs of the genetic search and the fitness solver. The
defaults reproduce the base case, so ``ModelConfig()`` (or an empty JSON
object) is a complete, runnable setup.

JSON files override defaults section by section::

    {"econ": {"r": 0.04}, "initial_state": "x2"}

Validation errors name the offending field with a dotted path such as
``econ.Cf`` so that mistakes in large configs are easy to locate.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields

import numpy as np

from . import presets
from .dynamics import ConfigurationError, EconParams, GrowthParams, SizeClassTable
from .fitness import SolverOptions
from .ga import GaConfig
from .schedule import ScheduleBounds

_SECTIONS = ("size_classes", "growth", "econ", "initial_state", "ga", "nlp",
             "bounds")


@dataclass(eq=False)
class ModelConfig:
    """Complete description of one optimization problem.

    ``bounds`` is the authoritative schedule-length box; the nested
    ``ga.bounds`` is kept in sync with it on construction.
    """

    size_classes: SizeClassTable = field(default_factory=SizeClassTable.default)
    growth: GrowthParams = field(default_factory=GrowthParams)
    econ: EconParams = field(default_factory=EconParams)
    initial_state: np.ndarray = None
    ga: GaConfig = field(default_factory=GaConfig)
    nlp: SolverOptions = field(default_factory=SolverOptions)
    bounds: ScheduleBounds = field(default_factory=ScheduleBounds)

    def __post_init__(self):
        if self.initial_state is None:
            self.initial_state = np.array(presets.INITIAL_STATES["x1"], float)
        self.initial_state = np.asarray(self.initial_state, dtype=float)
        n = self.size_classes.n
        if self.initial_state.shape != (n,):
            raise ConfigurationError(
                f"initial_state: expected {n} class counts, "
                f"got shape {self.initial_state.shape}")
        if np.any(~np.isfinite(self.initial_state)) or np.any(self.initial_state < 0):
            raise ConfigurationError(
                "initial_state: class counts must be finite and nonnegative")
        if self.ga.bounds != self.bounds:
            self.ga = dataclasses.replace(self.ga, bounds=self.bounds)


def base_case() -> ModelConfig:
    """The default twelve-class spruce stand setup."""
    return ModelConfig()


def _require_number(section: str, key: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(
            f"{section}.{key}: expected a number, got {type(value).__name__}")
    return value


def _build_section(section: str, cls, data: dict):
    """Construct a parameter dataclass, prefixing errors with a field path."""
    known = {f.name for f in fields(cls) if f.init}
    known.discard("bounds")  # GaConfig.bounds is set from the top-level box
    for key in data:
        if key not in known:
            raise ConfigurationError(f"{section}.{key}: unknown field")
        _require_number(section, key, data[key])
    try:
        return cls(**data)
    except (ConfigurationError, ValueError) as exc:
        message = str(exc)
        culprit = next(
            (name for name in list(data) + sorted(known) if name in message),
            None)
        if culprit is None and "interest rate" in message:
            culprit = "r"
        path = f"{section}.{culprit}" if culprit else section
        raise ConfigurationError(f"{path}: {message}") from None


def _build_table(rows) -> SizeClassTable:
    if not isinstance(rows, list) or not rows:
        raise ConfigurationError(
            "size_classes: expected a nonempty list of [b, d, v1, v2] rows")
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != 4:
            raise ConfigurationError(
                f"size_classes[{i}]: expected a row of four numbers")
        for value in row:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigurationError(
                    f"size_classes[{i}]: expected a row of four numbers")
    data = np.array(rows, dtype=float)
    try:
        return SizeClassTable(b=data[:, 0], d=data[:, 1],
                              v1=data[:, 2], v2=data[:, 3])
    except ConfigurationError as exc:
        raise ConfigurationError(f"size_classes: {exc}") from None


def _build_state(value, n: int) -> np.ndarray:
    if isinstance(value, str):
        try:
            return np.array(presets.INITIAL_STATES[value], dtype=float)
        except KeyError:
            names = ", ".join(sorted(presets.INITIAL_STATES))
            raise ConfigurationError(
                f"initial_state: unknown state name {value!r} "
                f"(choose one of {names})") from None
    if not isinstance(value, list):
        raise ConfigurationError(
            "initial_state: expected a state name or a list of class counts")
    for entry in value:
        if isinstance(entry, bool) or not isinstance(entry, (int, float)):
            raise ConfigurationError(
                "initial_state: class counts must be numbers")
    if len(value) != n:
        raise ConfigurationError(
            f"initial_state: expected {n} class counts, got {len(value)}")
    return np.array(value, dtype=float)


def config_from_dict(data: dict) -> ModelConfig:
    """Build a configuration from a parsed JSON object.

    Missing sections fall back to base-case defaults; an empty object
    yields the full base case.
    """
    if not isinstance(data, dict):
        raise ConfigurationError("configuration root must be a JSON object")
    for key in data:
        if key not in _SECTIONS:
            raise ConfigurationError(f"unknown section {key!r}")
    for section in ("growth", "econ", "ga", "nlp", "bounds"):
        if section in data and not isinstance(data[section], dict):
            raise ConfigurationError(f"{section}: expected an object")

    table = (_build_table(data["size_classes"]) if "size_classes" in data
             else SizeClassTable.default())
    growth = _build_section("growth", GrowthParams, data.get("growth", {}))
    econ = _build_section("econ", EconParams, data.get("econ", {}))
    bounds = _build_section("bounds", ScheduleBounds, data.get("bounds", {}))
    ga = _build_section("ga", GaConfig, data.get("ga", {}))
    nlp = _build_section("nlp", SolverOptions, data.get("nlp", {}))
    state = (_build_state(data["initial_state"], table.n)
             if "initial_state" in data else None)
    return ModelConfig(size_classes=table, growth=growth, econ=econ,
                       initial_state=state, ga=ga, nlp=nlp, bounds=bounds)


def load_config(path) -> ModelConfig:
    """Read a JSON configuration file; ``None`` means the base case."""
    if path is None:
        return base_case()
    with open(path, "r", encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON in {path}: {exc}") from None
    return config_from_dict(data)


def config_to_dict(cfg: ModelConfig) -> dict:
    """JSON-roundtrippable dump of a configuration (used by run manifests)."""
    table = cfg.size_classes
    rows = np.column_stack([table.b, table.d, table.v1, table.v2])
    ga = {f.name: getattr(cfg.ga, f.name) for f in fields(GaConfig)
          if f.name != "bounds"}
    return {
        "size_classes": rows.tolist(),
        "growth": dataclasses.asdict(cfg.growth),
        "econ": dataclasses.asdict(cfg.econ),
        "initial_state": cfg.initial_state.tolist(),
        "ga": ga,
        "nlp": dataclasses.asdict(cfg.nlp),
        "bounds": dataclasses.asdict(cfg.bounds),
    }


def config_fingerprint(cfg: ModelConfig) -> str:
    """Hex digest identifying the full configuration, solver knobs included."""
    payload = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
