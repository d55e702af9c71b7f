"""Run configuration: schema-validated JSON, unknown keys rejected."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from ..characteristics import Characteristic, CharacteristicError
from ..library import named_characteristic
from ..shapes import ShapeError

KINDS = (
    "popsize",
    "forward",
    "lookdown",
    "prelimit",
    "dual",
    "verify-suite",
    "wf-study",
    "closedness-study",
)


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


# field name -> (python types, required, default); None marks kind-specific
_COMMON: dict[str, tuple] = {
    "kind": (str, True, None),
    "seed": (int, True, None),
    "characteristic": (dict, False, None),
    "horizon": ((int, float), False, None),
    "replicates": (int, False, 1),
    "grid": (int, False, 64),
    "eps": ((int, float), False, None),
    "out": (str, False, None),
    "n0": ((int, float), False, 1.0),
    "jobs": (int, False, 1),
}

_EXTRA: dict[str, dict[str, tuple]] = {
    "popsize": {},
    "forward": {
        "atoms": (list, False, None),  # [[label, mass], ...]
        "track": ((str, int), False, None),
    },
    "lookdown": {
        "n_levels": (int, True, None),
        "atoms": (list, False, None),
        "track_tau": (list, False, []),
    },
    "prelimit": {
        "m": (int, True, None),
        "weights": (list, False, [0.5, 0.5]),
    },
    "dual": {
        "x": ((int, float), True, None),
        "y": (int, True, None),
    },
    "verify-suite": {
        "scale": ((int, float), False, 1.0),
        "criteria": (list, False, None),
    },
    "wf-study": {
        "fit_replicates": (int, False, 1000),
    },
    "closedness-study": {
        "eps_sweep": (list, False, [0.1, 0.05, 0.025]),
    },
}

_NEEDS_CHARACTERISTIC = ("popsize", "forward", "lookdown", "prelimit", "dual")
_NEEDS_HORIZON = ("popsize", "forward", "lookdown", "prelimit", "dual")


@dataclass(frozen=True)
class RunConfig:
    """Validated experiment description."""

    kind: str
    seed: int
    characteristic: Characteristic | None
    horizon: float | None
    replicates: int
    grid: int
    eps: float | None
    out: str | None
    n0: float
    jobs: int
    params: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(raw: dict) -> "RunConfig":
        return parse_config(raw)

    @staticmethod
    def from_file(path: str) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return parse_config(raw)


def _check_type(key: str, value: Any, types) -> Any:
    if isinstance(value, bool) and types is int:
        raise ConfigError(f"config.{key}: expected int, got bool")
    if not isinstance(value, types):
        names = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(f"config.{key}: expected {names}, got {type(value).__name__}")
    return value


def _parse_characteristic(obj: dict) -> Characteristic:
    if "name" in obj:
        extra = set(obj) - {"name"}
        if extra:
            raise ConfigError(f"config.characteristic: unexpected keys {sorted(extra)} next to 'name'")
        try:
            return named_characteristic(obj["name"])
        except ValueError as exc:
            raise ConfigError(f"config.characteristic.name: {exc}") from None
    try:
        return Characteristic.from_json(obj)
    except (KeyError, CharacteristicError, ShapeError, TypeError, ValueError) as exc:
        raise ConfigError(f"config.characteristic: {exc}") from None


def parse_config(raw: dict) -> RunConfig:
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"config.kind: must be one of {', '.join(KINDS)}; got {kind!r}")
    schema = dict(_COMMON)
    schema.update(_EXTRA[kind])

    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"config.{sorted(unknown)[0]}: unknown key for kind {kind!r}")

    values: dict[str, Any] = {}
    for key, (types, required, default) in schema.items():
        if key in raw:
            values[key] = _check_type(key, raw[key], types)
        elif required:
            raise ConfigError(f"config.{key}: required for kind {kind!r}")
        else:
            values[key] = default

    characteristic = None
    if values.get("characteristic") is not None:
        characteristic = _parse_characteristic(values["characteristic"])
    elif kind in _NEEDS_CHARACTERISTIC:
        raise ConfigError(f"config.characteristic: required for kind {kind!r}")

    horizon = values.get("horizon")
    if horizon is None and kind in _NEEDS_HORIZON:
        raise ConfigError(f"config.horizon: required for kind {kind!r}")
    if horizon is not None and not horizon > 0:
        raise ConfigError("config.horizon: must be positive")
    if values["replicates"] < 1:
        raise ConfigError("config.replicates: must be >= 1")
    if values["grid"] < 1:
        raise ConfigError("config.grid: must be >= 1")
    eps = values.get("eps")
    if eps is not None and not eps > 0:
        raise ConfigError("config.eps: must be positive")

    params = {k: values[k] for k in _EXTRA[kind]}
    _validate_params(kind, params)
    return RunConfig(
        kind=kind,
        seed=values["seed"],
        characteristic=characteristic,
        horizon=float(horizon) if horizon is not None else None,
        replicates=values["replicates"],
        grid=values["grid"],
        eps=float(eps) if eps is not None else None,
        out=values["out"],
        n0=float(values["n0"]),
        jobs=values["jobs"],
        params=params,
    )


def _validate_params(kind: str, params: dict) -> None:
    if kind in ("forward", "lookdown") and params.get("atoms") is not None:
        for i, entry in enumerate(params["atoms"]):
            if (
                not isinstance(entry, list)
                or len(entry) != 2
                or not isinstance(entry[1], (int, float))
            ):
                raise ConfigError(f"config.atoms[{i}]: expected [label, mass]")
            if entry[1] <= 0:
                raise ConfigError(f"config.atoms[{i}]: mass must be positive")
    if kind == "lookdown":
        if params["n_levels"] < 1:
            raise ConfigError("config.n_levels: must be >= 1")
        for i, n in enumerate(params["track_tau"]):
            if not isinstance(n, int) or n < 1:
                raise ConfigError(f"config.track_tau[{i}]: expected positive int")
    if kind == "prelimit":
        if params["m"] < 1:
            raise ConfigError("config.m: must be >= 1")
        if not all(isinstance(w, (int, float)) and w >= 0 for w in params["weights"]):
            raise ConfigError("config.weights: expected nonnegative numbers")
        if sum(params["weights"]) <= 0:
            raise ConfigError("config.weights: must have positive total")
    if kind == "dual":
        if not (0.0 <= params["x"] <= 1.0):
            raise ConfigError("config.x: must lie in [0, 1]")
        if params["y"] < 1:
            raise ConfigError("config.y: must be >= 1")
    if kind == "closedness-study":
        sweep = params["eps_sweep"]
        if not sweep or not all(isinstance(e, (int, float)) and e > 0 for e in sweep):
            raise ConfigError("config.eps_sweep: expected a list of positive cutoffs")
    if kind == "verify-suite":
        if not params["scale"] > 0:
            raise ConfigError("config.scale: must be positive")
