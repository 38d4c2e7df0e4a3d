"""JSON run configuration: parsing, validation and defaults.

A configuration is a single JSON object. Field specifications (``cost``,
``mu_plus``, ``mu_minus``) are tagged by ``"type"``; see the README for the
full schema. Every validation error names the offending key path.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from beckmann.mesh import Rectangle
from beckmann.model import RegParams
from beckmann.solver import SolverOptions

log = logging.getLogger(__name__)

_REQUIRED = object()


class ConfigError(ValueError):
    pass


def _number(path: str, value: Any, *, positive=False, nonneg=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{path}: expected a finite number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{path}: must be > 0, got {value!r}")
    if nonneg and not value >= 0:
        raise ConfigError(f"{path}: must be >= 0, got {value!r}")
    return float(value)


def _integer(path: str, value: Any, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {value!r}")
    return value


def _point(path: str, value: Any) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{path}: expected a pair [x, y], got {value!r}")
    return [_number(f"{path}[{k}]", v) for k, v in enumerate(value)]


def _grid_values(path: str, value: Any) -> list[list[float]]:
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ConfigError(f"{path}: expected a non-empty list of rows")
    width = len(value[0])
    rows = []
    for j, row in enumerate(value):
        if len(row) != width:
            raise ConfigError(f"{path}[{j}]: row has length {len(row)}, expected {width}")
        rows.append([_number(f"{path}[{j}][{i}]", v, nonneg=True) for i, v in enumerate(row)])
    return rows


def _maze_rows(path: str, value: Any) -> list[str]:
    if not isinstance(value, list) or not value or not all(isinstance(r, str) for r in value):
        raise ConfigError(f"{path}: expected a non-empty list of strings")
    width = len(value[0])
    for j, row in enumerate(value):
        if len(row) != width:
            raise ConfigError(f"{path}[{j}]: row has length {len(row)}, expected {width}")
        bad = set(row) - set("#.")
        if bad:
            raise ConfigError(f"{path}[{j}]: unexpected characters {sorted(bad)}; use '#' and '.'")
    return list(value)


def _components(path: str, value: Any) -> list[dict]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a non-empty list of components")
    spec = {"center": (_point, _REQUIRED), "sigma": (_pos, _REQUIRED), "weight": (_num, 1.0)}
    return [_validate_keys(f"{path}[{k}]", c, spec) for k, c in enumerate(value)]


def _pos(path, value):
    return _number(path, value, positive=True)


def _num(path, value):
    return _number(path, value)


def _nonneg(path, value):
    return _number(path, value, nonneg=True)


def _validate_keys(path: str, obj: Any, spec: dict) -> dict:
    """Check ``obj`` against ``{key: (validator, default)}`` and fill defaults."""
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object, got {obj!r}")
    unknown = sorted(set(obj) - set(spec))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}; allowed: {sorted(spec)}")
    out = {}
    for key, (check, default) in spec.items():
        if key in obj:
            out[key] = check(f"{path}.{key}", obj[key])
        elif default is _REQUIRED:
            raise ConfigError(f"{path}.{key}: required key is missing")
        elif default is not None:
            out[key] = copy.deepcopy(default)
    return out


def _literal(name):
    def check(path, value):
        if value != name:
            raise ConfigError(f"{path}: expected {name!r}")
        return value

    return check


_COST_TYPES = {
    "constant": {"value": (_pos, 1.0)},
    "gaussian_mixture": {"base": (_nonneg, 1.0), "components": (_components, _REQUIRED)},
    "pyramid": {
        "base": (_pos, 1.0),
        "peak": (_nonneg, 4.0),
        "center": (_point, [0.5, 0.5]),
        "half_width": (_pos, 0.25),
    },
    "maze": {"rows": (_maze_rows, _REQUIRED), "w_low": (_pos, 0.1), "w_high": (_pos, 10.0)},
    "array": {"values": (_grid_values, _REQUIRED)},
}


def _index(path, value):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{path}: expected a pair [i, j], got {value!r}")
    return [_integer(f"{path}[{k}]", v) for k, v in enumerate(value)]


_MARGINAL_TYPES = {
    "gaussian": {"center": (_point, _REQUIRED), "sigma": (_pos, _REQUIRED)},
    "cell": {"at": (_point, None), "index": (_index, None)},
    "array": {"values": (_grid_values, _REQUIRED)},
}


def _field_spec(path: str, obj: Any, types: dict) -> dict:
    if not isinstance(obj, dict) or "type" not in obj:
        raise ConfigError(f"{path}: expected an object with a 'type' key, one of {sorted(types)}")
    kind = obj["type"]
    if kind not in types:
        raise ConfigError(f"{path}.type: unknown type {kind!r}; expected one of {sorted(types)}")
    spec = {"type": (_literal(kind), _REQUIRED), **types[kind]}
    out = _validate_keys(path, obj, spec)
    if kind == "cell" and ("at" in out) == ("index" in out):
        raise ConfigError(f"{path}: a 'cell' marginal needs exactly one of 'at' or 'index'")
    return out


@dataclass(frozen=True)
class GridConfig:
    nx: int
    ny: int
    domain: Rectangle = Rectangle(0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class OutputConfig:
    out_dir: str = "out"
    name: str = "run"
    csv: bool = True
    svg: bool = True
    report: bool = True


@dataclass(frozen=True)
class Config:
    grid: GridConfig
    mu_plus: dict
    mu_minus: dict
    params: RegParams
    cost: dict = field(default_factory=lambda: {"type": "constant", "value": 1.0})
    w_min: float = 1e-6
    solver: SolverOptions = SolverOptions()
    output: OutputConfig = OutputConfig()
    description: str = ""

    def to_dict(self) -> dict:
        """Resolved configuration; ``parse_config_dict(cfg.to_dict()) == cfg``."""
        d = self.grid.domain
        return {
            "description": self.description,
            "grid": {"nx": self.grid.nx, "ny": self.grid.ny, "domain": [d.x0, d.x1, d.y0, d.y1]},
            "cost": copy.deepcopy(self.cost),
            "w_min": self.w_min,
            "mu_plus": copy.deepcopy(self.mu_plus),
            "mu_minus": copy.deepcopy(self.mu_minus),
            "params": {
                "epsilon": self.params.epsilon,
                "delta": self.params.delta,
                "alpha": self.params.alpha,
            },
            "solver": {f.name: getattr(self.solver, f.name) for f in fields(SolverOptions)},
            "output": {f.name: getattr(self.output, f.name) for f in fields(OutputConfig)},
        }

    def with_params(self, epsilon: float, delta: float) -> "Config":
        return replace(self, params=RegParams(epsilon, delta, self.params.alpha))


def _domain(path, value):
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ConfigError(f"{path}: expected [x0, x1, y0, y1], got {value!r}")
    x0, x1, y0, y1 = (_number(f"{path}[{k}]", v) for k, v in enumerate(value))
    if not (x1 > x0 and y1 > y0):
        raise ConfigError(f"{path}: domain must have positive width and height")
    return Rectangle(x0, x1, y0, y1)


def _boolean(path, value):
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true or false, got {value!r}")
    return value


def _string(path, value):
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    return value


def parse_config_dict(raw: Any, path: str = "config") -> Config:
    top = _validate_keys(
        path,
        raw,
        {
            "description": (_string, ""),
            "grid": (lambda p, v: v, _REQUIRED),
            "cost": (lambda p, v: _field_spec(p, v, _COST_TYPES), {"type": "constant", "value": 1.0}),
            "w_min": (_pos, 1e-6),
            "mu_plus": (lambda p, v: _field_spec(p, v, _MARGINAL_TYPES), _REQUIRED),
            "mu_minus": (lambda p, v: _field_spec(p, v, _MARGINAL_TYPES), _REQUIRED),
            "params": (lambda p, v: v, _REQUIRED),
            "solver": (lambda p, v: v, {}),
            "output": (lambda p, v: v, {}),
        },
    )
    grid = _validate_keys(
        f"{path}.grid",
        top["grid"],
        {
            "nx": (lambda p, v: _integer(p, v, 1), _REQUIRED),
            "ny": (lambda p, v: _integer(p, v, 1), _REQUIRED),
            "domain": (_domain, Rectangle(0.0, 1.0, 0.0, 1.0)),
        },
    )
    params = _validate_keys(
        f"{path}.params",
        top["params"],
        {"epsilon": (_pos, _REQUIRED), "delta": (_pos, _REQUIRED), "alpha": (_num, 2.0)},
    )
    if not params["alpha"] > 1:
        raise ConfigError(f"{path}.params.alpha: must be > 1, got {params['alpha']!r}")
    if params["alpha"] >= 2:
        log.info(
            "alpha = %g is not below d/(d-1) = 2; alpha = 2 is the limit case of the theory",
            params["alpha"],
        )
    solver = _validate_keys(
        f"{path}.solver",
        top["solver"],
        {
            "sigma0": (_pos, 1.0),
            "beta": (_pos, 0.5),
            "gamma": (_pos, 0.1),
            "tol": (_pos, 1e-8),
            "max_iters": (_integer, 1000),
            "max_backtracks": (_integer, 60),
        },
    )
    output = _validate_keys(
        f"{path}.output",
        top["output"],
        {
            "out_dir": (_string, "out"),
            "name": (_string, "run"),
            "csv": (_boolean, True),
            "svg": (_boolean, True),
            "report": (_boolean, True),
        },
    )
    try:
        solver_opts = SolverOptions(**solver)
    except ValueError as exc:
        raise ConfigError(f"{path}.solver: {exc}") from None
    return Config(
        grid=GridConfig(**grid),
        mu_plus=top["mu_plus"],
        mu_minus=top["mu_minus"],
        params=RegParams(**params),
        cost=top["cost"],
        w_min=top["w_min"],
        solver=solver_opts,
        output=OutputConfig(**output),
        description=top["description"],
    )


def parse_config(path) -> Config:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config_dict(raw)
