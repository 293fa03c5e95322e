"""Run configuration for the command-line front end.

A configuration is a YAML (or JSON) mapping. Precedence, lowest first:
built-in defaults, the configuration file, command-line flags. A run
manifest written by a previous run is also accepted as a configuration;
its embedded ``config`` section is used.

Keys::

    params:  {alpha, lam, sigma, d}
    hurst:   list of n = d + 1 components in (1/2, 1)
    grid:    {extent: [...], counts: [...], origin: [...] (optional)}
    points:  list of evaluation points for the summary CSV
    seed, samples, threads, tol, max_iter, method, constants, out
    kind:    fbm_values or fbm_increments (sample-fbm)
    limits:  {max_nodes, max_values}
    sweep:   {alphas, ds, hurst, refinements, base_cells, experiment_max_d}

``sweep.hurst`` lists scalars; each is repeated on every axis. Experiments
run for ``d <= experiment_max_d``; the other rows carry only the verdict.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import CapExceeded, FracHeatError
from .fbm_field import Grid, HurstVector
from .heat_kernels import HeatParams

__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "load_config"]


class ConfigError(FracHeatError, ValueError):
    """Invalid configuration; ``field`` and ``line`` locate the problem when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


DEFAULTS = {
    "params": {"alpha": 1.0, "lam": 1.0, "sigma": 1.0, "d": 1},
    "hurst": [0.75, 0.75],
    "grid": {"extent": [1.0, 1.0], "counts": [33, 33], "origin": None},
    "points": [[1.0, 1.0]],
    "seed": 0,
    "samples": 100,
    "threads": 1,
    "tol": 1e-10,
    "max_iter": 100,
    "method": None,
    "constants": "corrected",
    "kind": "fbm_values",
    "out": "fracheat-out",
    "limits": {"max_nodes": 2**24, "max_values": 5 * 10**7},
    "sweep": {
        "alphas": [0.5, 0.75, 1.0, 1.25, 1.5, 1.75],
        "ds": [1, 2, 3],
        "hurst": [0.75, 0.6],
        "refinements": 3,
        "base_cells": {"1": 8, "2": 4},
        "experiment_max_d": 2,
    },
}

def _merge(base: dict, override: dict, path: tuple = ()) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = path + (str(key),)
        if key not in base:
            raise ConfigError("unknown key", ".".join(here))
        if isinstance(base[key], dict) and key != "base_cells":
            if not isinstance(value, dict):
                raise ConfigError("expected a mapping", ".".join(here))
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = value
    return out


def _line_of(text: str | None, path: str) -> int | None:
    """1-based line of the node at dotted ``path`` in YAML ``text``."""
    if not text or not path:
        return None
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for part in path.split("."):
        if isinstance(node, yaml.MappingNode):
            match = [(k, v) for k, v in node.value if k.value == part]
            if not match:
                break
            line = match[0][0].start_mark.line + 1
            node = match[0][1]
        elif isinstance(node, yaml.SequenceNode) and part.isdigit() and int(part) < len(node.value):
            node = node.value[int(part)]
            line = node.start_mark.line + 1
        else:
            break
    return line


def _floats(value, name: str) -> list:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError("expected a non-empty list of numbers", name)
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError("expected numbers", name) from None


def _int(value, name: str, low: int = 0, high: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("expected an integer", name)
    if value < low or (high is not None and value > high):
        raise ConfigError(f"must lie in [{low}, {high if high is not None else 'inf'}]", name)
    return value


@dataclass
class RunConfig:
    """Resolved configuration; ``data`` is the plain mapping echoed into manifests."""

    command: str
    data: dict = field(default_factory=dict)

    @property
    def params(self) -> HeatParams:
        return HeatParams(**self.data["params"])

    @property
    def H(self) -> HurstVector:
        return HurstVector(tuple(self.data["hurst"]))

    @property
    def grid(self) -> Grid:
        g = self.data["grid"]
        origin = g["origin"] or [0.0] * len(g["extent"])
        return Grid(tuple(origin), tuple(g["extent"]), tuple(g["counts"]),
                    node_cap=self.data["limits"]["max_nodes"])

    @property
    def out(self) -> Path:
        return Path(self.data["out"])

    def __getitem__(self, key):
        return self.data[key]

    def to_dict(self) -> dict:
        return {"command": self.command, **copy.deepcopy(self.data)}

    @classmethod
    def from_dict(cls, command: str, raw: dict | None, overrides: dict | None = None,
                  text: str | None = None) -> "RunConfig":
        raw = dict(raw or {})
        raw.pop("command", None)
        try:
            data = _merge(DEFAULTS, raw)
            data = _merge(data, {k: v for k, v in (overrides or {}).items() if v is not None})
            cfg = cls(command, data)
            cfg._validate()
        except ConfigError as exc:
            if exc.line is None and exc.field is not None:
                exc = ConfigError(str(exc).split(": ", 1)[-1], exc.field, _line_of(text, exc.field))
            raise exc from None
        return cfg

    def _validate(self):
        d = self.data
        for key in d["params"]:
            if d["params"][key] is None:
                raise ConfigError("must not be null", f"params.{key}")
        try:
            p = self.params
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "params") from None
        hurst = _floats(d["hurst"], "hurst")
        d["hurst"] = hurst
        try:
            self.H
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "hurst") from None
        g = d["grid"]
        g["extent"] = _floats(g["extent"], "grid.extent")
        if not isinstance(g["counts"], list):
            raise ConfigError("expected a list of integers", "grid.counts")
        g["counts"] = [_int(c, f"grid.counts.{i}", 2) for i, c in enumerate(g["counts"])]
        if g["origin"] is not None:
            g["origin"] = _floats(g["origin"], "grid.origin")
        for name, value in d["limits"].items():
            _int(value, f"limits.{name}", 1)
        try:
            grid = self.grid
        except CapExceeded:
            raise
        except (FracHeatError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "grid") from None
        if self.command in ("simulate-additive", "simulate-multiplicative"):
            if grid.n != p.d + 1:
                raise ConfigError(f"need {p.d + 1} axes for d = {p.d}", "grid.extent")
            if len(hurst) != p.d + 1:
                raise ConfigError(f"need {p.d + 1} components for d = {p.d}", "hurst")
            if not isinstance(d["points"], list):
                raise ConfigError("expected a list of points", "points")
            d["points"] = [_floats(pt, f"points.{i}") for i, pt in enumerate(d["points"])]
            for i, pt in enumerate(d["points"]):
                if len(pt) != grid.n:
                    raise ConfigError(f"need {grid.n} coordinates", f"points.{i}")
        elif self.command == "sample-fbm" and len(hurst) != grid.n:
            raise ConfigError(f"need {grid.n} components to match the grid", "hurst")
        d["seed"] = _int(d["seed"], "seed", 0, 2**64 - 1)
        d["samples"] = _int(d["samples"], "samples", 2)
        d["threads"] = _int(d["threads"], "threads", 1)
        d["max_iter"] = _int(d["max_iter"], "max_iter", 1)
        try:
            d["tol"] = float(d["tol"])
        except (TypeError, ValueError):
            raise ConfigError("expected a number", "tol") from None
        if not d["tol"] > 0:
            raise ConfigError("must be positive", "tol")
        if d["method"] not in (None, "cholesky", "multiplier"):
            raise ConfigError("expected cholesky, multiplier or null", "method")
        if d["constants"] not in ("paper", "corrected"):
            raise ConfigError("expected paper or corrected", "constants")
        if d["kind"] not in ("fbm_values", "fbm_increments"):
            raise ConfigError("expected fbm_values or fbm_increments", "kind")
        if not isinstance(d["out"], str) or not d["out"]:
            raise ConfigError("expected a directory path", "out")
        self._validate_sweep()

    def _validate_sweep(self):
        s = self.data["sweep"]
        s["alphas"] = _floats(s["alphas"], "sweep.alphas")
        if not isinstance(s["ds"], list):
            raise ConfigError("expected a list of integers", "sweep.ds")
        s["ds"] = [_int(v, f"sweep.ds.{i}", 1, 3) for i, v in enumerate(s["ds"])]
        s["hurst"] = _floats(s["hurst"], "sweep.hurst")
        for i, h in enumerate(s["hurst"]):
            if not 0.5 < h < 1.0:
                raise ConfigError("must lie in (1/2, 1)", f"sweep.hurst.{i}")
        for i, a in enumerate(s["alphas"]):
            if not 0.0 < a < 2.0:
                raise ConfigError("must lie in (0, 2)", f"sweep.alphas.{i}")
        s["refinements"] = _int(s["refinements"], "sweep.refinements", 3)
        s["experiment_max_d"] = _int(s["experiment_max_d"], "sweep.experiment_max_d", 0, 3)
        if not isinstance(s["base_cells"], dict):
            raise ConfigError("expected a mapping from d to cell count", "sweep.base_cells")
        # string keys keep the mapping identical after a JSON round trip
        s["base_cells"] = {str(k): _int(v, f"sweep.base_cells.{k}", 1) for k, v in s["base_cells"].items()}

    def check_output_dir(self):
        out = self.out
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory: {exc.strerror}", "out") from None
        if not os.access(out, os.W_OK):
            raise ConfigError("output directory is not writable", "out")


def load_config(command: str, path: str | None, overrides: dict | None = None) -> RunConfig:
    text = None
    raw = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                              line=mark.line + 1 if mark else None) from None
        if not isinstance(raw, dict):
            raise ConfigError("the configuration must be a mapping", line=1)
        if raw.get("kind") == "manifest":
            raw = raw.get("config", {})
            text = None
    return RunConfig.from_dict(command, raw, overrides, text)
