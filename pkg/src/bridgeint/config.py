"""Strict JSON experiment configuration for the command-line interface.

Unknown keys are rejected so that typos fail loudly instead of silently
running a default.  Units: times are abstract Brownian time, lengths are
space units.  A summary file produced by a previous run can be fed back as
a config; its embedded ``resolved_config`` is used, which makes every run
reproducible from its own output.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .convergence import EndpointRule, SweepPlan
from .potentials import Potential

__all__ = ["ConfigError", "ExperimentConfig", "load_config"]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


_POTENTIAL_KEYS = {
    "ball_indicator": {"kind", "radius", "height", "center"},
    "radial_step": {"kind", "breakpoints", "heights", "center"},
    "tabulated": {"kind", "origin", "spacing", "values"},
}

_GRID_KEYS = {"policy", "h", "h_fine", "h_coarse", "u"}

_BASE_KEYS = {
    "dimension", "potential", "seed", "grid", "tail_correction", "workers",
}

_COMMAND_KEYS = {
    "sample": {"statistic_kind", "x", "y", "t", "free_horizon", "n_paths"},
    "mgf": {"statistic_kind", "x", "y", "t", "free_horizon", "n_paths", "alphas"},
    "moments": {"statistic_kind", "x", "y", "t", "free_horizon", "n_paths", "k_list"},
    "bounds": {"probe_points", "alphas", "n_paths", "free_horizon", "x"},
    "theorem1": {"x", "y", "horizons", "alphas", "k_list", "n_paths",
                 "n_paths_by_horizon", "target_n_paths", "free_horizon",
                 "target_free_horizon", "u_rule"},
    "theorem2": {"x", "endpoint_rule", "horizons", "alphas", "k_list", "n_paths",
                 "n_paths_by_horizon", "target_n_paths", "free_horizon",
                 "target_free_horizon", "u_rule"},
    "lemma4": {"part", "x", "x_sequence", "horizons", "alphas", "k_list",
               "n_paths", "n_paths_by_horizon", "target_n_paths",
               "free_horizon", "target_free_horizon"},
    "bloch": {"bloch_points", "n_paths"},
}

_ENDPOINT_KEYS = {"kind", "scale", "y"}


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _check_keys(mapping: dict, allowed: set, where: str):
    unknown = set(mapping) - allowed
    _require(not unknown, f"unknown {where} keys: {sorted(unknown)}")


def _build_potential(raw: dict, dim: int) -> Potential:
    _require(isinstance(raw, dict), "potential must be an object")
    kind = raw.get("kind")
    _require(kind in _POTENTIAL_KEYS, f"potential kind must be one of {sorted(_POTENTIAL_KEYS)}")
    _check_keys(raw, _POTENTIAL_KEYS[kind], "potential")
    try:
        if kind == "ball_indicator":
            _require("radius" in raw, "ball_indicator needs a radius")
            return Potential.ball_indicator(dim, float(raw["radius"]),
                                            height=float(raw.get("height", 1.0)),
                                            center=raw.get("center"))
        if kind == "radial_step":
            _require("breakpoints" in raw and "heights" in raw,
                     "radial_step needs breakpoints and heights")
            return Potential.radial_step(dim, raw["breakpoints"], raw["heights"],
                                         center=raw.get("center"))
        _require(all(k in raw for k in ("origin", "spacing", "values")),
                 "tabulated needs origin, spacing and values")
        return Potential.tabulated(dim, raw["origin"], float(raw["spacing"]), raw["values"])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid potential: {exc}") from exc


class ExperimentConfig:
    """Parsed, validated and resolved configuration for one command."""

    def __init__(self, command: str, raw: dict):
        _require(command in _COMMAND_KEYS, f"unknown command {command!r}")
        _require(isinstance(raw, dict), "the configuration must be a JSON object")
        self.command = command
        allowed = _BASE_KEYS | _COMMAND_KEYS[command]
        _check_keys(raw, allowed, "config")
        self.raw = dict(raw)

        _require("dimension" in raw, "dimension is required")
        self.dimension = int(raw["dimension"])
        _require(self.dimension >= 1, "dimension must be positive")
        if command in ("theorem1", "theorem2", "lemma4"):
            _require(self.dimension >= 3,
                     "theorem commands need d >= 3 (transient dimension is assumed "
                     "throughout the limit statements)")
        _require("potential" in raw, "potential is required")
        self.potential = _build_potential(raw["potential"], self.dimension)
        _require(self.potential.support_radius > 0 or self.potential.is_zero,
                 "potential support radius must be positive unless v is zero")

        self.seed = int(raw.get("seed", 0))
        self.workers = int(raw.get("workers", 1))
        self.tail_correction = bool(raw.get("tail_correction", True))

        grid = raw.get("grid", {})
        _require(isinstance(grid, dict), "grid must be an object")
        _check_keys(grid, _GRID_KEYS, "grid")
        policy = grid.get("policy", "endpoint_refined")
        _require(policy in ("endpoint_refined", "uniform"),
                 "grid policy must be endpoint_refined or uniform")
        self.grid_policy = policy
        self.h_fine = float(grid.get("h_fine", grid.get("h", 0.01)))
        self.h_coarse = None if grid.get("h_coarse") is None else float(grid["h_coarse"])
        self.refine_window = None if grid.get("u") is None else float(grid["u"])

        self.statistic_kind = raw.get("statistic_kind", "bridge")
        _require(self.statistic_kind in ("bridge", "free", "two_sided"),
                 "statistic_kind must be bridge, free or two_sided")
        self.x = None if raw.get("x") is None else np.asarray(raw["x"], dtype=float)
        self.y = None if raw.get("y") is None else np.asarray(raw["y"], dtype=float)
        self.t = None if raw.get("t") is None else float(raw["t"])
        self.free_horizon = None if raw.get("free_horizon") is None \
            else float(raw["free_horizon"])
        self.target_free_horizon = None if raw.get("target_free_horizon") is None \
            else float(raw["target_free_horizon"])
        self.n_paths = int(raw.get("n_paths", 10_000))
        self.n_paths_by_horizon = raw.get("n_paths_by_horizon")
        self.target_n_paths = None if raw.get("target_n_paths") is None \
            else int(raw["target_n_paths"])
        self.alphas = None if raw.get("alphas") is None \
            else [float(a) for a in raw["alphas"]]
        self.k_list = [int(k) for k in raw.get("k_list", [1, 2])]
        self.horizons = None if raw.get("horizons") is None \
            else [float(t) for t in raw["horizons"]]
        self.u_rule = raw.get("u_rule", "sqrt")
        self.part = raw.get("part", "a")
        _require(self.part in ("a", "b"), "lemma4 part must be 'a' or 'b'")
        self.x_sequence = raw.get("x_sequence")
        self.probe_points = raw.get("probe_points")
        self.bloch_points = raw.get("bloch_points")

        for p in (self.x, self.y):
            if p is not None:
                _require(p.size == self.dimension, "endpoint dimension mismatch")

        self.endpoint_rule = None
        if raw.get("endpoint_rule") is not None:
            er = raw["endpoint_rule"]
            _require(isinstance(er, dict), "endpoint_rule must be an object")
            _check_keys(er, _ENDPOINT_KEYS, "endpoint_rule")
            kind = er.get("kind")
            _require(kind in ("fixed", "sqrt_t", "fourth_root"),
                     "endpoint_rule kind must be fixed, sqrt_t or fourth_root")
            value = er.get("y") if kind == "fixed" else er.get("scale", 1.0)
            try:
                self.endpoint_rule = EndpointRule(kind, value)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc

        self._validate_command()

    def _validate_command(self):
        c = self.command
        if c in ("sample", "mgf", "moments"):
            _require(self.x is not None, f"{c} needs a start point x")
            if self.statistic_kind == "bridge":
                _require(self.y is not None and self.t is not None,
                         "bridge statistics need endpoints x, y and horizon t")
            if self.statistic_kind == "two_sided":
                _require(self.y is not None, "two_sided statistics need both endpoints")
        if c == "mgf":
            _require(self.alphas is not None, "mgf needs an alphas grid")
        if c == "theorem1":
            _require(self.x is not None and self.y is not None,
                     "theorem1 needs fixed endpoints x and y")
            _require(self.horizons is not None, "theorem1 needs a horizons grid")
        if c == "theorem2":
            _require(self.x is not None, "theorem2 needs the start point x")
            _require(self.endpoint_rule is not None and
                     self.endpoint_rule.kind in ("sqrt_t", "fourth_root"),
                     "theorem2 needs a growing endpoint_rule (sqrt_t or fourth_root)")
            _require(self.horizons is not None, "theorem2 needs a horizons grid")
        if c == "lemma4":
            _require(self.horizons is not None, "lemma4 needs a horizons grid")
            _require(self.x_sequence is not None, "lemma4 needs x_sequence")
            if self.part == "a":
                _require(self.x is not None, "lemma4 part a needs the limit point x")
        if c == "bloch":
            _require(self.bloch_points, "bloch needs a bloch_points list")
            for entry in self.bloch_points:
                _require(isinstance(entry, dict) and
                         set(entry) == {"x", "y", "t"},
                         "each bloch point needs exactly x, y and t")

    # -- derived objects -------------------------------------------------

    def budgets(self):
        if self.n_paths_by_horizon is not None:
            _require(self.horizons is not None and
                     len(self.n_paths_by_horizon) == len(self.horizons),
                     "n_paths_by_horizon must match the horizons grid")
            return [int(n) for n in self.n_paths_by_horizon]
        return self.n_paths

    def sweep_plan(self) -> SweepPlan:
        theorem = {"theorem1": "T1",
                   "theorem2": {"sqrt_t": "T2b", "fourth_root": "T2a"}.get(
                       self.endpoint_rule.kind if self.endpoint_rule else None),
                   "lemma4": "L4a" if self.part == "a" else "L4b"}[self.command]
        kwargs = dict(
            theorem=theorem, horizons=self.horizons, x=self.x, y=self.y,
            alphas=self.alphas, budgets=self.budgets(),
            target_budget=self.target_n_paths, k_list=tuple(self.k_list),
            seed=self.seed, workers=self.workers, h_fine=self.h_fine,
            h_coarse=self.h_coarse, free_horizon=self.free_horizon,
            target_free_horizon=self.target_free_horizon, u_rule=self.u_rule,
        )
        if self.command == "theorem2":
            kwargs["endpoint_rule"] = self.endpoint_rule
        if self.command == "lemma4":
            kwargs["x_sequence"] = tuple(np.asarray(p, float) for p in self.x_sequence)
            if self.part == "b":
                kwargs["x"] = np.asarray(self.x_sequence[0], float) if self.x is None else self.x
        try:
            return SweepPlan(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved(self) -> dict:
        # worker count is execution machinery with no effect on results,
        # so it is excluded: outputs must be byte-identical across pools
        out = {k: v for k, v in self.raw.items() if k != "workers"}
        out.setdefault("seed", self.seed)
        return out


def load_config(path_or_dict, command: str) -> ExperimentConfig:
    """Load a config file (or dict); summary files round-trip transparently."""
    if isinstance(path_or_dict, dict):
        raw = path_or_dict
    else:
        try:
            with open(path_or_dict) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if isinstance(raw, dict) and "resolved_config" in raw:
        raw = raw["resolved_config"]
    return ExperimentConfig(command, raw)
