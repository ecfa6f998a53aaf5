"""Scenario files: YAML documents describing a space, rates, kernel, initial
state, run settings and the analyses to perform.

See ``docs/scenario_format.md`` in the repository for the full key list.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from ._validation import ValidationError
from .dynamics import MutationKernel
from .measures import AtomicMeasure
from .space import build_finite, build_grid
from .vitals import VitalRates, load_tabulated_csv

ANALYSES = ("permanence", "css", "ess", "equilibrium", "continuation", "partitions", "persistence")


class ConfigError(ValidationError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class Scenario:
    name: str
    space: object
    vitals: VitalRates
    kernel: MutationKernel
    initial: AtomicMeasure
    run: dict
    analyses: dict = field(default_factory=dict)
    assumptions: dict = field(default_factory=dict)
    kernel_spec: dict = field(default_factory=dict)
    source: str = ""


def bundled_scenarios():
    """Names of the scenarios shipped with the package."""
    root = resources.files("measure_replicator") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_config_path(path_or_name):
    if os.path.exists(path_or_name):
        return str(path_or_name)
    name = os.path.basename(str(path_or_name))
    name = name[:-5] if name.endswith(".yaml") else name
    candidate = resources.files("measure_replicator") / "scenarios" / f"{name}.yaml"
    if candidate.is_file():
        return str(candidate)
    raise ConfigError("config", f"no such file or bundled scenario: {path_or_name}")


def _get(cfg, key, path, default=..., kind=None):
    if not isinstance(cfg, dict):
        raise ConfigError(path, "expected a mapping")
    if key not in cfg:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required key")
        return default
    val = cfg[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"{path}.{key}" if path else key, f"expected {getattr(kind, '__name__', kind)}")
    return val


def _mask_predicate(spec, path):
    if spec is None:
        return None
    if not isinstance(spec, dict):
        raise ConfigError(path, "mask must be a mapping")
    preds = []
    if "ratio_max" in spec:
        limit = float(spec["ratio_max"])
        num, den = spec.get("ratio_axes", [0, 1])
        preds.append(lambda p: p[num] / p[den] <= limit * (1 + 1e-12))
    if "ratio_min" in spec:
        limit = float(spec["ratio_min"])
        num, den = spec.get("ratio_axes", [0, 1])
        preds.append(lambda p: p[num] / p[den] >= limit * (1 - 1e-12))
    if not preds:
        raise ConfigError(path, "mask needs ratio_max or ratio_min")
    return lambda p: all(f(p) for f in preds)


def build_space(cfg):
    kind = _get(cfg, "kind", "space", "finite")
    try:
        if kind == "finite":
            points = _get(cfg, "points", "space", kind=list)
            return build_finite(points, cfg.get("metric_table"), name=cfg.get("name", ""))
        if kind == "grid":
            bounds = _get(cfg, "bounds", "space", kind=list)
            res = _get(cfg, "resolution", "space")
            return build_grid(bounds, res, _mask_predicate(cfg.get("mask"), "space.mask"), name=cfg.get("name", ""))
    except ConfigError:
        raise
    except (ValidationError, ValueError, TypeError) as exc:
        raise ConfigError("space", str(exc)) from exc
    raise ConfigError("space.kind", f"unknown space kind {kind!r}")


def _param(cfg, key, space, path):
    """A per-point parameter: scalar, list, or ``{coord: k, scale: s, offset: o}``."""
    val = _get(cfg, key, path)
    if isinstance(val, dict):
        if "coord" not in val:
            raise ConfigError(f"{path}.{key}", "coordinate parameter needs 'coord'")
        k = int(val["coord"])
        if not 0 <= k < space.dim:
            raise ConfigError(f"{path}.{key}.coord", f"axis {k} out of range")
        return float(val.get("scale", 1.0)) * space.points[:, k] + float(val.get("offset", 0.0))
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 0:
        return np.full(space.n_points, float(arr))
    if arr.shape != (space.n_points,):
        raise ConfigError(f"{path}.{key}", f"expected {space.n_points} values, got {arr.size}")
    return arr


def build_vitals(cfg, space, base_dir="."):
    family = _get(cfg, "family", "vitals")
    x_max = cfg.get("X_max")
    try:
        if family == "logistic":
            return VitalRates.logistic(
                _param(cfg, "b", space, "vitals"), _param(cfg, "d", space, "vitals"), _param(cfg, "c", space, "vitals"), X_max=x_max
            )
        if family in ("ricker", "beverton_holt"):
            ctor = VitalRates.ricker if family == "ricker" else VitalRates.beverton_holt
            return ctor(_param(cfg, "b", space, "vitals"), _param(cfg, "d", space, "vitals"), _param(cfg, "a", space, "vitals"), X_max=x_max)
        if family == "tabulated":
            csv_path = os.path.join(base_dir, _get(cfg, "csv", "vitals", kind=str))
            with open(csv_path) as fh:
                v = load_tabulated_csv(fh.read(), n_points=space.n_points, X_max=x_max)
            return v
    except ConfigError:
        raise
    except (ValidationError, ValueError, OSError) as exc:
        raise ConfigError("vitals", str(exc)) from exc
    raise ConfigError("vitals.family", f"unknown family {family!r}")


def build_kernel(cfg, space, eps=None):
    kind = _get(cfg, "type", "kernel", "pure_selection")
    n = space.n_points
    try:
        if kind == "pure_selection":
            return MutationKernel.pure_selection(n)
        if kind == "epsilon_uniform":
            return MutationKernel.epsilon_uniform(n, float(eps if eps is not None else _get(cfg, "eps", "kernel")))
        if kind == "gaussian":
            return MutationKernel.gaussian(space, float(_get(cfg, "width", "kernel")))
        if kind == "custom":
            return MutationKernel.custom(_get(cfg, "matrix", "kernel", kind=list))
    except ConfigError:
        raise
    except (ValidationError, ValueError, TypeError) as exc:
        raise ConfigError("kernel", str(exc)) from exc
    raise ConfigError("kernel.type", f"unknown kernel type {kind!r}")


def build_initial(cfg, space):
    kind = _get(cfg, "type", "initial", "uniform")
    n = space.n_points
    try:
        if kind == "uniform":
            mass = float(cfg.get("mass", 1.0))
            return AtomicMeasure(space, np.full(n, mass / n))
        if kind == "explicit":
            return AtomicMeasure(space, np.asarray(_get(cfg, "weights", "initial", kind=list), dtype=float))
        if kind == "single_atom":
            idx = int(_get(cfg, "index", "initial"))
            if not 0 <= idx < n:
                raise ConfigError("initial.index", f"index {idx} out of range for {n} points")
            return AtomicMeasure.dirac(space, idx, float(cfg.get("mass", 1.0)))
    except ConfigError:
        raise
    except (ValidationError, ValueError, TypeError) as exc:
        raise ConfigError("initial", str(exc)) from exc
    raise ConfigError("initial.type", f"unknown initial type {kind!r}")


def _run_spec(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("run", "expected a mapping")
    out = {
        "T": float(_get(cfg, "T", "run")),
        "method": cfg.get("method", "rk4"),
        "h": float(cfg.get("h", 0.01)),
        "tol": float(cfg.get("tol", 1e-8)),
        "record_every": cfg.get("record_every"),
    }
    if out["T"] <= 0:
        raise ConfigError("run.T", "must be > 0")
    if out["method"] not in ("rk4", "rk45"):
        raise ConfigError("run.method", f"unknown method {out['method']!r}")
    return out


def load_scenario(path_or_name):
    path = resolve_config_path(path_or_name)
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be a mapping")
    base_dir = os.path.dirname(os.path.abspath(path))
    name = cfg.get("name") or os.path.splitext(os.path.basename(path))[0]
    space = build_space(_get(cfg, "space", ""))
    vitals = build_vitals(_get(cfg, "vitals", ""), space, base_dir)
    kernel_cfg = cfg.get("kernel", {"type": "pure_selection"})
    kernel = build_kernel(kernel_cfg, space)
    initial = build_initial(cfg.get("initial", {"type": "uniform"}), space)
    if not initial.is_positive:
        raise ConfigError("initial", "initial weights must be nonnegative")
    run = _run_spec(_get(cfg, "run", ""))
    analyses = cfg.get("analyses") or {}
    if not isinstance(analyses, dict):
        raise ConfigError("analyses", "expected a mapping")
    unknown = sorted(set(analyses) - set(ANALYSES))
    if unknown:
        raise ConfigError(f"analyses.{unknown[0]}", "unknown analysis")
    persistence = analyses.get("persistence")
    if isinstance(persistence, dict):
        for idx in persistence.get("E", []):
            if not 0 <= int(idx) < space.n_points:
                raise ConfigError("analyses.persistence.E", f"index {idx} out of range")
    return Scenario(
        name=name,
        space=space,
        vitals=vitals,
        kernel=kernel,
        initial=initial,
        run=run,
        analyses=analyses,
        assumptions=cfg.get("assumptions") or {},
        kernel_spec=kernel_cfg,
        source=path,
    )
