"""Scenario files: flat INI sections, whitelisted initial data, range-checked values.

A scenario looks like::

    [scenario]
    name = round_s3
    command = flow3d
    checks = extinction_time, scale_profile

    [initial]
    kind = exact
    solution = einstein_shrink
    param = 0.5
    grid = 512

    [flow]
    t_end = 2.0

Sections other than ``scenario``, ``initial`` and ``flow`` hold per-command
settings (``surgery``, ``reduced``, ``functionals``, ``pinch``, ``checks``)
and are passed through as typed dictionaries.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional

from .errors import ConfigError
from .flow import FlowConfig
from .geom import Grid1D
from .initial_data import dented_sphere, dumbbell, torus_bump
from .oracles import KINDS, ExactSolution, evaluate

COMMANDS = ("flow2d", "flow3d", "surgery-run", "reduced-volume", "functionals", "pinch-ode")
INITIAL_KINDS = ("exact", "dumbbell", "dented_sphere", "torus_bump")
SCENARIO_PACKAGE = "ricci_lab.scenarios"

_FLOW_FIELDS = {f.name: f for f in dataclasses.fields(FlowConfig)}
_INITIAL_KEYS = {
    "exact": {"solution": str, "param": float, "dim": int, "grid": int},
    "dumbbell": {"neck_ratio": float, "bulb_count": int, "neck_length": float, "blend": float,
                 "grid": int},
    "dented_sphere": {"amplitude": float, "mode": int, "dim": int, "radius": float, "grid": int},
    "torus_bump": {"amplitude": float, "mode": int, "grid": int},
}


def _parse_value(text: str):
    """int, float, bool or str, in that order of preference."""
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text.strip()


def _typed(section: str, key: str, text: str, typ):
    try:
        if typ is bool:
            val = _parse_value(text)
            if not isinstance(val, bool):
                raise ValueError
            return val
        return typ(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {text!r} is not a valid {typ.__name__}") from None


@dataclass
class Scenario:
    name: str
    command: str
    initial: Dict[str, object]
    flow: FlowConfig
    checks: List[str] = field(default_factory=list)
    sections: Dict[str, Dict[str, object]] = field(default_factory=dict)
    source: Optional[str] = None

    def section(self, name: str) -> Dict[str, object]:
        return dict(self.sections.get(name, {}))

    def with_grid(self, n: int) -> "Scenario":
        if not (8 <= n <= 65536):
            raise ConfigError("grid size must lie in [8, 65536]")
        initial = dict(self.initial, grid=int(n))
        return dataclasses.replace(self, initial=initial)


def _flow_config(cp: configparser.ConfigParser, command: str) -> FlowConfig:
    kw = {}
    if cp.has_section("flow"):
        for key, text in cp.items("flow"):
            if key not in _FLOW_FIELDS or key in ("keep_snapshots", "checkpoint_dir"):
                raise ConfigError(f"[flow] unknown key {key!r}")
            typ = {"int": int, "float": float, "str": str, "bool": bool}.get(
                str(_FLOW_FIELDS[key].type), None)
            default = _FLOW_FIELDS[key].default
            typ = typ or type(default)
            kw[key] = _typed("flow", key, text, typ)
    if "mode" not in kw:
        kw["mode"] = "unnormalized2d" if command == "flow2d" else "unnormalized3d"
    return FlowConfig(**kw)


def parse_scenario(text: str, source: Optional[str] = None) -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text, source=source or "<scenario>")
    except configparser.Error as exc:
        raise ConfigError(f"unreadable scenario: {exc}") from exc
    if not cp.has_section("scenario"):
        raise ConfigError("scenario file needs a [scenario] section")
    head = dict(cp.items("scenario"))
    unknown = set(head) - {"name", "command", "checks"}
    if unknown:
        raise ConfigError(f"[scenario] unknown keys {sorted(unknown)}")
    command = head.get("command", "")
    if command not in COMMANDS:
        raise ConfigError(f"[scenario] command must be one of {COMMANDS}")
    name = head.get("name") or (Path(source).stem if source else "scenario")
    checks = [c.strip() for c in head.get("checks", "").split(",") if c.strip()]

    initial: Dict[str, object] = {}
    if command != "pinch-ode":
        if not cp.has_section("initial"):
            raise ConfigError("scenario needs an [initial] section")
        raw = dict(cp.items("initial"))
        kind = raw.pop("kind", "")
        if kind not in INITIAL_KINDS:
            raise ConfigError(f"[initial] kind must be one of {INITIAL_KINDS}")
        allowed = _INITIAL_KEYS[kind]
        for key, text in raw.items():
            if key not in allowed:
                raise ConfigError(f"[initial] key {key!r} not allowed for kind {kind!r}")
            initial[key] = _typed("initial", key, text, allowed[key])
        initial["kind"] = kind
        if kind == "exact" and initial.get("solution") not in KINDS:
            raise ConfigError(f"[initial] solution must be one of {KINDS}")
    flow = _flow_config(cp, command)
    if command == "flow2d" and flow.dim != 2:
        raise ConfigError("flow2d needs a 2-D flow mode")
    if command in ("flow3d", "surgery-run") and flow.dim != 3:
        raise ConfigError(f"{command} needs a 3-D flow mode")
    sections = {}
    for sec in cp.sections():
        if sec in ("scenario", "initial", "flow"):
            continue
        sections[sec] = {k: _parse_value(v) for k, v in cp.items(sec)}
    return Scenario(name=name, command=command, initial=initial, flow=flow, checks=checks,
                    sections=sections, source=source)


def shipped_scenarios() -> List[str]:
    """File names of the scenarios installed with the package."""
    root = resources.files(SCENARIO_PACKAGE)
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def load_scenario(path_or_name: str) -> Scenario:
    """Read a scenario from a path, or by name from the shipped set."""
    p = Path(path_or_name)
    if p.is_file():
        return parse_scenario(p.read_text(), source=str(p))
    name = p.name if p.name.endswith(".cfg") else p.name + ".cfg"
    if name in shipped_scenarios():
        text = resources.files(SCENARIO_PACKAGE).joinpath(name).read_text()
        return parse_scenario(text, source=name)
    raise ConfigError(f"no scenario file {path_or_name!r}")


def build_initial(sc: Scenario):
    """Initial metric of a scenario (whitelisted constructors only)."""
    ini = dict(sc.initial)
    kind = ini.pop("kind")
    n = int(ini.pop("grid", 512))
    if kind == "exact":
        sol = exact_solution(sc)
        return evaluate(sol, 0.0, Grid1D.uniform(n))
    if kind == "dumbbell":
        return dumbbell(n=n, **ini)
    if kind == "dented_sphere":
        return dented_sphere(n=n, **ini)
    if kind == "torus_bump":
        return torus_bump(m=n, **ini)
    raise ConfigError(f"unknown initial kind {kind!r}")


def exact_solution(sc: Scenario) -> Optional[ExactSolution]:
    if sc.initial.get("kind") != "exact":
        return None
    return ExactSolution(str(sc.initial["solution"]), float(sc.initial.get("param", 0.5)),
                         int(sc.initial.get("dim", 3)))


__all__ = ["Scenario", "parse_scenario", "load_scenario", "shipped_scenarios", "build_initial",
           "exact_solution", "COMMANDS", "INITIAL_KINDS"]
