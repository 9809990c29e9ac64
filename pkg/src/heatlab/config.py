"""Run configuration: one JSON document, validated before any solve.

Unknown keys are rejected and every validation error names its field.
Lengths are in lattice units, times in problem units, time sets are
``[[a, b], ...]``.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from typing import Any

from .bounds import BoundConstants
from .exhaustion import SOURCE_RECIPES, Z0_RECIPES, SweepConfig
from .heat import LinearSolveConfig
from .hum import HumConfig
from .lattice import LatticeSpec
from .semilinear import FixedPointConfig, make_nonlinearity
from .timeset import TimeSet

SUBCOMMANDS = ("solve-linear", "solve-semilinear", "cost-sweep", "observability", "frequency-check",
               "telescope", "bound", "exhaustion")

DEFAULTS: dict[str, Any] = {
    "lattice": {"dim": 1, "r1": 0.2, "r2": 0.5, "m": 8},
    "sizes": [2],
    "T": 1.0,
    "E": None,  # None: the whole interval (0, T)
    "K": 100,
    "control_set": "lattice",  # or "none"
    "potential": 0.0,  # constant potential for the linear commands
    "nonlinearity": {"name": "zero", "L": None},
    "hum": {"eps": 1e-8, "tol": 1e-10, "max_iter": 5000},
    "fixed_point": {"tol": 1e-6, "max_iter": 50, "kappa_cap": None},
    "solver": {"method": "auto", "rtol": 1e-10, "max_iter": None},
    "z0": {"recipe": "bump", "amplitude": 1.0},
    "reference": None,
    "ball_radius": None,
    "source": "none",
    "observability": {"power_iterations": 0},
    "frequency": {"x0": None, "r": 0.5, "lam": 0.1},
    "telescope": {"M": 20, "ratio": None},
    "bound": {"theta": 0.5, "C3": 1.0, "C": 1.0, "C_tilde": 0.0, "a_norm": 0.0},
    "record_wall_time": False,
    "seed": 0,
    "out": None,
}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _merge(base: dict, doc: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in doc.items():
        name = f"{path}{key}"
        if key not in base:
            raise ConfigError(name, "unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(name, "expected an object")
            out[key] = _merge(base[key], value, name + ".")
        else:
            out[key] = value
    return out


def _num(field, value, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(field, "expected an integer")
    if not math.isfinite(value):
        raise ConfigError(field, "must be finite")
    if positive and not value > 0:
        raise ConfigError(field, "must be positive")
    if nonneg and value < 0:
        raise ConfigError(field, "must be nonnegative")
    return int(value) if integer else float(value)


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    data: dict  # fully resolved document

    def __getitem__(self, key):
        return self.data[key]

    @property
    def spec(self) -> LatticeSpec:
        lat = self.data["lattice"]
        return LatticeSpec(lat["dim"], lat["r1"], lat["r2"])

    @property
    def m(self) -> int:
        return self.data["lattice"]["m"]

    @property
    def time_set(self) -> TimeSet:
        E = self.data["E"]
        return TimeSet.full(self.data["T"]) if E is None else TimeSet.from_pairs(self.data["T"], E)

    @property
    def nonlinearity(self):
        nl = self.data["nonlinearity"]
        return make_nonlinearity(nl["name"], nl["L"])

    @property
    def hum(self) -> HumConfig:
        return HumConfig(**self.data["hum"])

    @property
    def fixed_point(self) -> FixedPointConfig:
        fp = self.data["fixed_point"]
        return FixedPointConfig(fp["tol"], fp["max_iter"], self.hum, fp["kappa_cap"])

    @property
    def solver(self) -> LinearSolveConfig:
        return LinearSolveConfig(**self.data["solver"])

    @property
    def bound_constants(self) -> BoundConstants:
        b = self.data["bound"]
        return BoundConstants(b["theta"], b["C3"], b["C"], b["C_tilde"])

    def sweep(self, nonlinear: bool = True) -> SweepConfig:
        d = self.data
        return SweepConfig(self.spec, self.m, tuple(d["sizes"]), self.time_set, d["K"],
                           self.nonlinearity if nonlinear else make_nonlinearity("zero"),
                           d["z0"]["recipe"], d["z0"]["amplitude"], self.fixed_point, self.solver,
                           d["reference"], d["ball_radius"], d["source"])

    def to_json(self) -> str:
        # the output path is left out so identical runs give identical files wherever they land
        doc = {k: v for k, v in self.data.items() if k != "out"}
        return json.dumps({"subcommand": self.subcommand, **doc}, sort_keys=True, separators=(",", ":"))


def _validate(sub: str, d: dict) -> None:
    if sub not in SUBCOMMANDS:
        raise ConfigError("subcommand", f"unknown subcommand {sub!r}")
    lat = d["lattice"]
    dim = _num("lattice.dim", lat["dim"], integer=True)
    if dim not in (1, 2):
        raise ConfigError("lattice.dim", "must be 1 or 2")
    r1 = _num("lattice.r1", lat["r1"], positive=True)
    r2 = _num("lattice.r2", lat["r2"], positive=True)
    if not r1 < r2:
        raise ConfigError("lattice.r1", "(H1) requires r1 < r2")
    m = _num("lattice.m", lat["m"], integer=True)
    if m < 2:
        raise ConfigError("lattice.m", "must be >= 2")
    lat.update(dim=dim, r1=r1, r2=r2, m=m)

    sizes = d["sizes"]
    if not isinstance(sizes, list) or not sizes:
        raise ConfigError("sizes", "expected a nonempty list of box sizes")
    sizes = [_num("sizes", n, integer=True) for n in sizes]
    if sizes[0] < 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError("sizes", "must be positive and strictly increasing")
    d["sizes"] = sizes

    T = d["T"] = _num("T", d["T"], positive=True)
    d["K"] = K = _num("K", d["K"], integer=True)
    if K < 1:
        raise ConfigError("K", "must be >= 1")
    if d["E"] is not None:
        E = d["E"]
        if not isinstance(E, list) or not all(isinstance(iv, list) and len(iv) == 2 for iv in E):
            raise ConfigError("E", "expected [[a, b], ...]")
        E = [[_num("E", a), _num("E", b)] for a, b in E]
        for a, b in E:
            if not (0 <= a < b <= T):
                raise ConfigError("E", f"interval [{a}, {b}] must lie inside (0, T) with a < b")
        try:
            TimeSet.from_pairs(T, E)
        except ValueError as exc:
            raise ConfigError("E", str(exc)) from None
        d["E"] = E

    if d["control_set"] not in ("lattice", "none"):
        raise ConfigError("control_set", "must be 'lattice' or 'none'")
    d["potential"] = _num("potential", d["potential"])

    nl = d["nonlinearity"]
    if nl["L"] is not None:
        nl["L"] = _num("nonlinearity.L", nl["L"])
    try:
        f = make_nonlinearity(nl["name"], nl["L"])
    except (ValueError, AttributeError) as exc:
        raise ConfigError("nonlinearity", str(exc)) from None
    if T / K * f.L >= 1:
        raise ConfigError("K", "tau * L must be < 1")

    for section, cls in (("hum", HumConfig), ("solver", LinearSolveConfig)):
        try:
            cls(**d[section])
        except (ValueError, TypeError) as exc:
            raise ConfigError(section, str(exc)) from None
    fp = d["fixed_point"]
    try:
        FixedPointConfig(fp["tol"], fp["max_iter"], HumConfig(**d["hum"]), fp["kappa_cap"])
    except (ValueError, TypeError) as exc:
        raise ConfigError("fixed_point", str(exc)) from None

    if d["z0"]["recipe"] not in Z0_RECIPES:
        raise ConfigError("z0.recipe", f"choose from {sorted(Z0_RECIPES)}")
    d["z0"]["amplitude"] = _num("z0.amplitude", d["z0"]["amplitude"])
    if d["source"] not in SOURCE_RECIPES:
        raise ConfigError("source", f"choose from {list(SOURCE_RECIPES)}")
    if d["reference"] is not None:
        ref = _num("reference", d["reference"], integer=True)
        if ref < sizes[-1]:
            raise ConfigError("reference", "must be at least the largest box size")
        d["reference"] = ref
    if d["ball_radius"] is not None:
        d["ball_radius"] = _num("ball_radius", d["ball_radius"], positive=True)

    d["observability"]["power_iterations"] = _num("observability.power_iterations",
                                                  d["observability"]["power_iterations"], nonneg=True, integer=True)
    fq = d["frequency"]
    fq["r"] = _num("frequency.r", fq["r"], positive=True)
    fq["lam"] = _num("frequency.lam", fq["lam"], positive=True)
    if fq["x0"] is not None:
        x0 = fq["x0"] if isinstance(fq["x0"], list) else [fq["x0"]]
        if len(x0) != dim:
            raise ConfigError("frequency.x0", f"expected {dim} coordinates")
        fq["x0"] = [_num("frequency.x0", v) for v in x0]
    tel = d["telescope"]
    tel["M"] = _num("telescope.M", tel["M"], integer=True)
    if tel["M"] < 2:
        raise ConfigError("telescope.M", "must be >= 2")
    if tel["ratio"] is not None:
        tel["ratio"] = _num("telescope.ratio", tel["ratio"])
        if not tel["ratio"] > 1:
            raise ConfigError("telescope.ratio", "must exceed 1")
    b = d["bound"]
    for k in ("theta", "C3", "C", "C_tilde"):
        b[k] = _num(f"bound.{k}", b[k])
    b["a_norm"] = _num("bound.a_norm", b["a_norm"], nonneg=True)
    try:
        BoundConstants(b["theta"], b["C3"], b["C"], b["C_tilde"])
    except ValueError as exc:
        raise ConfigError("bound", str(exc)) from None
    if not isinstance(d["record_wall_time"], bool):
        raise ConfigError("record_wall_time", "expected true or false")
    d["seed"] = _num("seed", d["seed"], nonneg=True, integer=True)
    if d["out"] is not None and not isinstance(d["out"], str):
        raise ConfigError("out", "expected a path string")


def apply_override(doc: dict, item: str) -> None:
    """``key.sub=value`` with a JSON value (bare strings allowed)."""
    if "=" not in item:
        raise ConfigError(item, "override must look like key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(key, "cannot override inside a scalar")
    node[parts[-1]] = value


def parse_config(text: str, subcommand: str, overrides=(), seed: int | None = None,
                 out: str | None = None) -> RunConfig:
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}", f"invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a JSON object")
    for item in overrides:
        apply_override(doc, item)
    if seed is not None:
        doc["seed"] = seed
    if out is not None:
        doc["out"] = out
    data = _merge(DEFAULTS, doc)
    _validate(subcommand, data)
    return RunConfig(subcommand, data)
