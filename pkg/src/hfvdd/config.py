"""Run configuration files (INI syntax) and their translation into a setup.

Example::

    [mesh]
    source = triangular:0:diode

    [physics]
    statistics = blakemore:0.27
    recombination = scaled_srh:10
    debye = 0.05
    b = 1

    [boundary]
    n0 = 3.5
    n1 = 1.5
    alpha0 = 0

    [stepper]
    dt = 0.1
    t_end = 1

Numeric values accept simple expressions such as ``log(0.9*0.1)`` or ``e``.
"""
from __future__ import annotations

import ast
import configparser
import math
import operator
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .mesh import Mesh, build_from_spec
from .problem import ProblemSetup, diode_setup, parse_recombination
from .statistics import MeanKind, parse_statistics
from .transient import StepperConfig


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists one message per offending key."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


_FUNCS = {"log": math.log, "exp": math.exp, "sqrt": math.sqrt}
_CONSTS = {"e": math.e, "pi": math.pi}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def eval_number(text: str) -> float:
    """Evaluate a numeric literal or a small arithmetic expression."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _CONSTS:
            return _CONSTS[node.id]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ValueError(f"not a number: {text!r}")

    try:
        value = ev(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ArithmeticError) as exc:
        raise ValueError(f"not a number: {text!r}") from exc
    if not math.isfinite(value):
        raise ValueError(f"not a finite number: {text!r}")
    return value


def _float_list(text):
    return [eval_number(v) for v in text.split(",") if v.strip()]


@dataclass
class RunConfig:
    mesh: str = "triangular:0:diode"
    statistics: str = "boltzmann"
    mean: MeanKind = MeanKind.ARITHMETIC
    debye: float = 1.0
    b: float = 0.0
    doping: str = "pn_diode"
    n_region: tuple = (0.0, 0.25, 0.75, 1.0)
    recombination: str = "none"
    n0: float = 0.9
    n1: float = 0.1
    alpha0: float = 0.0
    initial: str = "diode_sqrt"
    stepper: StepperConfig = field(default_factory=StepperConfig)
    t_end: float = 1.0
    out: str = "out"
    snapshots: tuple = ()
    field_format: str = "vtk"
    name: str = "run"

    @property
    def model(self):
        return parse_statistics(self.statistics)

    def build_mesh(self) -> Mesh:
        return build_from_spec(self.mesh)

    def build_setup(self, mesh: Mesh | None = None, b: float | None = None) -> ProblemSetup:
        mesh = mesh if mesh is not None else self.build_mesh()
        return diode_setup(mesh, self.model, self.n0, self.n1, self.alpha0,
                           b=self.b if b is None else b, debye=self.debye,
                           recombination=parse_recombination(self.recombination), mean=self.mean,
                           n_region=self.n_region, initial=self.initial, eta=1.5)


# section -> key -> (attribute, converter)
_SCHEMA = {
    "mesh": {"source": ("mesh", str)},
    "physics": {
        "statistics": ("statistics", str),
        "mean": ("mean", MeanKind),
        "debye": ("debye", eval_number),
        "lambda": ("debye", eval_number),
        "b": ("b", eval_number),
        "doping": ("doping", str),
        "n_region": ("n_region", lambda s: tuple(_float_list(s))),
        "recombination": ("recombination", str),
    },
    "boundary": {
        "n0": ("n0", eval_number),
        "n1": ("n1", eval_number),
        "alpha0": ("alpha0", eval_number),
        "initial": ("initial", str),
    },
    "stepper": {
        "dt": ("dt", eval_number),
        "eps": ("eps", eval_number),
        "max_newton": ("max_newton", int),
        "tol": ("tol", eval_number),
        "growth": ("growth", eval_number),
        "shrink": ("shrink", eval_number),
        "dt_min": ("dt_min", eval_number),
        "t_end": ("t_end", eval_number),
    },
    "output": {
        "dir": ("out", str),
        "snapshots": ("snapshots", lambda s: tuple(_float_list(s))),
        "format": ("field_format", str),
        "name": ("name", str),
    },
}
_STEPPER_KEYS = {"dt", "eps", "max_newton", "tol", "growth", "shrink", "dt_min"}


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises ConfigError listing every problem found."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc
    errors = []
    values, stepper = {}, {}
    for section in cp.sections():
        if section not in _SCHEMA:
            errors.append(f"[{section}]: unknown section")
            continue
        for key, raw in cp.items(section):
            spec = _SCHEMA[section].get(key)
            if spec is None:
                errors.append(f"{section}.{key}: unknown key")
                continue
            attr, conv = spec
            try:
                val = conv(raw)
            except ValueError as exc:
                errors.append(f"{section}.{key}: {exc}")
                continue
            (stepper if attr in _STEPPER_KEYS else values)[attr] = val

    cfg = RunConfig()
    for attr, val in values.items():
        setattr(cfg, attr, val)
    try:
        cfg.stepper = StepperConfig(**stepper)
    except (TypeError, ValueError) as exc:
        errors.append(f"stepper: {exc}")

    model = None
    try:
        model = cfg.model
    except ValueError as exc:
        errors.append(f"physics.statistics: {exc}")
    try:
        rec = parse_recombination(cfg.recombination)
        if not rec.zero and cfg.alpha0 != 0.0:
            errors.append("boundary.alpha0: must be 0 when physics.recombination is not none")
    except ValueError as exc:
        errors.append(f"physics.recombination: {exc}")
    if cfg.doping != "pn_diode":
        errors.append(f"physics.doping: unknown layout {cfg.doping!r}")
    if len(cfg.n_region) != 4:
        errors.append("physics.n_region: expected xmin, xmax, ymin, ymax")
    if not cfg.debye > 0:
        errors.append("physics.debye: must be positive")
    if model is not None:
        for key in ("n0", "n1"):
            v = getattr(cfg, key)
            if not (0 < v < model.upper_bound):
                errors.append(f"boundary.{key}: must lie in (0, {model.upper_bound:g})")
    if cfg.initial not in ("diode_sqrt", "equilibrium"):
        errors.append(f"boundary.initial: unknown profile {cfg.initial!r}")
    if not cfg.t_end > 0:
        errors.append("stepper.t_end: must be positive")
    if cfg.field_format not in ("vtk", "csv"):
        errors.append("output.format: expected vtk or csv")
    if any(not s >= 0 for s in cfg.snapshots):
        errors.append("output.snapshots: times must be non-negative")
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> RunConfig:
    """Read a config file; bare names such as ``testcase4.cfg`` fall back to
    the configs shipped with the package."""
    p = Path(path)
    if not p.exists():
        shipped = resources.files("hfvdd") / "configs" / p.name
        if p.parent == Path(".") and shipped.is_file():
            return parse_config(shipped.read_text())
    return parse_config(p.read_text())


def shipped_configs():
    return sorted(f.name for f in (resources.files("hfvdd") / "configs").iterdir()
                  if f.name.endswith(".cfg"))
