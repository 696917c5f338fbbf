"""Vector-field models, exact Taylor jets, builtin problems and problem files."""
from __future__ import annotations

import dataclasses
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import EvaluationError, NotOnManifold, ParseError, ProblemError
from .expr import Expression, differentiate, evaluate, parse_expression, substitute

__all__ = [
    "Tolerances",
    "FieldModel",
    "MultiJet",
    "jet",
    "multi_indices",
    "builtin",
    "BUILTINS",
    "load_problem",
    "problem_from_dict",
]

PARAMETER_NAME = "lam"
PARAMETER_ALIASES = ("lambda", "λ")


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds; every field can be overridden from a problem file."""

    manifold: float = 1e-10  # residual of F on {x = 0}
    drift: float = 1e-8  # |F~| below which the flow box is inapplicable
    zero: float = 1e-9  # relative threshold for "= 0" verdicts on jet values
    order: float = 1e-6  # relative threshold on fitted germ coefficients
    chart_rtol: float = 1e-10
    chart_atol: float = 1e-12
    traj_rtol: float = 1e-9
    traj_atol: float = 1e-12

    def updated(self, overrides: Mapping[str, Any] | None) -> "Tolerances":
        if not overrides:
            return self
        names = {f.name for f in dataclasses.fields(self)}
        unknown = set(overrides) - names
        if unknown:
            raise ProblemError(f"unknown tolerance keys: {sorted(unknown)}")
        values = {}
        for key, value in overrides.items():
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
                raise ProblemError(f"tolerance {key!r} must be a positive number")
            values[key] = float(value)
        return dataclasses.replace(self, **values)


def phase_variables(m: int) -> tuple[str, ...]:
    return ("x",) + tuple(f"y{i}" for i in range(1, m + 1))


@dataclass(frozen=True, eq=False)
class FieldModel:
    """``x' = f(x, y)``, ``y' = g(x, y)`` with ``x`` scalar and ``y`` in R^m.

    When ``parameter`` is set the expressions additionally depend on a
    scalar parameter (last variable) with implicit ``lam' = 0``.
    """

    m: int
    f: Expression
    g: tuple[Expression, ...]
    parameter: str | None = None
    anchor: np.ndarray | None = None
    domain_radius: float = 1.0
    tolerances: Tolerances = field(default_factory=Tolerances)
    name: str = ""
    #: how each component was obtained when this is a desingularized field
    division_routes: tuple[str, ...] = ()

    def __post_init__(self):
        if not isinstance(self.m, int) or self.m < 1:
            raise ProblemError(f"m must be a positive integer, got {self.m!r}")
        g = tuple(self.g)
        object.__setattr__(self, "g", g)
        if len(g) != self.m:
            raise ProblemError(f"g has {len(g)} components, expected m = {self.m}")
        expected = self.variables
        for comp in (self.f, *g):
            if comp.variables != expected:
                raise ProblemError(f"component variables {comp.variables} != {expected}")
        anchor = np.zeros(self.m + 1) if self.anchor is None else np.asarray(self.anchor, float)
        if anchor.shape != (self.m + 1,):
            raise ProblemError(f"anchor must have {self.m + 1} entries, got {anchor.shape}")
        if not np.all(np.isfinite(anchor)):
            raise ProblemError("anchor must be finite")
        if abs(anchor[0]) > self.tolerances.manifold:
            raise NotOnManifold(f"anchor x-coordinate {anchor[0]!r} is not 0")
        anchor = anchor.copy()
        anchor[0] = 0.0
        anchor.setflags(write=False)
        object.__setattr__(self, "anchor", anchor)
        if not self.domain_radius > 0:
            raise ProblemError("domain_radius must be positive")

    # -- construction -----------------------------------------------------

    @classmethod
    def from_strings(
        cls,
        f: str,
        g: Sequence[str],
        *,
        parameter: bool = False,
        anchor: Sequence[float] | None = None,
        domain_radius: float = 1.0,
        tolerances: Tolerances | Mapping[str, float] | None = None,
        name: str = "",
    ) -> "FieldModel":
        m = len(g)
        if m < 1:
            raise ProblemError("g must have at least one component")
        variables = phase_variables(m) + ((PARAMETER_NAME,) if parameter else ())
        aliases = {"y": "y1"} if m == 1 else {}
        if parameter:
            aliases.update({a: PARAMETER_NAME for a in PARAMETER_ALIASES})
        fe = parse_expression(f, variables, aliases)
        ge = tuple(parse_expression(text, variables, aliases) for text in g)
        if not isinstance(tolerances, Tolerances):
            tolerances = Tolerances().updated(tolerances)
        return cls(
            m=m,
            f=fe,
            g=ge,
            parameter=PARAMETER_NAME if parameter else None,
            anchor=anchor,
            domain_radius=float(domain_radius),
            tolerances=tolerances,
            name=name,
        )

    def replace(self, **changes) -> "FieldModel":
        return dataclasses.replace(self, **changes)

    def at_parameter(self, value: float) -> "FieldModel":
        """Freeze the parameter, yielding a parameter-free model."""
        if self.parameter is None:
            return self
        keep = self.phase_variables
        fixed = {self.parameter: float(value)}
        return FieldModel(
            m=self.m,
            f=substitute(self.f, fixed, keep),
            g=tuple(substitute(c, fixed, keep) for c in self.g),
            anchor=self.anchor,
            domain_radius=self.domain_radius,
            tolerances=self.tolerances,
            name=f"{self.name}[{self.parameter}={value!r}]",
        )

    # -- structure ---------------------------------------------------------

    @property
    def phase_variables(self) -> tuple[str, ...]:
        return phase_variables(self.m)

    @property
    def variables(self) -> tuple[str, ...]:
        return self.phase_variables + ((self.parameter,) if self.parameter else ())

    @property
    def dim(self) -> int:
        return self.m + 1

    @property
    def components(self) -> tuple[Expression, ...]:
        return (self.f, *self.g)

    @cached_property
    def jacobian_expressions(self) -> tuple[tuple[Expression, ...], ...]:
        """``d component_i / d phase variable_j`` for the phase variables."""
        return tuple(
            tuple(differentiate(c, v) for v in self.phase_variables) for c in self.components
        )

    # -- evaluation ----------------------------------------------------------

    def evaluate(self, point: Sequence[float]) -> np.ndarray:
        """Exact tree-walk evaluation at a point over all variables."""
        return np.array([evaluate(c, point) for c in self.components])

    def _columns(self, p: np.ndarray) -> list[np.ndarray]:
        if p.shape[0] != len(self.variables):
            raise ValueError(
                f"expected {len(self.variables)} coordinates, got array of shape {p.shape}"
            )
        return [p[i] for i in range(p.shape[0])]

    def rhs(self, p: np.ndarray) -> np.ndarray:
        """Vectorised evaluation; ``p`` has shape (nvars,) or (nvars, n)."""
        p = np.asarray(p, dtype=float)
        cols = self._columns(p)
        out = np.empty((self.dim,) + p.shape[1:])
        try:
            with np.errstate(divide="raise", invalid="raise", over="raise"):
                for i, comp in enumerate(self.components):
                    out[i] = comp.compiled(*cols)
        except (FloatingPointError, ZeroDivisionError) as exc:
            raise EvaluationError(f"field evaluation failed: {exc}") from exc
        return out

    def jacobian(self, p: np.ndarray) -> np.ndarray:
        """Phase-space Jacobian, shape (dim, dim) + p.shape[1:]."""
        p = np.asarray(p, dtype=float)
        cols = self._columns(p)
        out = np.empty((self.dim, self.dim) + p.shape[1:])
        try:
            with np.errstate(divide="raise", invalid="raise", over="raise"):
                for i, row in enumerate(self.jacobian_expressions):
                    for j, comp in enumerate(row):
                        out[i, j] = comp.compiled(*cols)
        except (FloatingPointError, ZeroDivisionError) as exc:
            raise EvaluationError(f"jacobian evaluation failed: {exc}") from exc
        return out

    def describe(self) -> dict:
        out = {
            "name": self.name,
            "m": self.m,
            "f": self.f.to_string(),
            "g": [c.to_string() for c in self.g],
            "anchor": [float(v) for v in self.anchor],
            "domain_radius": self.domain_radius,
        }
        if self.parameter:
            out["parameter"] = self.parameter
        return out


# ---------------------------------------------------------------------------
# jets


def multi_indices(nvars: int, order: int, min_order: int = 0):
    """All exponent tuples with ``min_order <= |alpha| <= order``, graded lex."""
    for total in range(min_order, order + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), total):
            alpha = [0] * nvars
            for i in combo:
                alpha[i] += 1
            yield tuple(alpha)


def _factorial(alpha: Sequence[int]) -> int:
    return math.prod(math.factorial(a) for a in alpha)


@dataclass(frozen=True, eq=False)
class MultiJet:
    """Truncated Taylor expansion ``sum_alpha c_alpha (p - base)^alpha``.

    ``coefficients[alpha]`` is the vector ``d^alpha F(base) / alpha!``;
    absent entries are exactly zero.
    """

    base: np.ndarray
    order: int
    coefficients: Mapping[tuple[int, ...], np.ndarray]
    variables: tuple[str, ...]
    ncomp: int

    def coefficient(self, alpha: Sequence[int]) -> np.ndarray:
        alpha = tuple(alpha)
        if len(alpha) != len(self.variables):
            raise ValueError("multi-index length does not match variable count")
        if sum(alpha) > self.order:
            raise ValueError(f"|alpha| = {sum(alpha)} exceeds jet order {self.order}")
        c = self.coefficients.get(alpha)
        return np.zeros(self.ncomp) if c is None else np.array(c)

    def derivative(self, alpha: Sequence[int]) -> np.ndarray:
        """Raw partial derivative ``d^alpha F(base)``."""
        return self.coefficient(alpha) * _factorial(alpha)

    def d(self, component: int, **powers: int) -> float:
        """Partial derivative of one component by variable name, e.g. ``d(0, x=1, y1=1)``."""
        alpha = [0] * len(self.variables)
        for name, k in powers.items():
            alpha[self.variables.index(name)] = k
        return float(self.derivative(alpha)[component])

    def max_norm(self) -> float:
        if not self.coefficients:
            return 0.0
        return float(max(np.max(np.abs(c)) for c in self.coefficients.values()))

    def __call__(self, point: Sequence[float]) -> np.ndarray:
        dp = np.asarray(point, float) - self.base
        out = np.zeros(self.ncomp)
        for alpha, c in self.coefficients.items():
            out = out + c * math.prod(dp[i] ** a for i, a in enumerate(alpha) if a)
        return out


def jet(model: FieldModel, point: Sequence[float] | None = None, order: int = 3) -> MultiJet:
    """Taylor jet of the field at ``point`` from exact symbolic derivatives.

    ``point`` covers every model variable (phase variables and, if
    present, the parameter); it defaults to the anchor with parameter 0.
    """
    if not isinstance(order, (int, np.integer)) or order < 1:
        raise ValueError(f"jet order must be >= 1, got {order!r}")
    variables = model.variables
    if point is None:
        point = list(model.anchor) + ([0.0] if model.parameter else [])
    base = np.asarray(point, dtype=float)
    if base.shape != (len(variables),):
        raise ValueError(f"jet point must have {len(variables)} entries")
    nvars = len(variables)
    coefficients: dict[tuple[int, ...], np.ndarray] = {}
    for k, comp in enumerate(model.components):
        cache: dict[tuple[int, ...], Expression] = {(0,) * nvars: comp}
        for alpha in multi_indices(nvars, order):
            if alpha not in cache:
                j = next(i for i, a in enumerate(alpha) if a)
                parent = list(alpha)
                parent[j] -= 1
                cache[alpha] = differentiate(cache[tuple(parent)], variables[j])
            expr = cache[alpha]
            if expr.is_zero:
                continue
            value = evaluate(expr, base) / _factorial(alpha)
            if value != 0.0:
                vec = coefficients.setdefault(alpha, np.zeros(model.dim))
                vec[k] = value
    return MultiJet(base=base, order=int(order), coefficients=coefficients,
                    variables=variables, ncomp=model.dim)


# ---------------------------------------------------------------------------
# builtin problems and problem files

BUILTINS: dict[str, dict] = {
    # line of equilibria with a transcritical point: x' = x y, y' = x
    "transcritical": {"m": 1, "f": "x*y1", "g": ["x"]},
    # plane of equilibria with a drift singularity at the origin
    "driftsing": {"m": 2, "f": "x*y1", "g": ["x*y2", "x"]},
    # one-parameter drift singularity, coefficients (a, b, c, d, sigma)
    "paramdrift": {"m": 1, "f": "x*(0*x + 1*y1)", "g": ["x*(1*x + 0*y1 + 1*lam)"], "lambda": True},
    "paramdrift-focus": {"m": 1, "f": "x*(x + y1)", "g": ["x*(-x + y1 + lam)"], "lambda": True},
    "paramdrift-node": {"m": 1, "f": "x*(x + y1)", "g": ["x*(0*x + 3*y1 + lam)"], "lambda": True},
}


def problem_from_dict(data: Mapping[str, Any], name: str = "") -> FieldModel:
    if not isinstance(data, Mapping):
        raise ProblemError("problem must be a JSON object")
    for key in ("m", "f", "g"):
        if key not in data:
            raise ProblemError(f"problem is missing required field {key!r}")
    m, f, g = data["m"], data["f"], data["g"]
    if not isinstance(m, int) or isinstance(m, bool) or m < 1:
        raise ProblemError("'m' must be a positive integer")
    if not isinstance(f, str):
        raise ProblemError("'f' must be a string expression")
    if not isinstance(g, list) or not all(isinstance(s, str) for s in g):
        raise ProblemError("'g' must be an array of string expressions")
    if len(g) != m:
        raise ProblemError(f"'g' has {len(g)} entries but m = {m}")
    anchor = data.get("anchor")
    if anchor is not None and (
        not isinstance(anchor, list) or not all(isinstance(v, (int, float)) for v in anchor)
    ):
        raise ProblemError("'anchor' must be an array of numbers")
    radius = data.get("domain_radius", 1.0)
    if not isinstance(radius, (int, float)) or radius <= 0:
        raise ProblemError("'domain_radius' must be a positive number")
    tolerances = data.get("tolerances")
    if tolerances is not None and not isinstance(tolerances, Mapping):
        raise ProblemError("'tolerances' must be an object")
    try:
        return FieldModel.from_strings(
            f, g,
            parameter=bool(data.get("lambda", False)),
            anchor=anchor,
            domain_radius=radius,
            tolerances=tolerances,
            name=name or str(data.get("name", "")),
        )
    except ParseError as exc:
        raise ProblemError(f"expression error: {exc}") from exc


def builtin(name: str, **overrides) -> FieldModel:
    if name not in BUILTINS:
        raise ProblemError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}")
    data = {**BUILTINS[name], **overrides}
    return problem_from_dict(data, name=name)


def load_problem(source: str | Path) -> FieldModel:
    """Load ``builtin:<name>`` or a JSON problem file."""
    text = str(source)
    if text.startswith("builtin:"):
        return builtin(text.split(":", 1)[1])
    path = Path(text)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise ProblemError(f"cannot read problem file {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"malformed JSON in {path}: {exc}") from exc
    return problem_from_dict(data, name=path.stem)
