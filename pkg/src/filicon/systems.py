"""Built-in example systems and the YAML system-spec format.

A system file looks like::

    name: systemA
    dims: 1
    lambda_range: [0, 1]
    window: [[-1, 1]]
    neighborhood: [[-1, 1]]     # optional, defaults to the window
    htau: 0.5                   # optional default time horizon
    pieces:
      - components: ["tanh(x1/lambda)+2"]
    lambda_zero_member:         # optional; required when pieces are singular at 0
      pieces:
        - {guard: "x1", sign: ">", components: ["3"]}
        - {guard: "x1", sign: "<", components: ["1"]}

A piece may carry several conditions as ``guards: [{expr: ..., sign: ...}]``.
Signs are ``>``, ``<`` or ``=`` (also ``pos``, ``neg``, ``zero``).  A piece
with sign ``=`` only contributes on the switching set itself, which is how
set values larger than the hull of the neighbouring pieces are declared.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from scipy.optimize import minimize_scalar

from .expr import ParseError, parse_expr
from .field import FilippovFamily, Guard, Piece, PiecewiseSpec, SWITCH_TOL, convexify
from .geometry import Box, Interval

__all__ = [
    "SpecError",
    "SystemSpec",
    "BUILTIN_NAMES",
    "builtin",
    "load_system",
    "parse_system",
    "dump_system",
    "resolve_system",
    "tau_min",
    "g_one",
]

BUILTIN_NAMES = ("systemA", "systemB", "familyH", "systemC", "planarDemo")

_SIGN_ALIASES = {">": ">", "<": "<", "=": "=", "pos": ">", "neg": "<", "zero": "="}


class SpecError(ValueError):
    """Invalid system spec; the message carries source, line and field."""


@dataclass(frozen=True)
class SystemSpec:
    name: str
    dims: int
    lam_range: Interval
    window: Box
    neighborhood: Box
    regular: PiecewiseSpec
    at_zero: PiecewiseSpec | None = None
    htau: float | None = None
    description: str = ""

    def family(self) -> FilippovFamily:
        return convexify(self.regular, self.lam_range, self.at_zero, self.name)


# -- System B's switching-set minimum -----------------------------------------


def g_one(u):
    """``g_1(u) = tanh(u) + 2 - 2e * mollifier(u)``; ``g_lam(x) = g_1(x/lam)``."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        bump = np.where(inside, np.exp(-1.0 / (1.0 - u * u)), 0.0)
    return np.tanh(u) + 2.0 - 2.0 * np.exp(1.0) * bump


@functools.lru_cache(maxsize=None)
def tau_min() -> float:
    """Global minimum of ``g_1``; golden-section refined from a coarse scan."""
    u = np.linspace(-1.0, 1.0, 20001)[1:-1]
    k = int(np.argmin(g_one(u)))
    res = minimize_scalar(
        lambda s: float(g_one(s)),
        bracket=(u[k - 1], u[k], u[k + 1]),
        method="golden",
        tol=1e-12,
    )
    return float(min(res.fun, g_one(u[k])))


# -- parsing -------------------------------------------------------------------


class _Doc:
    """YAML node tree flattened to python values, remembering line numbers."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines: dict[str, int] = {}
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = f":{mark.line + 1}" if mark is not None else ""
            raise SpecError(f"{source}{line}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
        if node is None:
            raise SpecError(f"{source}: empty system spec")
        self.data = self._convert(node, "")

    def _convert(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for knode, vnode in node.value:
                key = knode.value
                out[key] = self._convert(vnode, f"{path}.{key}" if path else key)
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._convert(v, f"{path}[{i}]") for i, v in enumerate(node.value)]
        return yaml.SafeLoader(" ").construct_object(node) if node.tag != "tag:yaml.org,2002:str" else node.value

    def error(self, path: str, message: str) -> SpecError:
        line = self.lines.get(path)
        while line is None and path:
            path = path.rsplit(".", 1)[0] if "." in path else ""
            line = self.lines.get(path)
        where = f"{self.source}:{line}" if line else self.source
        return SpecError(f"{where}: {path or '<root>'}: {message}")


def _number(doc: _Doc, value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise doc.error(path, f"expected a number, got {value!r}")
    return float(value)


def _interval(doc: _Doc, value, path: str) -> Interval:
    if not isinstance(value, list) or len(value) != 2:
        raise doc.error(path, "expected a [lo, hi] pair")
    lo, hi = (_number(doc, v, f"{path}[{i}]") for i, v in enumerate(value))
    if lo > hi:
        raise doc.error(path, f"malformed range: lo={lo} > hi={hi}")
    return Interval(lo, hi)


def _box(doc: _Doc, value, path: str, dims: int) -> Box:
    if not isinstance(value, list) or len(value) != dims:
        raise doc.error(path, f"expected {dims} [lo, hi] pairs")
    return Box(tuple(_interval(doc, v, f"{path}[{i}]") for i, v in enumerate(value)))


def _expr(doc: _Doc, value, path: str, dims: int):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = repr(value)
    if not isinstance(value, str):
        raise doc.error(path, f"expected an expression string, got {value!r}")
    try:
        return parse_expr(value, dims)
    except ParseError as exc:
        raise doc.error(path, str(exc)) from None


def _guard(doc: _Doc, expr_text, sign, path: str, dims: int) -> Guard:
    if sign not in _SIGN_ALIASES:
        raise doc.error(path, f"unknown guard sign {sign!r}")
    return Guard(_expr(doc, expr_text, path, dims), _SIGN_ALIASES[sign])


def _pieces(doc: _Doc, value, path: str, dims: int) -> PiecewiseSpec:
    if not isinstance(value, list) or not value:
        raise doc.error(path, "expected a non-empty list of pieces")
    pieces = []
    for k, raw in enumerate(value):
        p = f"{path}[{k}]"
        if not isinstance(raw, dict):
            raise doc.error(p, "a piece must be a mapping")
        unknown = set(raw) - {"guard", "sign", "guards", "components"}
        if unknown:
            raise doc.error(p, f"unknown field(s) {sorted(unknown)}")
        guards = []
        if "guard" in raw:
            if "sign" not in raw:
                raise doc.error(p, "guard given without sign")
            guards.append(_guard(doc, raw["guard"], raw["sign"], f"{p}.guard", dims))
        for j, g in enumerate(raw.get("guards", [])):
            gp = f"{p}.guards[{j}]"
            if not isinstance(g, dict) or set(g) != {"expr", "sign"}:
                raise doc.error(gp, "each guard needs exactly 'expr' and 'sign'")
            guards.append(_guard(doc, g["expr"], g["sign"], gp, dims))
        comps = raw.get("components")
        if not isinstance(comps, list) or len(comps) != dims:
            raise doc.error(f"{p}.components" if "components" in raw else p, f"expected {dims} component expression(s)")
        pieces.append(
            Piece(tuple(guards), tuple(_expr(doc, c, f"{p}.components[{i}]", dims) for i, c in enumerate(comps)))
        )
    return PiecewiseSpec(dims, tuple(pieces))


def _sample_points(window: Box, n: int = 0) -> np.ndarray:
    per_axis = n or {1: 401, 2: 61}.get(window.dims, 9)
    axes = [np.linspace(iv.lo, iv.hi, per_axis) for iv in window.intervals]
    grid = np.array(list(itertools.product(*axes)))
    rng = np.random.default_rng(12345)
    rand = window.lo + rng.random((200 * window.dims, window.dims)) * window.widths
    return np.vstack([grid, rand])


def _check_partition(doc: _Doc, spec: PiecewiseSpec, path: str, window: Box, lams) -> None:
    X = _sample_points(window)
    xs = [X[:, d] for d in range(spec.dims)]
    for lam in lams:
        lam = np.float64(lam)
        strict, closed, values = [], [], []
        for piece in spec.pieces:
            s = np.ones(len(X), dtype=bool)
            c = np.ones(len(X), dtype=bool)
            for g in piece.guards:
                h = np.broadcast_to(g.expr.evaluate(xs, lam), (len(X),))
                s &= g.strict_point(h)
                c &= g.closure_point(h)
            strict.append(s & ~np.array([g.sign == "=" for g in piece.guards]).any())
            closed.append(c)
            values.append(np.stack([np.broadcast_to(e.evaluate(xs, lam), (len(X),)) for e in piece.components], 1))
        uncovered = ~np.any(closed, axis=0)
        if uncovered.any():
            x = X[np.argmax(uncovered)]
            raise doc.error(path, f"guards do not cover x={x.tolist()} (lambda={float(lam)})")
        for i, j in itertools.combinations(range(len(spec.pieces)), 2):
            both = strict[i] & strict[j]
            with np.errstate(invalid="ignore"):
                differ = both & np.any(np.abs(values[i] - values[j]) > 1e-9, axis=1)
            if differ.any():
                x = X[np.argmax(differ)]
                raise doc.error(
                    path,
                    f"pieces {i} and {j} overlap with contradictory values at x={x.tolist()} "
                    f"(lambda={float(lam)}); guards must partition the domain",
                )


def _singular_at_zero(spec: PiecewiseSpec, window: Box) -> bool:
    X = _sample_points(window)
    xs = [X[:, d] for d in range(spec.dims)]
    lam = np.float64(0.0)
    for piece in spec.pieces:
        for e in itertools.chain(piece.components, (g.expr for g in piece.guards)):
            if not np.all(np.isfinite(np.broadcast_to(e.evaluate(xs, lam), (len(X),)))):
                return True
    return False


def parse_system(text: str, source: str = "<string>") -> SystemSpec:
    doc = _Doc(text, source)
    data = doc.data
    if not isinstance(data, dict):
        raise doc.error("", "top level must be a mapping")
    known = {"name", "dims", "lambda_range", "window", "neighborhood", "pieces",
             "lambda_zero_member", "htau", "description"}
    unknown = set(data) - known
    if unknown:
        raise doc.error("", f"unknown field(s) {sorted(unknown)}")
    for key in ("name", "dims", "lambda_range", "window", "pieces"):
        if key not in data:
            raise doc.error("", f"missing required field {key!r}")
    name = str(data["name"])
    dims = data["dims"]
    if isinstance(dims, bool) or not isinstance(dims, int) or not 1 <= dims <= 9:
        raise doc.error("dims", f"dims must be an integer in 1..9, got {dims!r}")
    lam_range = _interval(doc, data["lambda_range"], "lambda_range")
    window = _box(doc, data["window"], "window", dims)
    neighborhood = _box(doc, data.get("neighborhood", data["window"]), "neighborhood", dims)
    if neighborhood.intersect(window) != neighborhood:
        raise doc.error("neighborhood", "neighborhood must lie inside the window")
    regular = _pieces(doc, data["pieces"], "pieces", dims)
    at_zero = None
    if "lambda_zero_member" in data:
        member = data["lambda_zero_member"]
        if not isinstance(member, dict) or "pieces" not in member:
            raise doc.error("lambda_zero_member", "expected a mapping with 'pieces'")
        if 0.0 not in lam_range:
            raise doc.error("lambda_zero_member", "lambda=0 is outside lambda_range")
        at_zero = _pieces(doc, member["pieces"], "lambda_zero_member.pieces", dims)
        if at_zero.uses_lambda():
            raise doc.error("lambda_zero_member", "the lambda=0 member must not use lambda")
    htau = None
    if "htau" in data:
        htau = _number(doc, data["htau"], "htau")
        if htau <= 0:
            raise doc.error("htau", "htau must be positive")

    lams = sorted({lam_range.lo, lam_range.mid, lam_range.hi} - ({0.0} if at_zero else set()))
    if at_zero is None and 0.0 in lam_range and _singular_at_zero(regular, window):
        raise doc.error(
            "lambda_zero_member",
            "lambda_range contains 0 but the pieces are singular at lambda=0; declare "
            "lambda_zero_member explicitly. Two families can share the same pointwise "
            "limit away from the switching set yet need different set values on it, "
            "so the lambda=0 member is never inferred",
        )
    if at_zero is None or lams:
        lams = [l for l in lams if not (l == 0.0 and _singular_at_zero(regular, window))]
        if lams:
            _check_partition(doc, regular, "pieces", window, lams)
    if at_zero is not None:
        _check_partition(doc, at_zero, "lambda_zero_member.pieces", window, [0.0])
    return SystemSpec(
        name=name,
        dims=dims,
        lam_range=lam_range,
        window=window,
        neighborhood=neighborhood,
        regular=regular,
        at_zero=at_zero,
        htau=htau,
        description=str(data.get("description", "")),
    )


def load_system(path: str | Path) -> SystemSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"{path}: cannot read: {exc.strerror}") from None
    return parse_system(text, str(path))


# -- dumping -------------------------------------------------------------------


def _dump_pieces(spec: PiecewiseSpec) -> list:
    out = []
    for piece in spec.pieces:
        entry: dict = {}
        if piece.guards:
            entry["guards"] = [{"expr": str(g.expr), "sign": g.sign} for g in piece.guards]
        entry["components"] = [str(c) for c in piece.components]
        out.append(entry)
    return out


def dump_system(spec: SystemSpec) -> str:
    data: dict = {
        "name": spec.name,
        "dims": spec.dims,
        "lambda_range": [spec.lam_range.lo, spec.lam_range.hi],
        "window": spec.window.as_pairs(),
        "neighborhood": spec.neighborhood.as_pairs(),
    }
    if spec.htau is not None:
        data["htau"] = spec.htau
    if spec.description:
        data["description"] = spec.description
    data["pieces"] = _dump_pieces(spec.regular)
    if spec.at_zero is not None:
        data["lambda_zero_member"] = {"pieces": _dump_pieces(spec.at_zero)}
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)


# -- built-ins -----------------------------------------------------------------

_F0 = """
  pieces:
    - {guard: "x1", sign: ">", components: ["3"]}
    - {guard: "x1", sign: "<", components: ["1"]}
"""

_G_LAMBDA = '"tanh(x1/lambda)+2-2*exp(1)*mollifier(x1/lambda)"'

_BUILTINS = {
    "systemA": f"""
name: systemA
description: smooth family tanh(x/lambda)+2 with the convexified jump field at lambda=0
dims: 1
lambda_range: [0, 1]
window: [[-1, 1]]
neighborhood: [[-1, 1]]
pieces:
  - components: ["tanh(x1/lambda)+2"]
lambda_zero_member:{_F0}""",
    "systemB": f"""
name: systemB
description: mollified family g_lambda with the matching set-valued member [tau, 3] at 0
dims: 1
lambda_range: [0, 1]
window: [[-1, 1]]
neighborhood: [[-1, 1]]
htau: 0.1
pieces:
  - components: [{_G_LAMBDA}]
lambda_zero_member:
  pieces:
    - {{guard: "x1", sign: ">", components: ["3"]}}
    - {{guard: "x1", sign: "<", components: ["1"]}}
    - {{guard: "x1", sign: "=", components: ["{{tau}}"]}}
""",
    "familyH": f"""
name: familyH
description: g_lambda paired with the wrong lambda=0 member; not upper-semicontinuous
dims: 1
lambda_range: [0, 1]
window: [[-1, 1]]
neighborhood: [[-1, 1]]
pieces:
  - components: [{_G_LAMBDA}]
lambda_zero_member:{_F0}""",
    "systemC": """
name: systemC
description: contraction -x for x<0, unit drift for x>0, [0,1] at the switch
dims: 1
lambda_range: [0, 1]
window: [[-1, 1]]
neighborhood: [[-1, 1]]
htau: 0.5
pieces:
  - {guard: "x1", sign: "<", components: ["-x1"]}
  - {guard: "x1", sign: ">", components: ["1"]}
""",
    "planarDemo": """
name: planarDemo
description: invented planar stand-in; sliding along x2 = 0 drives x1 to 0
dims: 2
lambda_range: [0, 1]
window: [[-1, 1], [-1, 1]]
neighborhood: [[-1, 1], [-1, 1]]
pieces:
  - {guard: "x2", sign: ">", components: ["-x1", "-1"]}
  - {guard: "x2", sign: "<", components: ["-x1", "1"]}
""",
}


def builtin_text(name: str) -> str:
    if name not in _BUILTINS:
        raise KeyError(f"unknown built-in system {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    text = _BUILTINS[name]
    if "{tau}" in text:
        tau = tau_min()
        text = text.replace('"{tau}"', f'"-{abs(tau)!r}"')
    return text.lstrip()


@functools.lru_cache(maxsize=None)
def builtin(name: str) -> SystemSpec:
    return parse_system(builtin_text(name), f"<builtin {name}>")


def resolve_system(source: str) -> SystemSpec:
    """A built-in name or a path to a YAML system file."""
    if source in _BUILTINS:
        return builtin(source)
    return load_system(source)
