"""JSON scenario files: validation with field paths, construction, round-trip serialization."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import cusco as cm
from . import geometry as geo
from . import lyapunov as ly
from . import operators as op
from .integrator import DEFAULT_H, DEFAULT_T, DistanceTo, FixedSelection, IntegratorConfig, LyapunovValue, Steered
from .invariance import CriterionVariant
from .sampling import Sampler

PSD_TOL = 1e-9


class ScenarioError(ValueError):
    """Validation failure; ``errors`` holds (field path, message) pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


class _Fail(Exception):
    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message


def _num(v, path: str) -> float:
    if isinstance(v, bool):
        raise _Fail(path, "expected a number")
    if isinstance(v, (int, float)):
        f = float(v)
    elif isinstance(v, str):
        try:
            f = float(v)
        except ValueError:
            raise _Fail(path, f"not a decimal number: {v!r}") from None
    else:
        raise _Fail(path, "expected a number")
    if math.isnan(f):
        raise _Fail(path, "NaN not allowed")
    return f


def _finite(v, path: str) -> float:
    f = _num(v, path)
    if not math.isfinite(f):
        raise _Fail(path, "must be finite")
    return f


def _vec(v, path: str, n: int | None) -> np.ndarray:
    if not isinstance(v, list):
        raise _Fail(path, "expected a list of numbers")
    out = np.array([_finite(e, f"{path}[{i}]") for i, e in enumerate(v)])
    if n is not None and out.size != n:
        raise _Fail(path, f"dimension mismatch: expected {n}, got {out.size}")
    return out


def _mat(v, path: str, rows: int | None, cols: int | None) -> np.ndarray:
    if not isinstance(v, list) or not v:
        raise _Fail(path, "expected a nonempty list of rows")
    out = np.array([_vec(r, f"{path}[{i}]", cols) for i, r in enumerate(v)])
    if rows is not None and out.shape[0] != rows:
        raise _Fail(path, f"dimension mismatch: expected {rows} rows, got {out.shape[0]}")
    return out


def _obj(v, path: str) -> dict:
    if not isinstance(v, dict):
        raise _Fail(path, "expected an object")
    return v


def _kind(d: dict, path: str) -> str:
    k = d.get("kind")
    if not isinstance(k, str):
        raise _Fail(f"{path}.kind", "missing variant tag")
    return k


def _req(d: dict, key: str, path: str):
    if key not in d:
        raise _Fail(f"{path}.{key}", "required field missing")
    return d[key]


def _psd(Q: np.ndarray, path: str) -> None:
    if not np.allclose(Q, Q.T, atol=PSD_TOL, rtol=0.0):
        raise _Fail(path, "not symmetric")
    if np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() < -PSD_TOL:
        raise _Fail(path, "not PSD")


# -- builders -----------------------------------------------------------------

def parse_body(d, path: str, n: int) -> geo.ConvexBody:
    d = _obj(d, path)
    kind = _kind(d, path)
    try:
        if kind == "Ball":
            c = _vec(_req(d, "center", path), f"{path}.center", n)
            r = _finite(_req(d, "radius", path), f"{path}.radius")
            if r < 0:
                raise _Fail(f"{path}.radius", "radius must be ≥ 0")
            return geo.Ball(c, r)
        if kind == "HPolytope":
            N = _mat(_req(d, "normals", path), f"{path}.normals", None, n)
            c = _vec(_req(d, "offsets", path), f"{path}.offsets", N.shape[0])
            if np.any(np.linalg.norm(N, axis=1) == 0):
                raise _Fail(f"{path}.normals", "normals must be nonzero")
            return geo.HPolytope(N, c)
        if kind == "Box":
            lo = _vec(_req(d, "lo", path), f"{path}.lo", n)
            hi = _vec(_req(d, "hi", path), f"{path}.hi", n)
            if np.any(lo > hi):
                raise _Fail(path, "lo must not exceed hi")
            return geo.box(lo, hi)
        if kind == "VPolytope":
            return geo.VPolytope(_mat(_req(d, "vertices", path), f"{path}.vertices", None, n))
        if kind == "Cone":
            gens = d.get("generators", [])
            G = _mat(gens, f"{path}.generators", None, n) if gens else np.zeros((0, n))
            return geo.Cone(G, n)
        if kind == "Translate":
            base = parse_body(_req(d, "base", path), f"{path}.base", n)
            return geo.Translate(base, _vec(_req(d, "shift", path), f"{path}.shift", n))
        if kind == "Intersection":
            parts = _req(d, "parts", path)
            if not isinstance(parts, list) or not parts:
                raise _Fail(f"{path}.parts", "expected a nonempty list")
            return geo.Intersection([parse_body(p, f"{path}.parts[{i}]", n) for i, p in enumerate(parts)])
    except geo.EmptySetError as exc:
        raise _Fail(path, str(exc)) from None
    raise _Fail(f"{path}.kind", f"unknown variant tag {kind!r}")


def parse_set(d, path: str, n: int) -> geo.ClosedSet:
    d = _obj(d, path)
    if _kind(d, path) == "ClosedSet":
        pieces = _req(d, "pieces", path)
        if not isinstance(pieces, list) or not pieces:
            raise _Fail(f"{path}.pieces", "expected a nonempty list")
        return geo.ClosedSet([parse_body(p, f"{path}.pieces[{i}]", n) for i, p in enumerate(pieces)])
    return geo.ClosedSet(parse_body(d, path, n))


def parse_operator(d, path: str, n: int) -> op.MonotoneOperator:
    d = _obj(d, path)
    kind = _kind(d, path)
    if kind == "NormalConeOf":
        return op.NormalConeOf(parse_body(_req(d, "body", path), f"{path}.body", n))
    if kind == "QuadraticGradient":
        Q = _mat(_req(d, "Q", path), f"{path}.Q", n, n)
        _psd(Q, f"{path}.Q")
        b = _vec(d["b"], f"{path}.b", n) if "b" in d else None
        return op.QuadraticGradient(Q, b)
    if kind == "LinearMonotone":
        M = _mat(_req(d, "M", path), f"{path}.M", n, n)
        _psd(M + M.T, f"{path}.M")
        return op.LinearMonotone(M)
    if kind == "ScaledNormSubdiff":
        w = _finite(_req(d, "weight", path), f"{path}.weight")
        if w <= 0:
            raise _Fail(f"{path}.weight", "weight must be > 0")
        return op.ScaledNormSubdiff(w, n)
    if kind == "Zero":
        return op.QuadraticGradient(np.zeros((n, n)))
    if kind == "SumWithNormalCone":
        smooth = parse_operator(_req(d, "smooth", path), f"{path}.smooth", n)
        if not isinstance(smooth, (op.QuadraticGradient, op.LinearMonotone)):
            raise _Fail(f"{path}.smooth", "must be QuadraticGradient or LinearMonotone")
        return op.SumWithNormalCone(smooth, parse_body(_req(d, "body", path), f"{path}.body", n))
    raise _Fail(f"{path}.kind", f"unknown variant tag {kind!r}")


def _affine(d, path: str, n: int) -> cm.AffineMap:
    if isinstance(d, list):
        return cm.AffineMap.constant(_vec(d, path, n), n)
    d = _obj(d, path)
    C = _mat(_req(d, "C", path), f"{path}.C", n, n)
    return cm.AffineMap(C, _vec(_req(d, "d", path), f"{path}.d", n))


def _radius(d, path: str, n: int) -> cm.RadiusMap:
    if not isinstance(d, dict):
        r = _finite(d, path)
        if r < 0:
            raise _Fail(path, "radius must be ≥ 0")
        return cm.RadiusMap(r, dim=n)
    r0 = _finite(_req(d, "r0", path), f"{path}.r0")
    g = _vec(d["g"], f"{path}.g", n) if "g" in d else np.zeros(n)
    if r0 < 0 and not np.any(g):
        raise _Fail(f"{path}.r0", "radius must be ≥ 0")
    return cm.RadiusMap(r0, g)


def _declared_L(d: dict, path: str):
    if d.get("L") is None:
        return None
    L = _finite(d["L"], f"{path}.L")
    if L < 0:
        raise _Fail(f"{path}.L", "Lipschitz constant must be ≥ 0")
    return L


def parse_cusco(d, path: str, n: int) -> cm.CuscoMap:
    d = _obj(d, path)
    kind = _kind(d, path)
    if kind == "Singleton":
        src = d["f"] if "f" in d else _req(d, "value", path)
        return cm.Singleton(_affine(src, f"{path}.f", n), _declared_L(d, path))
    if kind == "BallValued":
        return cm.BallValued(_affine(_req(d, "center", path), f"{path}.center", n),
                             _radius(_req(d, "radius", path), f"{path}.radius", n), _declared_L(d, path))
    if kind == "PolytopeValued":
        maps = _req(d, "vertex_maps", path)
        if not isinstance(maps, list) or not maps:
            raise _Fail(f"{path}.vertex_maps", "expected a nonempty list")
        return cm.PolytopeValued([_affine(m, f"{path}.vertex_maps[{i}]", n) for i, m in enumerate(maps)],
                                 _declared_L(d, path))
    raise _Fail(f"{path}.kind", f"unknown variant tag {kind!r}")


def parse_scalar(d, path: str, n: int) -> ly.ScalarFn:
    d = _obj(d, path)
    kind = _kind(d, path)
    if kind == "ConvexQuadratic":
        Q = _mat(_req(d, "Q", path), f"{path}.Q", n, n)
        _psd(Q, f"{path}.Q")
        b = _vec(d["b"], f"{path}.b", n) if "b" in d else None
        return ly.ConvexQuadratic(Q, b, _finite(d.get("c", 0.0), f"{path}.c"))
    if kind == "Zero":
        return ly.ConvexQuadratic.zero(n)
    if kind == "NormPower":
        p = _finite(_req(d, "p", path), f"{path}.p")
        if p not in (1.0, 2.0):
            raise _Fail(f"{path}.p", "p must be 1 or 2")
        w = _finite(d.get("weight", 1.0), f"{path}.weight")
        if w < 0:
            raise _Fail(f"{path}.weight", "weight must be ≥ 0")
        return ly.NormPower(int(p), w, n)
    if kind == "MaxAffine":
        G = _mat(_req(d, "gradients", path), f"{path}.gradients", None, n)
        c = _vec(_req(d, "offsets", path), f"{path}.offsets", G.shape[0])
        return ly.MaxAffine(G, c)
    if kind == "IndicatorPlus":
        body = parse_body(_req(d, "body", path), f"{path}.body", n)
        smooth = parse_scalar(d["smooth"], f"{path}.smooth", n) if "smooth" in d else None
        if smooth is not None and not isinstance(smooth, ly.ConvexQuadratic):
            raise _Fail(f"{path}.smooth", "must be ConvexQuadratic")
        return ly.IndicatorPlus(body, smooth)
    raise _Fail(f"{path}.kind", f"unknown variant tag {kind!r}")


def parse_pair(d, path: str, n: int) -> ly.LyapunovPair:
    d = _obj(d, path)
    V = parse_scalar(_req(d, "V", path), f"{path}.V", n)
    W = parse_scalar(d.get("W", {"kind": "Zero"}), f"{path}.W", n)
    a = _finite(d.get("a", 0.0), f"{path}.a")
    if a < 0:
        raise _Fail(f"{path}.a", "a must be ≥ 0")
    return ly.LyapunovPair(V, W, a)


# -- scenario -----------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    dimension: int
    operator: op.MonotoneOperator
    cusco: cm.CuscoMap
    set: geo.ClosedSet | None = None
    lyapunov: ly.LyapunovPair | None = None
    h: float = DEFAULT_H
    T: float = DEFAULT_T
    x0: np.ndarray | None = None
    mode: dict = field(default_factory=lambda: {"kind": "FixedSelection"})
    refine: bool = False
    sampler: dict = field(default_factory=dict)
    check: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    seed: int = 0

    def integrator_config(self, h: float | None = None) -> IntegratorConfig:
        h = self.h if h is None else h
        kind = self.mode.get("kind", "FixedSelection")
        if kind == "FixedSelection":
            v0 = self.mode.get("v0")
            anchor = self.mode.get("anchor")
            mode = FixedSelection(None if v0 is None else np.array(v0, dtype=float),
                                  None if anchor is None else np.array(anchor, dtype=float))
        else:
            target = self.mode.get("objective", "distance")
            if target == "distance":
                if self.set is None:
                    raise ScenarioError([("integrator.mode.objective", "distance objective needs a set")])
                mode = Steered(DistanceTo(self.set))
            else:
                if self.lyapunov is None:
                    raise ScenarioError([("integrator.mode.objective", "lyapunov objective needs a pair")])
                mode = Steered(LyapunovValue(self.lyapunov.V))
        return IntegratorConfig(h, self.T, mode, self.refine)

    def make_sampler(self, seed: int | None = None) -> Sampler:
        return Sampler(int(self.sampler.get("n_points", 200)), float(self.sampler.get("jitter", 0.0)),
                       self.seed if seed is None else seed)

    def initial_state(self) -> np.ndarray:
        if self.x0 is not None:
            return self.x0
        return self.operator.project_to_domain(np.zeros(self.dimension))

    def to_dict(self) -> dict:
        integ = {"h": self.h, "T": self.T, "mode": self.mode, "refine": self.refine}
        if self.x0 is not None:
            integ["x0"] = self.x0.tolist()
        out = {"name": self.name, "dimension": self.dimension, "operator": self.operator.to_dict(),
               "cusco": self.cusco.to_dict(), "integrator": integ, "sampler": self.sampler,
               "seed": self.seed}
        if self.set is not None:
            out["set"] = self.set.to_dict()
        if self.lyapunov is not None:
            out["lyapunov"] = self.lyapunov.to_dict()
        if self.check:
            out["check"] = self.check
        if self.sweep:
            out["sweep"] = self.sweep
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, Scenario) and serialize(self) == serialize(other)


def _section(errors: list, fn: Callable, *args):
    try:
        return fn(*args)
    except _Fail as exc:
        errors.append((exc.path, exc.message))
    except (geo.GeometryError, op.OperatorError, cm.CuscoError, ly.LyapunovError) as exc:
        errors.append((args[1] if len(args) > 1 else "", str(exc)))
    return None


def _parse_mode(d, path: str, n: int) -> dict:
    d = _obj(d, path)
    kind = _kind(d, path)
    if kind == "FixedSelection":
        out: dict[str, Any] = {"kind": kind}
        if d.get("v0") is not None:
            out["v0"] = _vec(d["v0"], f"{path}.v0", n).tolist()
        if d.get("anchor") is not None:
            out["anchor"] = _vec(d["anchor"], f"{path}.anchor", n).tolist()
        return out
    if kind == "Steered":
        obj = d.get("objective", "distance")
        if obj not in ("distance", "lyapunov"):
            raise _Fail(f"{path}.objective", "must be 'distance' or 'lyapunov'")
        return {"kind": kind, "objective": obj}
    raise _Fail(f"{path}.kind", f"unknown variant tag {kind!r}")


def _parse_integrator(d, path: str, n: int) -> dict:
    d = _obj(d, path)
    h = _finite(d.get("h", DEFAULT_H), f"{path}.h")
    T = _finite(d.get("T", DEFAULT_T), f"{path}.T")
    if h <= 0:
        raise _Fail(f"{path}.h", "h must be > 0")
    if T <= 0:
        raise _Fail(f"{path}.T", "T must be > 0")
    if h > T:
        raise _Fail(f"{path}.h", "h must not exceed T")
    if T / h > 1e7:
        raise _Fail(f"{path}.h", "T/h exceeds 1e7")
    x0 = _vec(d["x0"], f"{path}.x0", n) if d.get("x0") is not None else None
    mode = _parse_mode(d.get("mode", {"kind": "FixedSelection"}), f"{path}.mode", n)
    refine = d.get("refine", False)
    if not isinstance(refine, bool):
        raise _Fail(f"{path}.refine", "expected true or false")
    return {"h": h, "T": T, "x0": x0, "mode": mode, "refine": refine}


def _parse_sampler(d, path: str, n: int) -> dict:
    d = _obj(d, path)
    out: dict[str, Any] = {}
    if "n_points" in d:
        k = _finite(d["n_points"], f"{path}.n_points")
        if k < 1 or k != int(k):
            raise _Fail(f"{path}.n_points", "must be a positive integer")
        out["n_points"] = int(k)
    if "jitter" in d:
        j = _finite(d["jitter"], f"{path}.jitter")
        if not 0 <= j <= 1:
            raise _Fail(f"{path}.jitter", "must be in [0, 1]")
        out["jitter"] = j
    if "m" in d:
        m = _finite(d["m"], f"{path}.m")
        if m < 0:
            raise _Fail(f"{path}.m", "must be ≥ 0")
        out["m"] = m
    if "region" in d:
        parse_body(d["region"], f"{path}.region", n)
        out["region"] = d["region"]
    return out


def _parse_check(d, path: str) -> dict:
    d = _obj(d, path)
    out: dict[str, Any] = {}
    for key, parse in (("variant", CriterionVariant.parse), ("lyapunov_variant", ly.lyapunov_variant)):
        if key in d:
            if not isinstance(d[key], str):
                raise _Fail(f"{path}.{key}", "expected a string")
            try:
                parse(d[key])
            except ValueError:
                raise _Fail(f"{path}.{key}", f"unknown variant tag {d[key]!r}") from None
            out[key] = d[key]
    if "tol" in d:
        t = _finite(d["tol"], f"{path}.tol")
        if t < 0:
            raise _Fail(f"{path}.tol", "must be ≥ 0")
        out["tol"] = t
    return out


def _parse_sweep(d, path: str) -> dict:
    d = _obj(d, path)
    param = d.get("param", "h")
    if param not in ("h", "T"):
        raise _Fail(f"{path}.param", "must be 'h' or 'T'")
    vals = d.get("values", [1e-2, 1e-3, 1e-4])
    if not isinstance(vals, list) or not vals:
        raise _Fail(f"{path}.values", "expected a nonempty list")
    values = [_finite(v, f"{path}.values[{i}]") for i, v in enumerate(vals)]
    if any(v <= 0 for v in values):
        raise _Fail(f"{path}.values", "values must be > 0")
    return {"param": param, "values": values}


def _seed(value) -> int:
    """Exact 64-bit seed from an int, an integral float or a decimal string."""
    if isinstance(value, bool):
        seed = None
    elif isinstance(value, int):
        seed = value
    elif isinstance(value, float) and value.is_integer():
        seed = int(value)
    elif isinstance(value, str) and value.strip().isdigit():
        seed = int(value.strip())
    else:
        seed = None
    if seed is None or not 0 <= seed < 2**64:
        raise _Fail("seed", "must be an integer in [0, 2^64)")
    return seed


def from_dict(raw: dict) -> Scenario:
    """Validate and build a scenario, collecting every section's first error."""
    errors: list[tuple[str, str]] = []
    if not isinstance(raw, dict):
        raise ScenarioError([("", "expected a JSON object")])
    name = raw.get("name", "scenario")
    if not isinstance(name, str):
        errors.append(("name", "expected a string"))
        name = "scenario"
    n = None
    try:
        nf = _finite(_req(raw, "dimension", ""), "dimension")
        if nf != int(nf) or not 1 <= nf <= geo.MAX_DIM:
            raise _Fail("dimension", f"must be an integer in 1..{geo.MAX_DIM}")
        n = int(nf)
    except _Fail as exc:
        errors.append((exc.path.lstrip("."), exc.message))
        raise ScenarioError(errors) from None
    A = _section(errors, parse_operator, raw["operator"], "operator", n) if "operator" in raw else None
    F = _section(errors, parse_cusco, raw["cusco"], "cusco", n) if "cusco" in raw else None
    if "operator" not in raw:
        errors.append(("operator", "required field missing"))
    if "cusco" not in raw:
        errors.append(("cusco", "required field missing"))
    S = _section(errors, parse_set, raw["set"], "set", n) if raw.get("set") is not None else None
    pair = _section(errors, parse_pair, raw["lyapunov"], "lyapunov", n) \
        if raw.get("lyapunov") is not None else None
    integ = _section(errors, _parse_integrator, raw.get("integrator", {}), "integrator", n)
    smp = _section(errors, _parse_sampler, raw.get("sampler", {}), "sampler", n)
    chk = _section(errors, _parse_check, raw.get("check", {}), "check")
    swp = _section(errors, _parse_sweep, raw["sweep"], "sweep") if "sweep" in raw else {}
    try:
        seed = _seed(raw.get("seed", 0))
    except _Fail as exc:
        errors.append((exc.path, exc.message))
    if errors:
        raise ScenarioError(errors)
    return Scenario(name, n, A, F, S, pair, integ["h"], integ["T"], integ["x0"], integ["mode"],
                    integ["refine"], smp, chk, swp or {}, seed)


def load_scenario(path) -> Scenario:
    """Read and validate a UTF-8 JSON scenario file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError([("", f"cannot read {p}: {exc.strerror}")]) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([("", f"invalid JSON: {exc.msg} at line {exc.lineno}")]) from None
    return from_dict(raw)


def serialize(s: Scenario) -> str:
    from .reporting import dumps

    return dumps(s.to_dict())
