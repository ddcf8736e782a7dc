"""Mamdani fuzzy controller for valve-flow deltas.

Triangular memberships, min/max inference, centroid defuzzification.
Inputs are temperature error (degC) and its rate (degC/s); the output is an
incremental valve-flow change per control step.  The aggregated output set
is piecewise linear, so the centroid is computed by exact segment-wise
integration rather than grid quadrature; tests check it against an
independent high-resolution quadrature oracle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import yaml

log = logging.getLogger(__name__)


class FuzzyError(ValueError):
    pass


@dataclass(frozen=True)
class Triangle:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a <= self.b <= self.c):
            raise FuzzyError(f"triangle needs a <= b <= c, got {self}")

    def degree(self, x: float) -> float:
        if x < self.a or x > self.c:
            return 0.0
        if x == self.b:
            return 1.0
        if x < self.b:
            return (x - self.a) / (self.b - self.a)
        return (self.c - x) / (self.c - self.b)


@dataclass(frozen=True)
class FuzzyVariable:
    name: str
    lo: float
    hi: float
    terms: tuple  # tuple of (label, Triangle)

    def __post_init__(self):
        if self.lo >= self.hi:
            raise FuzzyError(f"{self.name}: empty universe [{self.lo}, {self.hi}]")

    def term(self, label: str) -> Triangle:
        for lbl, tri in self.terms:
            if lbl == label:
                return tri
        raise FuzzyError(f"{self.name}: unknown label {label!r}")

    def labels(self) -> list[str]:
        return [lbl for lbl, _ in self.terms]

    def covers_universe(self, samples: int = 257) -> bool:
        for i in range(samples):
            x = self.lo + (self.hi - self.lo) * i / (samples - 1)
            if all(tri.degree(x) == 0.0 for _, tri in self.terms):
                return False
        return True


@dataclass(frozen=True)
class Rule:
    error: str
    error_rate: str
    output: str


@dataclass(frozen=True)
class RuleBase:
    error: FuzzyVariable
    error_rate: FuzzyVariable
    output: FuzzyVariable
    rules: tuple

    def __post_init__(self):
        for r in self.rules:
            self.error.term(r.error)
            self.error_rate.term(r.error_rate)
            self.output.term(r.output)
        for var in (self.error, self.error_rate, self.output):
            if not var.covers_universe():
                raise FuzzyError(f"partition of {var.name!r} does not cover its universe")


@dataclass
class AggregatedSet:
    """Max-aggregation of consequents clipped at their rule strengths."""

    lo: float
    hi: float
    clipped: list = field(default_factory=list)  # (Triangle, strength)

    def membership(self, x: float) -> float:
        return max((min(h, tri.degree(x)) for tri, h in self.clipped), default=0.0)


def fuzzify(x: float, mf: Triangle) -> float:
    """Piecewise-linear triangular membership degree."""
    return mf.degree(x)


def infer(rulebase: RuleBase, e: float, de: float) -> AggregatedSet:
    """Min-activation of each rule, consequents clipped, max-aggregated."""
    out = AggregatedSet(rulebase.output.lo, rulebase.output.hi)
    for rule in rulebase.rules:
        strength = min(
            fuzzify(e, rulebase.error.term(rule.error)),
            fuzzify(de, rulebase.error_rate.term(rule.error_rate)),
        )
        if strength > 0.0:
            out.clipped.append((rulebase.output.term(rule.output), strength))
    return out


# ---------------------------------------------------------------------------
# exact centroid of the piecewise-linear aggregated set


def _line_on(tri: Triangle, h: float, x0: float, x1: float) -> tuple[float, float]:
    """Linear piece (slope, intercept) of min(h, tri) on [x0, x1].

    Valid only when no breakpoint of the clipped triangle lies strictly
    inside the interval; callers guarantee that.
    """
    xm = 0.5 * (x0 + x1)
    if xm <= tri.a or xm >= tri.c:
        return 0.0, 0.0
    if xm < tri.b:
        s = 1.0 / (tri.b - tri.a)
        if s * (xm - tri.a) >= h:
            return 0.0, h
        return s, -s * tri.a
    if xm > tri.b:
        s = 1.0 / (tri.c - tri.b)
        if s * (tri.c - xm) >= h:
            return 0.0, h
        return -s, s * tri.c
    return 0.0, min(h, 1.0)


def defuzzify_centroid(aggregated: AggregatedSet) -> float:
    """Area centroid of the aggregated set; 0.0 for an identically-zero set."""
    active = [(tri, h) for tri, h in aggregated.clipped if h > 0.0]
    if not active:
        return 0.0

    lo, hi = aggregated.lo, aggregated.hi
    xs = {lo, hi}
    for tri, h in active:
        for x in (tri.a, tri.b, tri.c):
            if lo < x < hi:
                xs.add(x)
        if tri.b > tri.a:
            xr = tri.a + h * (tri.b - tri.a)
            if lo < xr < hi:
                xs.add(xr)
        if tri.c > tri.b:
            xf = tri.c - h * (tri.c - tri.b)
            if lo < xf < hi:
                xs.add(xf)
    base = sorted(xs)

    points: list[float] = []
    for x0, x1 in zip(base, base[1:]):
        points.append(x0)
        lines = [_line_on(tri, h, x0, x1) for tri, h in active]
        # crossings of the candidate lines mark where the max envelope switches
        for i in range(len(lines)):
            m1, b1 = lines[i]
            for j in range(i + 1, len(lines)):
                m2, b2 = lines[j]
                if m1 != m2:
                    xc = (b2 - b1) / (m1 - m2)
                    if x0 < xc < x1:
                        points.append(xc)
    points.append(base[-1])
    points = sorted(set(points))

    area = 0.0
    moment = 0.0
    for x0, x1 in zip(points, points[1:]):
        if x1 <= x0:
            continue
        lines = [_line_on(tri, h, x0, x1) for tri, h in active]
        xm = 0.5 * (x0 + x1)
        m, b = max(lines, key=lambda mb: mb[0] * xm + mb[1])
        mu0, mu1 = m * x0 + b, m * x1 + b
        w = x1 - x0
        area += 0.5 * (mu0 + mu1) * w
        moment += w * (x0 * (2.0 * mu0 + mu1) + x1 * (mu0 + 2.0 * mu1)) / 6.0

    if area <= 0.0:
        return 0.0
    return moment / area


def control_step(T: float, T_prev: float, setpoint: float, rulebase: RuleBase, dt: float) -> float:
    """Crisp valve-flow delta for the current temperature sample."""
    if dt <= 0:
        raise FuzzyError(f"dt must be positive, got {dt}")
    if not all(math.isfinite(v) for v in (T, T_prev, setpoint)):
        log.warning("non-finite control input (T=%r, T_prev=%r); holding valve", T, T_prev)
        return 0.0
    e = min(rulebase.error.hi, max(rulebase.error.lo, T - setpoint))
    de = min(rulebase.error_rate.hi, max(rulebase.error_rate.lo, (T - T_prev) / dt))
    du = defuzzify_centroid(infer(rulebase, e, de))
    return min(rulebase.output.hi, max(rulebase.output.lo, du))


# ---------------------------------------------------------------------------
# shipped rulebase and document form

_LABELS = ("NL", "NS", "Z", "PS", "PL")


def _partition(name: str, span: float) -> FuzzyVariable:
    half = span / 2.0
    centers = (-span, -half, 0.0, half, span)
    terms = tuple(
        (lbl, Triangle(c - half, c, c + half)) for lbl, c in zip(_LABELS, centers)
    )
    return FuzzyVariable(name, -span, span, terms)


def default_rulebase(e_span: float = 10.0, de_span: float = 1.0, du_span: float = 0.02) -> RuleBase:
    """Symmetric 25-rule table: hotter / heating -> open the valve further."""
    rules = []
    for i in range(5):
        for j in range(5):
            k = min(4, max(0, i + j - 2))
            rules.append(Rule(_LABELS[i], _LABELS[j], _LABELS[k]))
    return RuleBase(
        error=_partition("error", e_span),
        error_rate=_partition("error_rate", de_span),
        output=_partition("valve_delta", du_span),
        rules=tuple(rules),
    )


def _var_to_doc(var: FuzzyVariable) -> dict:
    return {
        "lo": var.lo,
        "hi": var.hi,
        "terms": {lbl: [tri.a, tri.b, tri.c] for lbl, tri in var.terms},
    }


def rulebase_to_doc(rb: RuleBase) -> dict:
    return {
        "error": _var_to_doc(rb.error),
        "error_rate": _var_to_doc(rb.error_rate),
        "output": _var_to_doc(rb.output),
        "rules": [
            {"error": r.error, "error_rate": r.error_rate, "output": r.output}
            for r in rb.rules
        ],
    }


def _var_from_doc(name: str, doc: dict) -> FuzzyVariable:
    terms = tuple((lbl, Triangle(*abc)) for lbl, abc in doc["terms"].items())
    return FuzzyVariable(name, float(doc["lo"]), float(doc["hi"]), terms)


def rulebase_from_doc(doc: dict) -> RuleBase:
    return RuleBase(
        error=_var_from_doc("error", doc["error"]),
        error_rate=_var_from_doc("error_rate", doc["error_rate"]),
        output=_var_from_doc("valve_delta", doc["output"]),
        rules=tuple(
            Rule(r["error"], r["error_rate"], r["output"]) for r in doc["rules"]
        ),
    )


def load_rulebase(path) -> RuleBase:
    with open(path) as f:
        return rulebase_from_doc(yaml.safe_load(f))
