"""Sweep harness: gap claims, monotonicity in c and converse-side inequalities.

Every suite returns a :class:`Certificate` whose status is decided by one
claim; anything else worth knowing (skipped points, inner > outer
crossings) is carried in ``details`` rather than folded into the status.
Results do not depend on thread scheduling: the worst case is reduced in
input order with ties going to the earliest (distribution, P, c) triple.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import bounds as B
from .bounds import Theorem, quantization_penalty
from .errors import ConfigurationError, DomainError, PreconditionError, SearchExhaustedError
from .fading import FadingDistribution, from_spec
from .parallel import pmap

__all__ = [
    "SweepGrid",
    "WorstCase",
    "Certificate",
    "default_grid",
    "gap_suite",
    "monotonicity_suite",
    "recursion_term",
    "strong_condition_check",
    "quantization_penalty",
    "run_all",
    "GAP_TOL",
    "MONOTONE_TOL",
]

GAP_TOL = 1e-9
MONOTONE_TOL = 1e-12
DEFAULT_P = tuple(np.geomspace(0.01, 1000.0, 50).tolist())
DEFAULT_C = tuple(np.geomspace(0.01, 100.0, 50).tolist())

# a strong_set / fat_tail spec without "c" is rebuilt at each grid gain
_MATCHED = ("strong_set", "fat_tail")

DEFAULT_DISTRIBUTIONS: dict[Theorem, tuple[dict, ...]] = {
    Theorem.MODE: (
        {"family": "geometric", "q": 0.5},
        {"family": "geometric", "q": 0.7},
        {"family": "geometric", "q": 0.9},
        {"family": "antipodal"},
    ),
    Theorem.STRONG: tuple({"family": "strong_set", "M": M} for M in range(3, 9)),
    Theorem.NARROW: (
        {"family": "truncated_gaussian", "center": 1.0, "halfwidth": 1.0, "sigma": 0.2},
        {"family": "truncated_gaussian", "center": 0.5, "halfwidth": 0.4, "sigma": 0.2},
        {"family": "truncated_gaussian", "center": 0.0, "halfwidth": 0.1, "sigma": 0.05},
        {"family": "truncated_gaussian", "center": 2.0, "halfwidth": 0.5, "sigma": 0.1},
    ),
}

# fixed laws for the monotonicity slices (the law must not move with c)
MONOTONE_DISTRIBUTIONS: dict[Theorem, tuple[dict, ...]] = {
    **DEFAULT_DISTRIBUTIONS,
    Theorem.STRONG: tuple({"family": "strong_set", "c": 10.0, "M": M} for M in range(3, 9)),
}


@dataclass(frozen=True)
class SweepGrid:
    p_values: tuple[float, ...]
    c_values: tuple[float, ...]
    distributions: tuple[dict, ...] = ()

    def __post_init__(self):
        p = tuple(float(v) for v in self.p_values)
        c = tuple(float(v) for v in self.c_values)
        if not p or not c:
            raise ConfigurationError("grid needs at least one P and one c value")
        if not all(v > 0 and math.isfinite(v) for v in p + c):
            raise ConfigurationError("grid values must be finite and positive")
        object.__setattr__(self, "p_values", p)
        object.__setattr__(self, "c_values", c)
        object.__setattr__(self, "distributions", tuple(dict(d) for d in self.distributions))


def default_grid(theorem: Theorem | str, monotone: bool = False) -> SweepGrid:
    th = Theorem(theorem)
    table = MONOTONE_DISTRIBUTIONS if monotone else DEFAULT_DISTRIBUTIONS
    return SweepGrid(DEFAULT_P, DEFAULT_C, table.get(th, ()))


@dataclass(frozen=True)
class WorstCase:
    P: float | None
    c: float | None
    dist: str | None
    realized: float
    allowed: float

    @property
    def margin(self) -> float:
        return self.allowed - self.realized


@dataclass(frozen=True)
class Certificate:
    claim_id: str
    status: str  # "pass" | "fail"
    worst_case: WorstCase | None
    runtime: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.worst_case is not None:
            d["worst_case"]["margin"] = self.worst_case.margin
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=_jsonable)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _dist_id(spec: dict | None) -> str | None:
    return None if spec is None else json.dumps(spec, sort_keys=True)


def _resolve(spec: dict, c: float) -> dict:
    if spec.get("family") in _MATCHED and "c" not in spec:
        return {**spec, "c": c}
    return spec


# ------------------------------------------------------------------- gaps
_NEEDS_FADING = (Theorem.MODE, Theorem.STRONG, Theorem.NARROW)
_SKIP = (PreconditionError, DomainError, SearchExhaustedError)


def _gap_point(th: Theorem, P: float, c: float, spec: dict | None, cache: dict):
    """(realized, allowed, inner, outer) or None when the point is outside the theorem."""
    fading = None
    if spec is not None:
        key = _dist_id(spec)
        if key not in cache:
            try:
                cache[key] = from_spec(spec)
            except (DomainError, ValueError) as exc:
                cache[key] = exc
        fading = cache[key]
        if isinstance(fading, Exception):
            return None
    try:
        rep = B.evaluate(th, P, c, fading)
    except _SKIP:
        return None
    return rep.gap_realized_bpcu, rep.gap_claimed_bpcu, rep.inner_bpcu, rep.outer_bpcu


def gap_suite(theorem: Theorem | str, grid: SweepGrid | None = None) -> Certificate:
    """Worst (outer − inner) over the grid against the theorem's gap constant.

    Points violating the theorem's hypotheses are skipped and counted.
    Points where the inner bound exceeds the outer bound are listed under
    ``details['sandwich_violations']``; they do not change the status.
    """
    th = Theorem(theorem)
    grid = grid or default_grid(th)
    t0 = time.perf_counter()
    if th in _NEEDS_FADING:
        if not grid.distributions:
            raise ConfigurationError(f"theorem {th.value} needs at least one distribution spec")
        specs: Sequence[dict | None] = grid.distributions
    else:
        specs = (None,)

    def run(spec):
        cache: dict = {}
        out = []
        for P in grid.p_values:
            for c in grid.c_values:
                s = _resolve(spec, c) if spec is not None else None
                out.append((P, c, s, _gap_point(th, P, c, s, cache)))
        return out

    rows = [r for block in pmap(run, specs) for r in block]
    worst = None
    skipped = 0
    crossings = []
    for P, c, s, res in rows:
        if res is None:
            skipped += 1
            continue
        realized, allowed, inner, outer = res
        if inner > outer + GAP_TOL:
            crossings.append({"P": P, "c": c, "dist": _dist_id(s), "inner": inner, "outer": outer})
        if worst is None or realized - allowed > worst.realized - worst.allowed:
            worst = WorstCase(P, c, _dist_id(s), realized, allowed)
    evaluated = len(rows) - skipped
    if evaluated == 0:
        raise ConfigurationError(f"no grid point satisfies the hypotheses of theorem {th.value}")
    ok = worst.realized <= worst.allowed + GAP_TOL
    details = {
        "evaluated": evaluated,
        "skipped": skipped,
        "sandwich_violations": len(crossings),
        "worst_sandwich": max(crossings, key=lambda d: d["inner"] - d["outer"]) if crossings else None,
    }
    return Certificate(f"gap.{th.value}", "pass" if ok else "fail", worst, time.perf_counter() - t0, details)


# ------------------------------------------------------------ monotonicity
def _outer_fn(th: Theorem, fading: FadingDistribution | None) -> Callable[[float, float], float]:
    if th is Theorem.ANTIPODAL or th is Theorem.SYMMETRIC:
        return lambda P, c: B.outer_antipodal(P, c)[0]
    if th is Theorem.CCDP:
        return lambda P, c: B.ccdp_outer(P, c)[0]
    if th is Theorem.FAT_TAIL:
        return B.outer_fat
    if fading is None:
        raise ConfigurationError(f"theorem {th.value} needs a distribution spec")
    if th is Theorem.MODE:
        return lambda P, c: B.outer_mode(P, c, fading)[0]
    if th is Theorem.STRONG:
        return lambda P, c: B.outer_strong(P, c, fading)[0]
    return lambda P, c: B.outer_narrow(P, c, fading).rate


def monotonicity_suite(evaluator_id: Theorem | str, grid: SweepGrid | None = None) -> Certificate:
    """Check that an outer bound does not increase along c on every P slice.

    The worst case reports the largest increase between consecutive valid
    gains; ``allowed`` is the tolerance.
    """
    th = Theorem(evaluator_id)
    grid = grid or default_grid(th, monotone=True)
    t0 = time.perf_counter()
    specs: Sequence[dict | None] = grid.distributions if th in _NEEDS_FADING else (None,)
    if not specs:
        raise ConfigurationError(f"theorem {th.value} needs at least one distribution spec")
    cs = sorted(grid.c_values)

    def run(spec):
        fn = _outer_fn(th, from_spec(spec) if spec is not None else None)
        out = []
        for P in grid.p_values:
            prev = None
            for c in cs:
                try:
                    v = fn(P, c)
                except _SKIP:
                    continue
                if prev is not None:
                    out.append((P, prev[0], c, spec, v - prev[1]))
                prev = (c, v)
        return out

    steps = [s for block in pmap(run, specs) for s in block]
    worst = None
    for P, c_lo, c_hi, spec, rise in steps:
        if worst is None or rise > worst.realized:
            worst = WorstCase(P, c_hi, _dist_id(spec), rise, MONOTONE_TOL)
    ok = worst is None or worst.realized <= MONOTONE_TOL
    details = {"steps": len(steps), "violations": sum(1 for s in steps if s[4] > MONOTONE_TOL)}
    return Certificate(f"monotone.{th.value}", "pass" if ok else "fail", worst, time.perf_counter() - t0, details)


# ------------------------------------------------- converse-side arithmetic
def recursion_term(deltas: Sequence[float], c: float, i: int) -> float:
    """½log2(2·(c²Σ_{j<=i}Δ_j² + 2) / (c²Σ_{j<i}Δ_j² + 2)), with 1-based ``i``."""
    d = np.asarray(deltas, dtype=float)
    if not 1 <= i <= d.size:
        raise DomainError(f"index {i} is outside 1..{d.size}")
    if np.any(d <= 0):
        raise DomainError("deltas must be positive")
    c2 = c * c
    s_prev = math.fsum(d[: i - 1] ** 2)
    s_cur = s_prev + d[i - 1] ** 2
    return 0.5 * math.log2(2 * (c2 * s_cur + 2) / (c2 * s_prev + 2))


def strong_condition_check(
    fading: FadingDistribution, c: float, tol: float = 1e-9, enforce_threshold: bool = False
) -> Certificate:
    """Per-index check of the entropy increments used by the strong-fading converse.

    With Δ_i = α_{i+1} − α_1, the converse needs every conditional-entropy
    increment to be at least ½log2(c²) − ½ bits. In variance form that is

        2·(c²Σ_{j<=i}Δ_j² + 2) / (c²Σ_{j<i}Δ_j² + 2) >= c²/2,

    evaluated here through :func:`recursion_term`. Hypothesis failures
    (threshold α_1 >= 1/(c−1), spacing α_{i+1} >= c·α_i) are reported per
    index alongside the margins instead of being raised. The threshold
    only affects the status when ``enforce_threshold`` is set; unit-variance
    strong sets fall below it once M >= 3.
    """
    t0 = time.perf_counter()
    if not c > 2:
        raise DomainError(f"strong fading needs c > 2, got {c}")
    if not fading.is_discrete or len(fading.points) < 2:
        raise DomainError("strong fading needs a discrete law with at least two points")
    a = np.sort(fading.values)
    hypotheses = []
    if a[0] < 1 / (c - 1) - tol:
        hypotheses.append({"index": 0, "condition": "threshold", "value": float(a[0]), "needed": 1 / (c - 1)})
    for k in range(len(a) - 1):
        if a[k + 1] < c * a[k] - tol:
            hypotheses.append({"index": k + 1, "condition": "spacing", "value": float(a[k + 1]), "needed": float(c * a[k])})
    deltas = a[1:] - a[0]
    need = 0.5 * math.log2(c * c / 2)
    margins = [recursion_term(deltas, c, i) - need for i in range(1, len(deltas) + 1)]
    failing = [i + 1 for i, m in enumerate(margins) if m < -tol]
    k = int(np.argmin(margins))
    worst = WorstCase(None, float(c), _dist_id(fading.to_spec()), need, need + margins[k])
    # realized = needed increment, allowed = available increment
    blocking = [h for h in hypotheses if enforce_threshold or h["condition"] != "threshold"]
    ok = not failing and not blocking
    details = {"margins": margins, "failing_indices": failing, "hypothesis_failures": hypotheses}
    return Certificate("strong.increments", "pass" if ok else "fail", worst, time.perf_counter() - t0, details)


# ---------------------------------------------------------------- bundles
GAP_THEOREMS = (Theorem.ANTIPODAL, Theorem.MODE, Theorem.STRONG, Theorem.NARROW, Theorem.FAT_TAIL, Theorem.CCDP)
MONOTONE_THEOREMS = (
    Theorem.ANTIPODAL,
    Theorem.CCDP,
    Theorem.MODE,
    Theorem.STRONG,
    Theorem.NARROW,
    Theorem.FAT_TAIL,
)


def run_all(p_values: Sequence[float] | None = None, c_values: Sequence[float] | None = None) -> list[Certificate]:
    """Every gap and monotonicity certificate on the default (or given) axes."""
    certs = []
    for th in GAP_THEOREMS:
        g = default_grid(th)
        if p_values is not None or c_values is not None:
            g = SweepGrid(p_values or g.p_values, c_values or g.c_values, g.distributions)
        certs.append(gap_suite(th, g))
    for th in MONOTONE_THEOREMS:
        g = default_grid(th, monotone=True)
        if p_values is not None or c_values is not None:
            g = SweepGrid(p_values or g.p_values, c_values or g.c_values, g.distributions)
        certs.append(monotonicity_suite(th, g))
    return certs
