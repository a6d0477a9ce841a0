"""Closed-form inner and outer bounds, gap constants and regime dispatch.

All rates are in bits per channel use and are clamped to be nonnegative.
Outer bounds that are piecewise in the gain ``c`` are tightened with the
fact that capacity cannot increase with ``c``: the value returned at ``c``
is the smallest value of the raw expression over gains ``c' <= c`` at which
the bound applies. Fading laws passed to the mode, strong and TIN evaluators
are taken to be in canonical (unit-variance) form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import ClaimViolation, DomainError, PreconditionError, SearchExhaustedError
from .fading import FadingDistribution, canonicalize, fat_tail_mean, make_fat_tail

ALPHA_GRID = np.linspace(0.0, 1.0, 101)
CONDITION_TOL = 1e-12
# knots for the monotone tightening of the narrow-fading outer bound
NARROW_KNOTS = np.union1d(np.geomspace(1.0, 1e4, 1201), np.geomspace(0.01, 100.0, 50))
NARROW_KNOTS = NARROW_KNOTS[NARROW_KNOTS > 1.0]
M_FAT_MAX = 10**6


class Theorem(str, enum.Enum):
    ANTIPODAL = "antipodal"
    MODE = "mode"
    STRONG = "strong"
    SYMMETRIC = "symmetric"
    NARROW = "narrow"
    FAT_TAIL = "fat_tail"
    CCDP = "ccdp"


def _log2(x):
    return np.log2(x)


def _clamp(x: float) -> float:
    return max(float(x), 0.0)


def _check_pc(P: float, c: float) -> None:
    if not P >= 0:
        raise DomainError(f"power must be >= 0, got {P}")
    if not c > 0:
        raise DomainError(f"gain must be > 0, got {c}")


# ---------------------------------------------------------------- antipodal
def outer_antipodal(P: float, c: float) -> tuple[float, int]:
    _check_pc(P, c)
    c2 = c * c
    if c2 <= 1:
        return _clamp(0.5 * _log2(P + 1) + 0.5), 0
    if c2 >= P + 1:
        return _clamp(0.25 * _log2(P + 1) - 0.5), 2
    return _clamp(0.5 * _log2(P + c2 + 1) - 0.25 * _log2(c2) - 0.5), 1


def inner_antipodal(P: float, c: float) -> tuple[float, int]:
    _check_pc(P, c)
    c2 = c * c
    if c2 <= 1:
        return _clamp(0.5 * _log2(1 + P) - 0.5), 0
    if c2 >= P + 1:
        return _clamp(0.25 * _log2(1 + P) - 1), 2
    return _clamp(0.5 * _log2(1 + P + c2) - 0.25 * _log2(c2) - 1), 1


def outer_symmetric_continuous(P: float, c: float) -> float:
    """Outer bound for any symmetric continuous fading law."""
    return outer_antipodal(P, c)[0]


def ccdp_outer(P: float, c: float) -> tuple[float, int]:
    """Outer bound for the two-user carbon-copy channel with independent states."""
    _check_pc(P, c)
    c2 = c * c
    if c2 <= 2:
        return _clamp(0.5 * _log2(1 + P) + 0.5), 0
    if c2 >= 2 * (P + 1):
        return _clamp(0.25 * _log2(P + 1)), 2
    return _clamp(0.5 * _log2((P + c2 / 2 + 1) / c2) + 0.25 * _log2(c2 / 2) + 0.5), 1


# ------------------------------------------------------- superposition + DPC
def _tin_terms(P, c, a, alpha):
    """½log2(1 + αP/(1 + c²a² + ᾱP)) over an α × a grid."""
    alpha = np.asarray(alpha, dtype=float)[..., None]
    pbar = (1 - alpha) * P
    return 0.5 * _log2(1 + alpha * P / (1 + c * c * a * a + pbar))


def _pas_bound(P, a, w, m, alpha, q_m):
    """Lower bound on the pre-coded layer; −inf when a zero support point ≠ m exists."""
    alpha = np.asarray(alpha, dtype=float)
    off = np.abs(a - m) > 0
    off &= w > 0
    if np.any(off & (a == 0)):
        return np.full(alpha.shape, -np.inf)
    ao, wo = a[off], w[off]
    penalty = float(np.sum(wo * 0.5 * _log2((ao - m) ** 2 / ao**2 + 1)))
    return q_m / 2 * _log2(1 + (1 - alpha) * P) - penalty


def _pas_exact(P, c, a, w, m, alpha):
    """Rate of the layer pre-coded against c·m·S with the others treated as noise."""
    p = (1 - np.asarray(alpha, dtype=float))[..., None] * P
    c2 = c * c
    num = (1 + c2 * a * a + p) * (1 + p)
    den = p * c2 * (a - m) ** 2 + p + c2 * a * a + 1
    return np.sum(w * 0.5 * _log2(num / den), axis=-1)


def _superposition(P, c, fading, m, alpha, pas="bound", n_nodes=256):
    a, w = fading.nodes(n_nodes)
    tin = np.sum(w * _tin_terms(P, c, a, alpha), axis=-1)
    if pas == "exact":
        layer = _pas_exact(P, c, a, w, m, alpha)
    elif pas == "bound":
        layer = _pas_bound(P, a, w, m, alpha, fading.prob_at(m))
    else:
        raise DomainError(f"unknown pas mode {pas!r}")
    return tin + np.maximum(layer, 0.0)


def inner_superposition_alpha(
    P: float, c: float, fading: FadingDistribution, m: float, alpha: float, pas: str = "bound"
) -> float:
    """Achievable rate of the superposition scheme at power split ``alpha``.

    The base layer (power αP) treats c·A·S as noise; the top layer is
    pre-coded against c·m·S. ``pas="bound"`` uses the closed-form lower
    bound on the top layer, ``pas="exact"`` evaluates it directly.
    """
    _check_pc(P, c)
    if not 0 <= alpha <= 1:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    return _clamp(_superposition(P, c, fading, m, np.array([alpha]), pas)[0])


def _maximize_alpha(fn) -> tuple[float, float]:
    """Maximise a vectorised fn(alpha) on [0, 1]: grid, then bounded refinement."""
    vals = fn(ALPHA_GRID)
    i = int(np.argmax(vals))
    best_a, best_v = float(ALPHA_GRID[i]), float(vals[i])
    lo, hi = ALPHA_GRID[max(i - 1, 0)], ALPHA_GRID[min(i + 1, len(ALPHA_GRID) - 1)]
    res = optimize.minimize_scalar(lambda x: -float(fn(np.array([x]))[0]), bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
    if res.success and -res.fun > best_v:
        best_a, best_v = float(res.x), float(-res.fun)
    return best_v, best_a


def _mode_point(fading: FadingDistribution, m: float | None) -> tuple[float, float]:
    if m is None:
        m, q = fading.mode()
    else:
        q = fading.prob_at(m)
    return m, q


def inner_mode(P: float, c: float, fading: FadingDistribution, m: float | None = None) -> tuple[float, float]:
    """Superposition inner bound with the closed-form power split; returns (rate, α)."""
    _check_pc(P, c)
    m, q = _mode_point(fading, m)
    if q < 0.5:
        raise PreconditionError(f"mode probability {q} is below 1/2", measured=q)
    qb = 1.0 - q
    if qb <= 0 or P == 0:
        pbar = P
    else:
        pbar = max(min(q / qb * c * c * (1 + fading.mean**2) - 1, P), 0.0)
    alpha_star = 1.0 - pbar / P if P > 0 else 0.0
    alpha_star = min(max(alpha_star, 0.0), 1.0)
    rates = _superposition(P, c, fading, m, np.array([alpha_star, 1.0]))
    k = int(np.argmax(rates))
    return _clamp(rates[k]), (alpha_star, 1.0)[k]


def inner_strong(P: float, c: float, fading: FadingDistribution, m: float | None = None) -> tuple[float, float, float]:
    """Best superposition rate over the pre-coding target m and the split α.

    Candidates for m are the fading mean and every support point, unless
    ``m`` pins the target. Returns (rate, m, α).
    """
    _check_pc(P, c)
    targets = (fading.mean, *fading.values) if m is None else (float(m),)
    coarse = [float(np.max(_superposition(P, c, fading, m, ALPHA_GRID))) for m in targets]
    m = float(targets[int(np.argmax(coarse))])
    v, a = _maximize_alpha(lambda al: _superposition(P, c, fading, m, al))
    return _clamp(v), m, a


# --------------------------------------------------------------- gap terms
@dataclass(frozen=True)
class GapTerms:
    g_m_outer: float
    g_m_prime: float
    g_m_inner: float
    g_s: float
    g_m_narrow: float


def _conditional_off_mode(fading: FadingDistribution, m: float, fn) -> float:
    """E[fn(A) | A ≠ m]; 0 when the conditioning event is empty."""
    a, w = fading.nodes()
    off = (np.abs(a - m) > 0) & (w > 0)
    mass = float(w[off].sum())
    if mass <= 0:
        return 0.0
    with np.errstate(divide="ignore"):
        vals = fn(a[off])
    return float(np.sum(w[off] * vals) / mass)


def g_m_outer(fading: FadingDistribution, m: float) -> float:
    mu2 = 1 + fading.mean**2
    return 0.5 * _conditional_off_mode(fading, m, lambda a: _log2(mu2 / (a - m) ** 2)) + 3


def g_m_prime(fading: FadingDistribution, m: float) -> float:
    mu2 = 1 + fading.mean**2
    return 0.5 * _conditional_off_mode(fading, m, lambda a: _log2(mu2 * (1 / a**2 + 1 / (a - m) ** 2))) + 3


def g_m_inner(fading: FadingDistribution, m: float) -> float:
    return 0.5 * _conditional_off_mode(fading, m, lambda a: _log2((a - m) ** 2 / a**2 + 1)) + 1


def g_s(fading: FadingDistribution, kappa_spacing: float = 1.0) -> float:
    if not kappa_spacing > 0:
        raise DomainError("kappa_spacing must be positive")
    return float(0.5 * _log2(kappa_spacing * (1 + fading.mean**2)) + 0.5)


def g_m_narrow(mu: float, q_m: float) -> float:
    return float((1 - q_m) / 2 * _log2(1 + mu * mu) + 4)


def gap_terms_mode(fading: FadingDistribution, m: float | None = None, c: float | None = None) -> GapTerms:
    """All gap constants for ``fading`` around the point ``m`` (default: the mode).

    The constants do not depend on the gain; ``c`` is accepted for symmetry
    with the rate evaluators.
    """
    m, q = _mode_point(fading, m)
    return GapTerms(
        g_m_outer=g_m_outer(fading, m),
        g_m_prime=g_m_prime(fading, m),
        g_m_inner=g_m_inner(fading, m),
        g_s=g_s(fading),
        g_m_narrow=g_m_narrow(fading.mean, q),
    )


def gap_lem3(fading: FadingDistribution, m: float, delta: float, c: float | None = None) -> tuple[float, float]:
    """Separation-based upper bounds on G_m and G_m′.

    Every support point a ≠ m must satisfy |a| ≥ delta and |a − m| ≥ delta.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    tol = 1e-12 * max(1.0, delta)
    for i, a in enumerate(fading.values if fading.is_discrete else ()):
        if a == m:
            continue
        if abs(a) < delta - tol or abs(a - m) < delta - tol:
            raise PreconditionError(f"support point {a} is closer than {delta} to 0 or to m={m}", index=i, measured=float(a))
    q = fading.prob_at(m)
    bound = (1 - q) / 2 * _log2((1 + fading.mean**2) / delta**2) + 3
    exact = g_m_outer(fading, m)
    if exact > bound + 1e-9:
        raise ClaimViolation(f"G_m = {exact} exceeds its separation bound {bound}")
    return float(bound), float(bound + 0.5)


# --------------------------------------------------------------------- mode
def _mode_outer(P, t, q, g, tighten=True):
    """Three-regime outer bound at effective interference power t = c²(1+μ²)."""
    qb = 1 - q
    f0 = 0.5 * _log2(1 + P) + 1
    if qb >= q * t:
        return _clamp(f0), 0
    if q * t > qb * (P + 1):
        f2 = q / 2 * _log2(1 + P) + g
        return _clamp(min(f0, f2) if tighten else f2), 2
    f1 = 0.5 * _log2(1 + P) - qb / 2 * _log2(t) + g
    return _clamp(min(f0, f1) if tighten else f1), 1


def outer_mode(P: float, c: float, fading: FadingDistribution, m: float | None = None) -> tuple[float, int]:
    _check_pc(P, c)
    m, q = _mode_point(fading, m)
    if q < 0.5:
        raise PreconditionError(f"mode probability {q} is below 1/2", measured=q)
    t = c * c * (1 + fading.mean**2)
    return _mode_outer(P, t, q, g_m_outer(fading, m))


# ------------------------------------------------------------------- strong
def check_strong_set(fading: FadingDistribution, c: float, kappa_spacing: float = 1.0, enforce_threshold: bool = False) -> None:
    """Raise :class:`PreconditionError` unless ``fading`` is a valid strong set for ``c``."""
    if not c > 2:
        raise PreconditionError(f"strong fading needs c > 2, got {c}", measured=c)
    if not fading.is_discrete:
        raise PreconditionError("strong fading needs a discrete law")
    p = fading.probs
    if np.any(np.abs(p - 1.0 / len(p)) > CONDITION_TOL):
        raise PreconditionError("strong fading needs a uniform law")
    a = np.sort(fading.values)
    if enforce_threshold and a[0] < 1 / (c - 1) - 1e-9:
        raise PreconditionError(f"smallest point {a[0]} is below 1/(c-1)", index=0, measured=float(a[0]))
    for i in range(len(a) - 1):
        need = kappa_spacing * c * a[i]
        if a[i + 1] < need - CONDITION_TOL * max(1.0, abs(need)):
            raise PreconditionError(f"point {i + 1} is {a[i + 1]}, needs >= {need}", index=i + 1, measured=float(a[i + 1] / a[i]))


def outer_strong(
    P: float,
    c: float,
    fading: FadingDistribution,
    kappa_spacing: float = 1.0,
    enforce_threshold: bool = False,
    check: bool = True,
) -> tuple[float, int]:
    _check_pc(P, c)
    if check:
        check_strong_set(fading, c, kappa_spacing, enforce_threshold)
    M = len(fading.points)
    gs = g_s(fading, kappa_spacing)
    t = (1 + fading.mean**2) * c * c
    f0 = 0.5 * _log2(1 + P) + gs
    if t <= 1:
        return _clamp(f0), 0
    if t > (M - 1) * (P + 1):
        return _clamp(min(f0, _log2(1 + P) / (2 * M) + gs)), 2
    f1 = 0.5 * _log2(1 + P + t) - (M - 1) / (2 * M) * _log2(t) + gs
    return _clamp(min(f0, f1)), 1


# ------------------------------------------------------------------- narrow
@dataclass(frozen=True)
class NarrowResult:
    rate: float
    regime: int
    q_m: float
    g_m: float


def _narrow_mass(fading: FadingDistribution, m: float, width) -> np.ndarray:
    width = np.asarray(width, dtype=float)
    return fading.cdf(m + width) - fading.cdf(m - width)


def narrow_condition(fading: FadingDistribution, c: float, m: float | None = None, kappa: float = 1.0) -> float:
    """Pr[|A − m| <= κ/c], with m defaulting to the mean."""
    if fading.is_discrete:
        raise DomainError("narrow fading needs a continuous law")
    m = fading.mean if m is None else m
    return float(_narrow_mass(fading, m, kappa / c))


def outer_narrow(P: float, c: float, fading: FadingDistribution, m: float | None = None, kappa: float = 1.0) -> NarrowResult:
    """Outer bound for continuous fading concentrated around ``m``.

    The law is normalised first; the window probability is invariant under
    that rescaling. The value is tightened over the fixed knot grid of gains
    below ``c`` at which the window condition also holds.
    """
    _check_pc(P, c)
    if not c > 1:
        raise PreconditionError(f"narrow fading needs c > 1, got {c}", measured=c)
    m = fading.mean if m is None else m
    q = narrow_condition(fading, c, m, kappa)
    if q < 0.5:
        raise PreconditionError(f"window probability {q} is below 1/2", measured=q)
    c_can, can = canonicalize(c, fading)
    scale = c_can / c
    mu = can.mean
    g = g_m_narrow(mu, q)
    rate, regime = _mode_outer(P, c_can**2 * (1 + mu * mu), q, g, tighten=False)
    knots = NARROW_KNOTS[NARROW_KNOTS < c]
    if knots.size:
        qk = _narrow_mass(fading, m, kappa / knots)
        ok = qk >= 0.5
        for k, qq in zip(knots[ok], qk[ok]):
            r, _ = _mode_outer(P, (k * scale) ** 2 * (1 + mu * mu), qq, g_m_narrow(mu, qq), tighten=False)
            rate = min(rate, r)
    return NarrowResult(rate=_clamp(rate), regime=regime, q_m=q, g_m=g)


def inner_narrow(P: float, c: float, fading: FadingDistribution, m: float | None = None) -> tuple[float, float]:
    """Superposition rate pre-coding against the window centre; returns (rate, α)."""
    _check_pc(P, c)
    m = fading.mean if m is None else m
    c_can, can = canonicalize(c, fading)
    m_can = m * c / c_can
    v, a = _maximize_alpha(lambda al: _superposition(P, c_can, can, m_can, al, pas="exact"))
    return _clamp(v), a


def quantization_penalty(c: float, step: float) -> float:
    """Entropy allowance ½log2(c²Δ² + 2) for quantizing the fading with step Δ."""
    if not (c > 0 and step > 0):
        raise DomainError("c and step must be positive")
    return 0.5 * math.log2(c * c * step * step + 2)


# ---------------------------------------------------------------- fat tail
def outer_fat(P: float, c: float) -> float:
    _check_pc(P, c)
    if not c > 2:
        raise DomainError(f"fat-tail bound needs c > 2, got {c}")
    return _clamp(0.5 * _log2(1 + P / (1 + c * c)) + 2)


def _fat_conditions(P: float, c: float, M: np.ndarray):
    c0 = math.floor(c)
    L = M * math.log(c0)
    mu = 2 * (-np.expm1(-L)) / np.sqrt(2 * L * (-np.expm1(-2 * L)) - 4 * np.expm1(-L) ** 2)
    return (mu < 1) & (c * c * (1 + mu * mu) <= (M - 1) * (P + 1)) & (M >= 2 * math.log2(c))


def choose_M_fat(P: float, c: float) -> int:
    """Smallest M >= 3 meeting the mean, regime and resolution conditions.

    Each condition is monotone in M, so the first admissible M is found by
    doubling followed by bisection.
    """
    _check_pc(P, c)
    if not c > 2:
        raise DomainError(f"fat-tail construction needs c > 2, got {c}")
    ok = lambda M: bool(_fat_conditions(P, c, np.array([float(M)]))[0])
    if ok(3):
        return 3
    lo, hi = 3, 4
    while not ok(hi):
        if hi >= M_FAT_MAX:
            raise SearchExhaustedError(f"no M <= {M_FAT_MAX} satisfies the fat-tail conditions for P={P}, c={c}")
        lo, hi = hi, min(2 * hi, M_FAT_MAX)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


def fat_tail_fading(P: float, c: float) -> FadingDistribution:
    M = choose_M_fat(P, c)
    return make_fat_tail(math.floor(c), M)


# --------------------------------------------------------------------- TIN
def inner_tin_exact(P: float, c: float, fading: FadingDistribution) -> float:
    """½E[log2(1 + P/(1 + c²A²))]: the state-as-noise rate."""
    _check_pc(P, c)
    a, w = fading.nodes()
    return _clamp(np.sum(w * 0.5 * _log2(1 + P / (1 + c * c * a * a))))


def inner_tin_closed(P: float, c: float, mu_A: float, literal: bool = False) -> float:
    """Jensen lower bound ½log2(1 + P/(1 + c²(1+μ²))) on the TIN rate.

    ``literal`` switches to the 1 + c(1+μ) denominator, kept for audit.
    """
    _check_pc(P, c)
    noise = 1 + c * (1 + mu_A) if literal else 1 + c * c * (1 + mu_A * mu_A)
    return _clamp(0.5 * _log2(1 + P / noise))


# ------------------------------------------------------------------ reports
@dataclass(frozen=True)
class BoundReport:
    theorem: Theorem
    regime: int
    inner_bpcu: float
    outer_bpcu: float
    gap_claimed_bpcu: float
    gap_realized_bpcu: float
    inner_source: str = "theorem"
    extras: dict = field(default_factory=dict, compare=False)


def evaluate(
    theorem: Theorem | str,
    P: float,
    c: float,
    fading: FadingDistribution | None = None,
    m: float | None = None,
) -> BoundReport:
    """Inner bound, outer bound and gap constant of one theorem at (P, c).

    ``fading`` is required for the mode, strong and narrow theorems; the
    fat-tail theorem builds its own law. The symmetric-law bound has no
    matching inner bound, and the carbon-copy reference only implies one
    (outer − 1).
    """
    th = Theorem(theorem)
    extras: dict = {}
    source = "theorem"
    if th is Theorem.ANTIPODAL:
        outer, regime = outer_antipodal(P, c)
        inner, _ = inner_antipodal(P, c)
        claimed = 1.0
    elif th is Theorem.SYMMETRIC:
        outer, regime = outer_antipodal(P, c)
        inner, claimed, source = 0.0, math.inf, "none"
    elif th is Theorem.CCDP:
        outer, regime = ccdp_outer(P, c)
        inner, claimed, source = max(outer - 1.0, 0.0), 1.0, "implied"
    elif th is Theorem.FAT_TAIL:
        M = choose_M_fat(P, c)
        fad = make_fat_tail(math.floor(c), M)
        outer, regime = outer_fat(P, c), 0
        inner = inner_tin_exact(P, c, fad)
        claimed = 3.0
        extras = {"M": M, "mu_A": fad.mean}
    else:
        if fading is None:
            raise DomainError(f"theorem {th.value} needs a fading distribution")
        if th is Theorem.MODE:
            m, _ = _mode_point(fading, m)
            outer, regime = outer_mode(P, c, fading, m)
            inner, alpha = inner_mode(P, c, fading, m)
            claimed = g_m_prime(fading, m)
            extras = {"m": m, "alpha": alpha}
        elif th is Theorem.STRONG:
            outer, regime = outer_strong(P, c, fading)
            inner, m_used, alpha = inner_strong(P, c, fading)
            claimed = g_s(fading) + 1
            extras = {"m": m_used, "alpha": alpha, "g_s": claimed - 1}
        else:
            res = outer_narrow(P, c, fading, m)
            outer, regime = res.rate, res.regime
            inner, alpha = inner_narrow(P, c, fading, m)
            claimed = res.g_m + 0.5
            extras = {"q_m": res.q_m, "g_m": res.g_m, "alpha": alpha}
    return BoundReport(
        theorem=th,
        regime=regime,
        inner_bpcu=float(inner),
        outer_bpcu=float(outer),
        gap_claimed_bpcu=float(claimed),
        gap_realized_bpcu=float(outer - inner),
        inner_source=source,
        extras=extras,
    )
