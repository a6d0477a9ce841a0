"""Fading distributions: construction, moments, normalization and quantization.

Every distribution is an immutable :class:`FadingDistribution` carrying its
moments, computed once at construction. Discrete laws keep an explicit
``(value, prob)`` table; continuous laws are described by a support and a
built-in density id, and expose closed-form CDFs and partial first moments so
that quantizers never have to integrate numerically cell by cell.
"""

from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special

from .errors import ConstructionError, DegenerateError, DomainError, SpecError

SIMPLEX_TOL = 1e-12
UNIT_VARIANCE_TOL = 1e-9
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
QUAD_LIMIT = 400
# probability cells lighter than this are dropped by the quantizers
MIN_CELL_MASS = 1e-14
# a gaussian is treated as living on mean +/- this many std for gridding
GAUSS_SPAN = 12.0
LOG_PANEL = 2.0
LOG_PANEL_ORDER = 32


class Family(str, enum.Enum):
    DISCRETE = "discrete"
    LOG_UNIFORM = "log_uniform"
    TRUNCATED_DENSITY = "truncated_density"


@dataclass(frozen=True)
class FadingDistribution:
    """The law of the fading variable A.

    ``points`` is populated iff the family is discrete. ``support_lo`` and
    ``support_hi`` are populated for the continuous families; ``density_id``
    and ``params`` identify the density for ``TRUNCATED_DENSITY`` (one of
    ``uniform``, ``truncated_gaussian``, ``gaussian``).
    """

    family: Family
    points: tuple[tuple[float, float], ...] = ()
    support_lo: float | None = None
    support_hi: float | None = None
    density_id: str | None = None
    params: tuple[tuple[str, float], ...] = ()
    mean: float = 0.0
    second_moment: float = 0.0
    variance: float = 0.0
    spec: str = field(default="", compare=False, repr=False)

    # ------------------------------------------------------------------ basics
    @property
    def is_discrete(self) -> bool:
        return self.family is Family.DISCRETE

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.points], dtype=float)

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.points], dtype=float)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def param(self, name: str) -> float:
        return dict(self.params)[name]

    def to_spec(self) -> dict:
        """JSON-ready spec this distribution was built from."""
        return json.loads(self.spec)

    def prob_at(self, m: float, tol: float = 1e-12) -> float:
        """P[A = m]; zero for every continuous family."""
        if not self.is_discrete:
            return 0.0
        return float(sum(p for v, p in self.points if abs(v - m) <= tol))

    def mode(self) -> tuple[float, float]:
        """Most likely support point and its probability (discrete only)."""
        if not self.is_discrete:
            raise DomainError("mode() is defined for discrete fading only")
        v, p = max(self.points, key=lambda vp: vp[1])
        return v, p

    # ------------------------------------------------------- continuous pieces
    def _log_span(self) -> tuple[float, float, float]:
        """(log lo, log hi, width) of a log-uniform support.

        Log endpoints are authoritative: ``support_lo`` may underflow to 0
        for very wide supports.
        """
        prm = dict(self.params)
        return prm["log_lo"], prm["log_hi"], prm["log_hi"] - prm["log_lo"]

    def _gauss_geometry(self):
        prm = dict(self.params)
        if self.density_id == "gaussian":
            return prm["mean"], prm["std"], -math.inf, math.inf
        c, hw, s = prm["center"], prm["halfwidth"], prm["sigma"]
        return c, s, (-hw) / s, hw / s

    def _gauss_z(self, x):
        loc, s, _, _ = self._gauss_geometry()
        return (np.asarray(x, dtype=float) - loc) / s

    def _gauss_norm(self):
        _, _, a, b = self._gauss_geometry()
        return _ndtr_diff(a, b)

    def pdf(self, a):
        """Density at ``a`` (continuous families only)."""
        a = np.asarray(a, dtype=float)
        lo, hi = self.support_lo, self.support_hi
        inside = (a >= lo) & (a <= hi)
        if self.family is Family.LOG_UNIFORM:
            with np.errstate(divide="ignore"):
                out = 1.0 / (a * self._log_span()[2])
        elif self.density_id == "uniform":
            out = np.full_like(a, 1.0 / (hi - lo))
        elif self.density_id in ("truncated_gaussian", "gaussian"):
            _, s, _, _ = self._gauss_geometry()
            z = self._gauss_z(a)
            out = np.exp(-0.5 * z * z) / (s * math.sqrt(2 * math.pi) * self._gauss_norm())
        else:
            raise DomainError(f"pdf undefined for family {self.family.value}")
        return np.where(inside, out, 0.0)

    def cdf(self, x):
        """P[A <= x]."""
        x = np.asarray(x, dtype=float)
        if self.is_discrete:
            v, p = self.values, self.probs
            return np.array([p[v <= xi].sum() for xi in np.atleast_1d(x)]).reshape(x.shape)
        lo, hi = self.support_lo, self.support_hi
        xc = np.clip(x, lo, hi)
        if self.family is Family.LOG_UNIFORM:
            llo, _, L = self._log_span()
            with np.errstate(divide="ignore"):
                out = np.clip((np.log(xc) - llo) / L, 0.0, 1.0)
        elif self.density_id == "uniform":
            out = (xc - lo) / (hi - lo)
        else:
            _, _, a, _ = self._gauss_geometry()
            out = _ndtr_diff(a, self._gauss_z(xc)) / self._gauss_norm()
        return out

    def mass(self, x: float, y: float) -> float:
        """P[x <= A < y]; closed form for every family."""
        if self.is_discrete:
            v, p = self.values, self.probs
            return float(p[(v >= x) & (v < y)].sum())
        lo, hi = self.support_lo, self.support_hi
        x, y = max(x, lo), min(y, hi)
        if y <= x:
            return 0.0
        if self.family is Family.LOG_UNIFORM:
            llo, lhi, L = self._log_span()
            lx = llo if x <= lo else math.log(x)
            return (min(math.log(y), lhi) - lx) / L
        if self.density_id == "uniform":
            return (y - x) / (hi - lo)
        return float(_ndtr_diff(self._gauss_z(x), self._gauss_z(y)) / self._gauss_norm())

    def partial_mean(self, x: float, y: float) -> float:
        """E[A ; x <= A < y], closed form for every family."""
        if self.is_discrete:
            v, p = self.values, self.probs
            sel = (v >= x) & (v < y)
            return float((v[sel] * p[sel]).sum())
        lo, hi = self.support_lo, self.support_hi
        x, y = max(x, lo), min(y, hi)
        if y <= x:
            return 0.0
        if self.family is Family.LOG_UNIFORM:
            return (y - x) / self._log_span()[2]
        if self.density_id == "uniform":
            return (y * y - x * x) / (2 * (hi - lo))
        loc, s, _, _ = self._gauss_geometry()
        zx, zy = float(self._gauss_z(x)), float(self._gauss_z(y))
        phi = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) if math.isfinite(z) else 0.0
        return (loc * float(_ndtr_diff(zx, zy)) - s * (phi(zy) - phi(zx))) / self._gauss_norm()

    def conditional_mean(self, x: float, y: float) -> float:
        """E[A | x <= A < y]; the result is clipped into the cell."""
        m = self.mass(x, y)
        if m <= 0:
            raise DomainError(f"cell [{x}, {y}) has zero probability")
        return min(max(self.partial_mean(x, y) / m, x), y)

    def grid_support(self) -> tuple[float, float]:
        """Finite interval holding all but a negligible part of the mass."""
        if self.is_discrete:
            v = self.values
            return float(v.min()), float(v.max())
        if self.density_id == "gaussian":
            loc, s, _, _ = self._gauss_geometry()
            return loc - GAUSS_SPAN * s, loc + GAUSS_SPAN * s
        return self.support_lo, self.support_hi

    # ------------------------------------------------------------ expectations
    def integrate(self, fn: Callable, lo: float = -math.inf, hi: float = math.inf) -> float:
        """∫ fn(a) dP_A(a) over [lo, hi).

        Exact summation for discrete laws; adaptive quadrature otherwise. The
        log-uniform density is integrated in log-coordinates, where it is flat.
        """
        if self.is_discrete:
            v, p = self.values, self.probs
            sel = (v >= lo) & (v < hi)
            if not sel.any():
                return 0.0
            return float(np.sum(p[sel] * np.asarray(fn(v[sel]), dtype=float)))
        slo, shi = self.support_lo, self.support_hi
        a, b = max(lo, slo), min(hi, shi)
        if b <= a:
            return 0.0
        if self.family is Family.LOG_UNIFORM:
            # flat density in u = log a; panels keep quad from missing
            # features on very wide supports
            llo, lhi, L = self._log_span()
            ua = llo if a <= slo else math.log(a)
            ub = lhi if b >= shi else math.log(b)
            edges = np.linspace(ua, ub, max(2, math.ceil((ub - ua) / (2 * LOG_PANEL)) + 1))
            g = lambda u: float(fn(math.exp(u))) / L
            return math.fsum(_quad(g, x, y) for x, y in zip(edges[:-1], edges[1:]))
        g = lambda t: float(fn(t)) * float(self.pdf(t))
        if self.density_id in ("gaussian", "truncated_gaussian"):
            loc = self._gauss_geometry()[0]
            if self.density_id == "gaussian":
                _, s, _, _ = self._gauss_geometry()
                a = max(a, loc - 40 * s)
                b = min(b, loc + 40 * s)
            if a < loc < b:
                return _quad(g, a, loc) + _quad(g, loc, b)
        return _quad(g, a, b)

    def expect(self, fn: Callable) -> float:
        return self.integrate(fn)

    def nodes(self, n: int = 256) -> tuple[np.ndarray, np.ndarray]:
        """Support points and weights for vectorised expectations.

        Discrete laws return their table. Continuous laws return an ``n``-point
        Gauss rule: Legendre on the support (in log-coordinates for the
        log-uniform law) or probabilists' Hermite for the Gaussian.
        """
        return _nodes(self, n)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` i.i.d. samples by inverse-CDF or table lookup."""
        if self.is_discrete:
            idx = rng.choice(len(self.points), size=n, p=self.probs)
            return self.values[idx]
        u = rng.random(n)
        lo, hi = self.support_lo, self.support_hi
        if self.family is Family.LOG_UNIFORM:
            llo, _, L = self._log_span()
            return np.exp(llo + u * L)
        if self.density_id == "uniform":
            return lo + u * (hi - lo)
        loc, s, a, b = self._gauss_geometry()
        if self.density_id == "gaussian":
            return loc + s * rng.standard_normal(n)
        pa, pb = special.ndtr(a), special.ndtr(b)
        return loc + s * special.ndtri(pa + u * (pb - pa))

    # ---------------------------------------------------------------- scaling
    def scaled(self, k: float) -> "FadingDistribution":
        """Law of k·A for k > 0."""
        if not k > 0:
            raise DomainError("scale factor must be positive")
        if self.is_discrete:
            return _discrete(
                [(v * k, p) for v, p in self.points],
                spec={"family": "discrete", "points": [[v * k, p] for v, p in self.points]},
            )
        moments = dict(mean=self.mean * k, second_moment=self.second_moment * k * k, variance=self.variance * k * k)
        if self.family is Family.LOG_UNIFORM:
            llo, lhi, _ = self._log_span()
            return _log_uniform(llo + math.log(k), lhi + math.log(k))
        prm = dict(self.params)
        if self.density_id == "uniform":
            lo, hi = self.support_lo * k, self.support_hi * k
            return replace(self, support_lo=lo, support_hi=hi, spec=_dump({"family": "uniform", "lo": lo, "hi": hi}), **moments)
        if self.density_id == "gaussian":
            mu, sd = prm["mean"] * k, prm["std"] * k
            return replace(self, params=(("mean", mu), ("std", sd)), spec=_dump({"family": "gaussian", "mean": mu, "std": sd}), **moments)
        c, hw, s = prm["center"] * k, prm["halfwidth"] * k, prm["sigma"] * k
        return replace(
            self,
            support_lo=c - hw,
            support_hi=c + hw,
            params=(("center", c), ("halfwidth", hw), ("sigma", s)),
            spec=_dump({"family": "truncated_gaussian", "center": c, "halfwidth": hw, "sigma": s}),
            **moments,
        )


@functools.lru_cache(maxsize=None)
def _gauss_rule(kind: str, n: int):
    return special.roots_hermitenorm(n) if kind == "hermite" else leggauss(n)


@functools.lru_cache(maxsize=256)
def _nodes(dist: "FadingDistribution", n: int):
    if dist.is_discrete:
        return dist.values, dist.probs
    if dist.density_id == "gaussian":
        x, w = _gauss_rule("hermite", n)
        loc, s, _, _ = dist._gauss_geometry()
        return loc + s * x, w / w.sum()
    lo, hi = dist.support_lo, dist.support_hi
    if dist.family is Family.LOG_UNIFORM:
        # composite rule in log-coordinates, panels of width <= LOG_PANEL
        llo, _, L = dist._log_span()
        panels = max(1, math.ceil(L / LOG_PANEL))
        xp, wp = _gauss_rule("legendre", LOG_PANEL_ORDER)
        h = L / panels
        u = llo + h * (np.arange(panels)[:, None] + 0.5 * (xp + 1))
        wt = np.broadcast_to(wp, u.shape).ravel()
        return np.exp(u.ravel()), wt / wt.sum()
    x, w = _gauss_rule("legendre", n)
    a = lo + 0.5 * (x + 1) * (hi - lo)
    wt = w * dist.pdf(a) * 0.5 * (hi - lo)
    return a, wt / wt.sum()


def _quad(g, a, b):
    val, _ = integrate.quad(g, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    return val


def _ndtr_diff(a, b):
    """Φ(b) − Φ(a) without cancellation in the upper tail."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0
    return np.where(upper, special.ndtr(-a) - special.ndtr(-b), special.ndtr(b) - special.ndtr(a))


def _dump(spec: dict) -> str:
    return json.dumps(spec, sort_keys=True)


# ---------------------------------------------------------------------- moments
def moments(fading: FadingDistribution) -> tuple[float, float, float]:
    """(mean, second moment, variance) of the fading law."""
    return fading.mean, fading.second_moment, fading.variance


def _discrete_moments(points):
    mean = sum(v * p for v, p in points)
    second = sum(v * v * p for v, p in points)
    var = sum((v - mean) ** 2 * p for v, p in points)
    return mean, second, var


def _continuous_moments(dist: FadingDistribution):
    mean = dist.integrate(lambda a: a)
    second = dist.integrate(lambda a: a * a)
    var = dist.integrate(lambda a: (a - mean) ** 2)
    for name, val in (("mean", mean), ("second moment", second), ("variance", var)):
        if not math.isfinite(val):
            raise ConstructionError(f"{name} is not finite for {dist.spec}")
    return mean, second, var


def _discrete(points, spec: dict) -> FadingDistribution:
    pts = [(float(v), float(p)) for v, p in points]
    if not pts:
        raise ConstructionError("empty support")
    if any(p < 0 or not math.isfinite(p) or not math.isfinite(v) for v, p in pts):
        raise ConstructionError("probabilities must be finite and nonnegative")
    total = math.fsum(p for _, p in pts)
    if abs(total - 1.0) > SIMPLEX_TOL:
        raise ConstructionError(f"probabilities sum to {total!r}, not 1")
    pts = [(v, p) for v, p in pts if p > 0]
    mean, second, var = _discrete_moments(pts)
    return FadingDistribution(
        family=Family.DISCRETE,
        points=tuple(pts),
        mean=mean,
        second_moment=second,
        variance=var,
        spec=_dump(spec),
    )


def _continuous(family, lo, hi, density_id, params, spec) -> FadingDistribution:
    shell = FadingDistribution(
        family=family,
        support_lo=float(lo),
        support_hi=float(hi),
        density_id=density_id,
        params=tuple((k, float(v)) for k, v in params),
        spec=_dump(spec),
    )
    mean, second, var = _continuous_moments(shell)
    return replace(shell, mean=mean, second_moment=second, variance=var)


# ----------------------------------------------------------------- constructors
def make_discrete(points: Sequence[float], probs: Sequence[float] | None = None) -> FadingDistribution:
    """Discrete law from values and probabilities.

    ``points`` may also be a sequence of ``(value, prob)`` pairs with ``probs``
    omitted.
    """
    if probs is None:
        pairs = [(v, p) for v, p in points]
    else:
        if len(points) != len(probs):
            raise ConstructionError("points and probs differ in length")
        pairs = list(zip(points, probs))
    return _discrete(pairs, {"family": "discrete", "points": [[float(v), float(p)] for v, p in pairs]})


def make_point_mass(m: float) -> FadingDistribution:
    return _discrete([(m, 1.0)], {"family": "point_mass", "m": float(m)})


def make_antipodal() -> FadingDistribution:
    """Uniform on {-1, +1}."""
    return _discrete([(-1.0, 0.5), (1.0, 0.5)], {"family": "antipodal"})


def make_geometric(q: float) -> FadingDistribution:
    """P[A = kΔ] = (1−q)^k q with Δ = q/√(1−q), so that Var[A] = 1.

    The tail is cut at the first K whose remaining mass is below 1e-12 *and*
    whose folded second-moment perturbation keeps the variance within 1e-12;
    the cut mass is folded onto the last point.
    """
    if not (0.5 <= q < 1):
        raise DomainError(f"geometric parameter q={q} outside [0.5, 1)")
    qbar = 1.0 - q
    step = q / math.sqrt(qbar)
    probs = [q]
    k = 0
    while True:
        tail = qbar ** (k + 1)
        if tail < 1e-12:
            pts = [(i * step, p) for i, p in enumerate(probs)]
            pts[-1] = (pts[-1][0], pts[-1][1] + tail)
            if abs(_discrete_moments(pts)[2] - 1.0) <= 1e-12:
                break
        k += 1
        if k > 100_000:
            raise ConstructionError(f"geometric tail did not converge for q={q}")
        probs.append(qbar**k * q)
    return _discrete(pts, {"family": "geometric", "q": float(q)})


def strong_set_variance(c: float, M: int) -> float:
    """Variance of the uniform law on {1, c, ..., c^(M-1)}."""
    return (1.0 / M) * (1 - c ** (2 * M)) / (1 - c * c) - ((1.0 / M) * (1 - c**M) / (1 - c)) ** 2


def make_strong_set(c: float, M: int) -> FadingDistribution:
    """Uniform on {Δ, cΔ, ..., c^(M-1)Δ} with Δ chosen for unit variance."""
    if not c > 1:
        raise DomainError(f"strong set needs c > 1, got {c}")
    if int(M) != M or M < 2:
        raise DomainError(f"strong set needs integer M >= 2, got {M}")
    M = int(M)
    delta = 1.0 / math.sqrt(strong_set_variance(c, M))
    pts = [(delta * c**i, 1.0 / M) for i in range(M)]
    return _discrete(pts, {"family": "strong_set", "c": float(c), "M": M})


def fat_tail_radicand(c: float, M: int) -> float:
    """Denominator radicand of κ, divided by c^(2M) to avoid overflow."""
    L = M * math.log(c)
    return 2 * L * (-math.expm1(-2 * L)) - 4 * math.expm1(-L) ** 2


def fat_tail_kappa(c: float, M: int) -> float:
    """Upper support end κ making the log-uniform law on [κc^-M, κ] unit-variance."""
    if not c > 1:
        raise DomainError(f"fat tail needs c > 1, got {c}")
    if M < 2:
        raise DomainError(f"fat tail needs M >= 2, got {M}")
    rad = fat_tail_radicand(c, M)
    if not rad > 0:
        raise ConstructionError(f"kappa radicand is nonpositive ({rad!r}) for c={c}, M={M}")
    return 2 * M * math.log(c) / math.sqrt(rad)


def fat_tail_mean(c: float, M: int) -> float:
    """Closed-form mean (α_max − α_min)/log(α_max/α_min) of the fat-tail law."""
    kappa = fat_tail_kappa(c, M)
    return kappa * (-math.expm1(-M * math.log(c))) / (M * math.log(c))


def make_log_uniform(lo: float, hi: float) -> FadingDistribution:
    """Density proportional to 1/a on [lo, hi]."""
    if not (0 < lo < hi) or not math.isfinite(hi):
        raise ConstructionError(f"log-uniform needs 0 < lo < hi, got [{lo}, {hi}]")
    return _log_uniform(math.log(lo), math.log(hi))


def _log_uniform(log_lo: float, log_hi: float, spec: dict | None = None) -> FadingDistribution:
    """Log-uniform law given its log endpoints; moments in closed form."""
    L = log_hi - log_lo
    if not L > 0:
        raise ConstructionError(f"log-uniform needs lo < hi, got log endpoints [{log_lo}, {log_hi}]")
    lo, hi = math.exp(log_lo), math.exp(log_hi)
    # (hi − lo)/L and (hi² − lo²)/(2L) written with expm1 to keep precision
    mean = hi * -math.expm1(-L) / L
    second = hi * hi * -math.expm1(-2 * L) / (2 * L)
    if spec is None:
        spec = {"family": "log_uniform", "lo": lo, "hi": hi}
    return FadingDistribution(
        family=Family.LOG_UNIFORM,
        support_lo=lo,
        support_hi=hi,
        params=(("log_lo", float(log_lo)), ("log_hi", float(log_hi))),
        mean=mean,
        second_moment=second,
        variance=second - mean * mean,
        spec=_dump(spec),
    )


def make_fat_tail(c: float, M: int) -> FadingDistribution:
    log_kappa = math.log(fat_tail_kappa(c, M))
    return _log_uniform(log_kappa - M * math.log(c), log_kappa, {"family": "fat_tail", "c": float(c), "M": int(M)})


def make_uniform(lo: float, hi: float) -> FadingDistribution:
    if not lo < hi:
        raise ConstructionError(f"uniform needs lo < hi, got [{lo}, {hi}]")
    return _continuous(
        Family.TRUNCATED_DENSITY, lo, hi, "uniform", (("lo", lo), ("hi", hi)), {"family": "uniform", "lo": float(lo), "hi": float(hi)}
    )


def make_truncated_gaussian(center: float, halfwidth: float, sigma: float) -> FadingDistribution:
    """Gaussian N(center, sigma²) restricted to [center − halfwidth, center + halfwidth]."""
    if not halfwidth > 0:
        raise ConstructionError("halfwidth must be positive")
    if not sigma > 0:
        raise ConstructionError("sigma must be positive")
    return _continuous(
        Family.TRUNCATED_DENSITY,
        center - halfwidth,
        center + halfwidth,
        "truncated_gaussian",
        (("center", center), ("halfwidth", halfwidth), ("sigma", sigma)),
        {"family": "truncated_gaussian", "center": float(center), "halfwidth": float(halfwidth), "sigma": float(sigma)},
    )


def make_gaussian(mean: float = 0.0, std: float = 1.0) -> FadingDistribution:
    if not std > 0:
        raise ConstructionError("std must be positive")
    return _continuous(
        Family.TRUNCATED_DENSITY,
        -math.inf,
        math.inf,
        "gaussian",
        (("mean", mean), ("std", std)),
        {"family": "gaussian", "mean": float(mean), "std": float(std)},
    )


# -------------------------------------------------------------- canonical form
@dataclass(frozen=True)
class ChannelParams:
    """Transmit power P and fading-times-state gain c."""

    power: float
    gain: float
    canonical: bool = True

    def __post_init__(self):
        if not self.power >= 0:
            raise DomainError(f"power must be >= 0, got {self.power}")
        if not self.gain > 0:
            raise DomainError(f"gain must be > 0, got {self.gain}")


def canonicalize(gain_raw: float, fading: FadingDistribution, state_mean: float = 0.0, state_var: float = 1.0):
    """Rewrite c̃·Ã·S̃ as c·A·S with unit-variance A and zero-mean unit-variance S.

    Returns ``(c, A)`` with ``c = |gain_raw|·σ_A·σ_S`` and ``A`` rescaled by
    1/σ_A. The fading mean is kept. ``state_mean`` only matters to the
    receiver, which subtracts it, so it does not enter the result.
    """
    if not state_var > 0:
        raise DomainError("state variance must be positive")
    if not fading.variance > 0:
        raise DegenerateError("fading has zero variance; treat it as the no-fading case")
    sigma_a = math.sqrt(fading.variance)
    gain = abs(gain_raw) * sigma_a * math.sqrt(state_var)
    if abs(fading.variance - 1.0) <= SIMPLEX_TOL:
        return gain, fading
    return gain, fading.scaled(1.0 / sigma_a)


# ---------------------------------------------------------------- quantization
def quantize_uniform(fading: FadingDistribution, step: float) -> FadingDistribution:
    """Quantize A on cells of width ``step`` centred at μ_A + k·step.

    Each cell maps to its conditional mean, so E[A_Δ] = E[A]. Cells lighter
    than 1e-14 are dropped.
    """
    if not step > 0:
        raise DomainError("step must be positive")
    mu = fading.mean
    lo, hi = fading.grid_support()
    k_lo = math.floor((lo - mu) / step - 0.5)
    k_hi = math.ceil((hi - mu) / step + 0.5)
    pts = []
    for k in range(k_lo, k_hi + 1):
        x, y = mu + (k - 0.5) * step, mu + (k + 0.5) * step
        m = fading.mass(x, y)
        if m < MIN_CELL_MASS:
            continue
        pts.append((fading.partial_mean(x, y) / m, m))
    total = math.fsum(p for _, p in pts)
    pts = [(v, p / total) for v, p in pts]
    return _discrete(pts, {"family": "discrete", "points": [[v, p] for v, p in pts]})


@dataclass(frozen=True)
class QuantizationTree:
    """Coarse/fine quantization of the fat-tail law as a c-ary tree.

    ``levels[k-1]`` lists the ``(c−1)c^(k−1)`` nodes of level k as
    ``(value, prob)``; node ``i`` of level k carries global index
    ``c^(k−1) + i`` and has children ``c·idx, ..., c·idx + c − 1``.
    ``paths`` lists, for every leaf index in ``[c^(M−1), c^M − 1]``, the node
    values from level 1 down to level M.
    """

    branching: int
    depth: int
    kappa: float
    levels: tuple[tuple[tuple[float, float], ...], ...]
    paths: tuple[tuple[float, ...], ...]
    per_cell: bool = False

    def node_index(self, level: int, i: int) -> int:
        return self.branching ** (level - 1) + i

    def level_mass(self, level: int) -> float:
        return math.fsum(p for _, p in self.levels[level - 1])

    def mean(self) -> float:
        return math.fsum(v * p for lvl in self.levels for v, p in lvl)

    def leaf_indices(self) -> range:
        c, M = self.branching, self.depth
        return range(c ** (M - 1), c**M)

    def path_mixture(self) -> list[list[float]]:
        """Node probabilities implied by a uniform choice of path, then of entry.

        Equals the node probabilities when the basis representation holds.
        """
        c, M = self.branching, self.depth
        out = [[0.0] * len(lvl) for lvl in self.levels]
        n_paths = len(self.paths)
        for leaf in self.leaf_indices():
            for k in range(1, M + 1):
                idx = leaf // c ** (M - k)
                out[k - 1][idx - c ** (k - 1)] += 1.0 / (n_paths * M)
        return out

    def to_distribution(self) -> FadingDistribution:
        """Flatten the nodes to a discrete law (equal values merged)."""
        merged: dict[float, float] = {}
        for lvl in self.levels:
            for v, p in lvl:
                merged[v] = merged.get(v, 0.0) + p
        pts = sorted(merged.items())
        return _discrete(pts, {"family": "discrete", "points": [[v, p] for v, p in pts]})


def quantize_tree(c: int, M: int, per_cell: bool = False) -> QuantizationTree:
    """Two-stage quantization of the fat-tail law for integer c.

    Level k covers the coarse interval [κ/c^k, κ/c^(k−1)) with mass 1/M,
    split into (c−1)c^(k−1) nodes of equal probability. By default each node
    takes the coarse conditional mean E[A | A ∈ I_k]; with ``per_cell`` the
    level is cut into equal-probability cells and each node takes its own
    cell's conditional mean.
    """
    if int(c) != c or c < 2:
        raise DomainError(f"tree quantizer needs integer c >= 2, got {c} (apply floor first)")
    if int(M) != M or M < 2:
        raise DomainError(f"tree quantizer needs integer M >= 2, got {M}")
    c, M = int(c), int(M)
    fading = make_fat_tail(c, M)
    kappa = fading.support_hi
    levels = []
    for k in range(1, M + 1):
        n = (c - 1) * c ** (k - 1)
        prob = 1.0 / (M * c ** (k - 1) * (c - 1))
        lo, hi = kappa / c**k, kappa / c ** (k - 1)
        if k == M:
            lo = fading.support_lo
        if per_cell:
            edges = lo * (hi / lo) ** (np.arange(n + 1) / n)
            vals = [fading.conditional_mean(edges[j], edges[j + 1]) for j in range(n)]
        else:
            vals = [fading.conditional_mean(lo, hi)] * n
        levels.append(tuple((v, prob) for v in vals))
    paths = []
    for leaf in range(c ** (M - 1), c**M):
        path = []
        for k in range(1, M + 1):
            idx = leaf // c ** (M - k)
            path.append(levels[k - 1][idx - c ** (k - 1)][0])
        paths.append(tuple(path))
    return QuantizationTree(branching=c, depth=M, kappa=kappa, levels=tuple(levels), paths=tuple(paths), per_cell=per_cell)


# ------------------------------------------------------------------ JSON specs
_NUMBER = (int, float)


def _num(spec, key, *, lo=None, hi=None, lo_open=False, hi_open=False, integer=False):
    if key not in spec:
        raise SpecError("missing required field", field=f"spec.{key}")
    val = spec[key]
    if isinstance(val, bool) or not isinstance(val, _NUMBER) or not math.isfinite(val):
        raise SpecError(f"expected a finite number, got {val!r}", field=f"spec.{key}")
    if integer and int(val) != val:
        raise SpecError(f"expected an integer, got {val!r}", field=f"spec.{key}")
    if lo is not None and (val < lo or (lo_open and val == lo)):
        raise SpecError(f"value {val!r} below allowed range", field=f"spec.{key}")
    if hi is not None and (val > hi or (hi_open and val == hi)):
        raise SpecError(f"value {val!r} above allowed range", field=f"spec.{key}")
    return int(val) if integer else float(val)


def from_spec(spec: dict | str) -> FadingDistribution:
    """Build a distribution from its JSON spec (a dict or a JSON string)."""
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise SpecError(f"not valid JSON ({exc.msg})", field="spec") from exc
    if not isinstance(spec, dict):
        raise SpecError("expected a JSON object", field="spec")
    fam = spec.get("family")
    try:
        if fam == "antipodal":
            return make_antipodal()
        if fam == "geometric":
            return make_geometric(_num(spec, "q", lo=0.5, hi=1.0, hi_open=True))
        if fam == "strong_set":
            return make_strong_set(_num(spec, "c", lo=1.0, lo_open=True), _num(spec, "M", lo=2, integer=True))
        if fam == "fat_tail":
            return make_fat_tail(_num(spec, "c", lo=1.0, lo_open=True), _num(spec, "M", lo=2, integer=True))
        if fam == "point_mass":
            return make_point_mass(_num(spec, "m"))
        if fam == "truncated_gaussian":
            return make_truncated_gaussian(
                _num(spec, "center"), _num(spec, "halfwidth", lo=0, lo_open=True), _num(spec, "sigma", lo=0, lo_open=True)
            )
        if fam == "uniform":
            return make_uniform(_num(spec, "lo"), _num(spec, "hi"))
        if fam == "log_uniform":
            return make_log_uniform(_num(spec, "lo", lo=0, lo_open=True), _num(spec, "hi"))
        if fam == "gaussian":
            return make_gaussian(_num(spec, "mean"), _num(spec, "std", lo=0, lo_open=True))
        if fam == "discrete":
            pts = spec.get("points")
            if not isinstance(pts, list) or not pts:
                raise SpecError("expected a nonempty list of [value, prob] pairs", field="spec.points")
            for i, pair in enumerate(pts):
                if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(x, _NUMBER) for x in pair)):
                    raise SpecError(f"entry {pair!r} is not a [value, prob] pair", field=f"spec.points[{i}]")
            return make_discrete([tuple(p) for p in pts])
    except (ConstructionError, DomainError) as exc:
        raise SpecError(str(exc), field="spec") from exc
    raise SpecError(f"unknown family {fam!r}", field="spec.family")
