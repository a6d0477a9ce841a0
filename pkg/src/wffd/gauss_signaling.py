"""Jointly Gaussian signaling for Gaussian fading.

The rate R_Γ(ρ, θ) of a jointly Gaussian (X, U, S) choice is averaged over
θ ~ N(0, 1) by Gauss–Hermite quadrature and maximised over the open
correlation manifold

    1 + 2ρ_XSρ_US − ρ_XS² − ρ_US² − ρ_UX² = 0,   |ρ| < 1,

which is parametrised by (ρ_XS, ρ_US) and the sign of ρ_UX.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_hermitenorm

from .errors import DomainError

MANIFOLD_TOL = 1e-12
DEFAULT_ORDER = 64
GRID_STEP = 0.02
RADICAND_MARGIN = 1e-6
FINAL_STEP = 1e-5
ORDER_RTOL = 1e-6


class OffManifoldError(DomainError):
    """The requested correlations do not lie on the open manifold."""


class QuadratureWarning(RuntimeWarning):
    """Gauss–Hermite order doubling changed the result by more than the tolerance."""


@dataclass(frozen=True)
class RhoPoint:
    rho_xs: float
    rho_us: float
    rho_ux: float

    def residual(self) -> float:
        x, u, w = self.rho_xs, self.rho_us, self.rho_ux
        return abs(1 + 2 * x * u - x * x - u * u - w * w)


def rho_from_pair(rho_xs: float, rho_us: float, sign: int = 1) -> RhoPoint:
    """Complete (ρ_XS, ρ_US) to a manifold point with ρ_UX of the given sign."""
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    if not (abs(rho_xs) < 1 and abs(rho_us) < 1):
        raise OffManifoldError(f"|rho| must be < 1, got ({rho_xs}, {rho_us})")
    rad = 1 - (rho_xs - rho_us) ** 2
    if not 0 < rad < 1:
        raise OffManifoldError(f"radicand 1 - (rho_xs - rho_us)^2 = {rad} is outside (0, 1)")
    return RhoPoint(float(rho_xs), float(rho_us), sign * math.sqrt(rad))


def _r_gamma(xs, us, ux, theta, P, c, literal=False):
    """Vectorised R_Γ in bits; NaN-free, with −inf where a log argument is <= 0."""
    sp = math.sqrt(P)
    cs = c * c * (theta * theta if not literal else 1.0)
    num = (P + cs + 2 * theta * xs * c * sp + 1) * (1 - us * us)
    den = P * (1 - ux * ux) + cs * (1 - us * us) + 2 * theta * c * (xs - ux * us) * sp + 1
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 0.5 * (np.log2(num) - np.log2(den))
    bad = (num <= 0) | (den <= 0)
    return np.where(bad, -np.inf, out)


def r_gamma(rho: RhoPoint, theta: float, P: float, c: float, literal: bool = False) -> float:
    """R_Γ(ρ, θ): the rate at fading value θ; may be negative.

    The interference power given A = θ is c²θ². ``literal`` uses c² in its
    place, which can drive the log arguments negative.
    """
    if rho.residual() > 1e-10:
        raise OffManifoldError(f"rho is off the manifold (residual {rho.residual():.3g})")
    return float(_r_gamma(rho.rho_xs, rho.rho_us, rho.rho_ux, theta, P, c, literal))


@functools.lru_cache(maxsize=None)
def _hermite(order: int):
    x, w = roots_hermitenorm(order)
    return x, w / math.sqrt(2 * math.pi)


def _expect(xs, us, ux, P, c, order, literal=False):
    x, w = _hermite(order)
    xs, us, ux = (np.asarray(v, dtype=float)[..., None] for v in (xs, us, ux))
    vals = _r_gamma(xs, us, ux, x, P, c, literal)
    with np.errstate(invalid="ignore"):
        return np.sum(w * vals, axis=-1)


@dataclass(frozen=True)
class Expectation:
    value: float
    check_value: float
    rel_diff: float
    warning: str | None = None


def expected_r_gamma_report(rho: RhoPoint, P: float, c: float, quad_order: int = DEFAULT_ORDER, literal: bool = False) -> Expectation:
    """E_θ[R_Γ(ρ, θ)] at ``quad_order`` and at twice that order."""
    if quad_order < 16:
        raise DomainError("quad_order must be >= 16")
    v1 = float(_expect(rho.rho_xs, rho.rho_us, rho.rho_ux, P, c, quad_order, literal))
    v2 = float(_expect(rho.rho_xs, rho.rho_us, rho.rho_ux, P, c, 2 * quad_order, literal))
    rel = abs(v1 - v2) / max(abs(v2), 1e-300) if math.isfinite(v2) else math.inf
    msg = None
    if not rel <= ORDER_RTOL and abs(v1 - v2) > 1e-12:
        msg = f"order {quad_order} vs {2 * quad_order} differ by {rel:.3g} (relative)"
    return Expectation(v1, v2, rel, msg)


def expected_r_gamma(rho: RhoPoint, P: float, c: float, quad_order: int = DEFAULT_ORDER, literal: bool = False) -> float:
    """Gauss–Hermite average of R_Γ over θ ~ N(0, 1); warns on order-doubling disagreement."""
    rep = expected_r_gamma_report(rho, P, c, quad_order, literal)
    if rep.warning:
        warnings.warn(rep.warning, QuadratureWarning, stacklevel=2)
    return rep.value


def _admissible(xs, us):
    rad = 1 - (xs - us) ** 2
    return (np.abs(xs) < 1) & (np.abs(us) < 1) & (rad >= RADICAND_MARGIN) & (rad <= 1 - RADICAND_MARGIN) & (xs * us <= 0)


def _objective(xs, us, sign, P, c, order):
    xs, us = np.asarray(xs, dtype=float), np.asarray(us, dtype=float)
    ok = _admissible(xs, us)
    ux = sign * np.sqrt(np.clip(1 - (xs - us) ** 2, 0, None))
    val = _expect(xs, us, ux, P, c, order)
    return np.where(ok & np.isfinite(val), val, -np.inf)


def optimize_rho(P: float, c: float, quad_order: int = DEFAULT_ORDER) -> tuple[RhoPoint, float]:
    """Maximise E_θ[R_Γ] over the manifold; returns (best point, clamped rate).

    A step-0.02 grid over (ρ_XS, ρ_US) for both signs of ρ_UX seeds a
    compass search that halves its step down to 1e−5. Only points whose
    covariance is positive semidefinite (ρ_XS·ρ_US <= 0 on this manifold)
    and whose radicand lies in [1e−6, 1 − 1e−6] are considered.
    """
    if not P >= 0:
        raise DomainError("power must be >= 0")
    if not c >= 0:
        raise DomainError("gain must be >= 0")
    g = np.arange(-1 + GRID_STEP, 1 - GRID_STEP / 2, GRID_STEP)
    XS, US = np.meshgrid(g, g, indexing="ij")
    best = (-np.inf, 0.0, 0.0, 1)
    for sign in (1, -1):
        vals = _objective(XS, US, sign, P, c, quad_order)
        i = np.unravel_index(int(np.argmax(vals)), vals.shape)
        if vals[i] > best[0]:
            best = (float(vals[i]), float(XS[i]), float(US[i]), sign)
    val, xs, us, sign = best
    if not math.isfinite(val):
        raise DomainError("no admissible correlation point on the grid")
    step = GRID_STEP / 2
    moves = np.array([(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)], dtype=float)
    while step >= FINAL_STEP:
        cand = np.array([xs, us]) + step * moves
        cv = _objective(cand[:, 0], cand[:, 1], sign, P, c, quad_order)
        k = int(np.argmax(cv))
        if cv[k] > val:
            val, xs, us = float(cv[k]), float(cand[k, 0]), float(cand[k, 1])
        else:
            step /= 2
    point = rho_from_pair(xs, us, sign)
    return point, max(val, 0.0)
