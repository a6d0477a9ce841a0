"""Brute-force Gel'fand–Pinsker oracle on small discretised channels.

The continuous channel Y = X + c·A·S + Z is replaced by finite alphabets:
a uniform input grid under a per-symbol amplitude limit √P, an equiprobable
quantisation of the Gaussian state, the (discrete) fading table, and a
binned output with tail-absorbing edge bins. The GP functional

    I(U; Y, A) − I(U; S)

is then maximised by enumerating every deterministic map x(u, s) and
searching P(U|S) on a simplex grid, followed by pairwise coordinate ascent.
The result is an achievable rate for the discretised channel (a lower
bound), not a certified maximum.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import BudgetError, CoverageError, DomainError
from .fading import FadingDistribution
from .gauss_signaling import _r_gamma
from .parallel import pmap

COVERAGE_TOL = 1e-6
DEFAULT_BUDGET = 5_000_000
REFINE_MIN_STEP = 1e-4
TOP_K = 8
# cap on floats held by one vectorised objective call
CHUNK_FLOATS = 4_000_000


@dataclass(frozen=True)
class DiscreteGPChannel:
    x_alphabet: np.ndarray
    s_alphabet: np.ndarray
    s_prior: np.ndarray
    a_alphabet: np.ndarray
    a_prior: np.ndarray
    y_grid: np.ndarray
    y_edges: np.ndarray
    transition: np.ndarray  # p(y | x, s, a), shape (nx, ns, na, ny)
    power_limit: float
    gain: float

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.transition.shape


@dataclass(frozen=True)
class GPSolution:
    u_size: int
    p_u_given_s: np.ndarray  # (ns, u)
    x_map: np.ndarray  # x values, (u, ns)
    x_index: np.ndarray  # indices into x_alphabet, (u, ns)
    rate: float
    n_evaluations: int = 0
    note: str = "lower bound for the discretised channel; not certified optimal"


def _state_quantizer(ns: int) -> tuple[np.ndarray, np.ndarray]:
    """Equiprobable cells of N(0, 1) and their conditional means."""
    if ns == 1:
        return np.zeros(1), np.ones(1)
    edges = special.ndtri(np.arange(ns + 1) / ns)
    phi = np.exp(-0.5 * np.where(np.isfinite(edges), edges, 0.0) ** 2) / math.sqrt(2 * math.pi)
    phi = np.where(np.isfinite(edges), phi, 0.0)
    probs = np.full(ns, 1.0 / ns)
    values = (phi[:-1] - phi[1:]) / probs
    return values, probs


def build_channel(
    P: float,
    c: float,
    fading: FadingDistribution,
    nx: int,
    ns: int,
    ny: int,
    y_span: float | None = None,
) -> DiscreteGPChannel:
    """Discretise Y = X + c·A·S + Z on finite alphabets."""
    if not P >= 0 or not c >= 0:
        raise DomainError("power and gain must be >= 0")
    if nx < 1 or ns < 1:
        raise DomainError("nx and ns must be >= 1")
    if ny < 16:
        raise DomainError("ny must be >= 16")
    if not fading.is_discrete or len(fading.points) > 8:
        raise DomainError("the oracle needs a discrete fading law with at most 8 points")
    amp = math.sqrt(P)
    x = np.zeros(1) if amp == 0 else np.linspace(-amp, amp, nx)
    s, ps = _state_quantizer(ns)
    a, pa = fading.values, fading.probs
    mean = x[:, None, None] + c * s[None, :, None] * a[None, None, :]
    if y_span is None:
        y_span = float(np.max(np.abs(mean))) + 6.0
    edges = np.linspace(-y_span, y_span, ny + 1)
    cdf = special.ndtr(edges[None, None, None, :] - mean[..., None])
    captured = cdf[..., -1] - cdf[..., 0]
    worst = float(captured.min())
    if worst < 1 - COVERAGE_TOL:
        raise CoverageError(f"y_span={y_span} captures only {worst:.9f} of the output mass")
    cdf[..., 0] = 0.0
    cdf[..., -1] = 1.0
    trans = np.diff(cdf, axis=-1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return DiscreteGPChannel(x, s, ps, a, pa, centers, edges, trans, float(P), float(c))


# ----------------------------------------------------------------- objective
def _xlogy_ratio(p, q):
    """Σ p·log2(p/q) with 0·log 0 = 0, summed over all axes but the leading ones."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0) / np.where(q > 0, q, 1.0)), 0.0)
    return t


def gp_rate(ch: DiscreteGPChannel, p_u_given_s: np.ndarray, x_index: np.ndarray) -> float:
    """I(U; Y, A) − I(U; S) in bits, from the full joint tensor."""
    q = np.asarray(p_u_given_s, dtype=float)
    x_index = np.asarray(x_index, dtype=int)
    ns, u = q.shape
    na, ny = len(ch.a_prior), ch.transition.shape[-1]
    joint = np.zeros((u, ns, na, ny))
    for ui in range(u):
        for si in range(ns):
            joint[ui, si] = ch.s_prior[si] * q[si, ui] * ch.a_prior[:, None] * ch.transition[x_index[ui, si], si]
    p_uya = joint.sum(axis=1)
    p_u = p_uya.sum(axis=(1, 2))
    p_ya = p_uya.sum(axis=0)
    i_uya = _xlogy_ratio(p_uya, p_u[:, None, None] * p_ya[None]).sum()
    p_us = joint.sum(axis=(2, 3))
    p_s = p_us.sum(axis=0)
    i_us = _xlogy_ratio(p_us, p_u[:, None] * p_s[None]).sum()
    return float(i_uya - i_us)


def _batch_objective(ch: DiscreteGPChannel, K: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Objective for maps × simplex points.

    K: (B, na, u, ns, ny) kernels p(y | x(u,s), s, a); Q: (k, ns, u).
    Returns (B, k).
    """
    ps, pa = ch.s_prior, ch.a_prior
    W = Q * ps[None, :, None]  # p(s) p(u|s)
    pu = W.sum(axis=1)  # (k, u)
    joint = np.einsum("ksu,bausy->bkauy", W, K, optimize=True)
    py = joint.sum(axis=3, keepdims=True)
    ratio = _xlogy_ratio(joint, pu[None, :, None, :, None] * py)
    i_uy_a = np.einsum("a,bkauy->bk", pa, ratio)
    i_us = _xlogy_ratio(W, pu[:, None, :] * ps[None, :, None]).sum(axis=(1, 2))
    return i_uy_a - i_us[None, :]


def _simplex_grid(u: int, steps: int) -> np.ndarray:
    pts = [c for c in itertools.product(range(steps + 1), repeat=u) if sum(c) == steps]
    return np.array(pts, dtype=float) / steps


def _kernels(ch: DiscreteGPChannel, maps: np.ndarray) -> np.ndarray:
    """maps: (B, u, ns) x indices -> (B, na, u, ns, ny)."""
    s_idx = np.arange(maps.shape[2])[None, None, :]
    k = ch.transition[maps, s_idx]  # (B, u, ns, na, ny)
    return np.moveaxis(k, 3, 1)


def _refine(ch, K1, q, step, min_step):
    """Pairwise coordinate ascent on each row of P(U|S), halving the step."""
    best = float(_batch_objective(ch, K1, q[None])[0, 0])
    ns, u = q.shape
    while step >= min_step:
        improved = False
        for s in range(ns):
            for i in range(u):
                for j in range(u):
                    if i == j or q[s, i] < step:
                        continue
                    cand = q.copy()
                    cand[s, i] -= step
                    cand[s, j] += step
                    v = float(_batch_objective(ch, K1, cand[None])[0, 0])
                    if v > best + 1e-15:
                        q, best, improved = cand, v, True
        if not improved:
            step /= 2
    return q, best


def gp_capacity_bruteforce(
    ch: DiscreteGPChannel,
    u_size: int = 2,
    simplex_steps: int = 8,
    budget: int = DEFAULT_BUDGET,
    top_k: int = TOP_K,
) -> GPSolution:
    """Best GP rate over deterministic maps x(u,s) and a P(U|S) search."""
    if not 1 <= u_size <= 4:
        raise DomainError("u_size must lie in 1..4")
    if simplex_steps < 1:
        raise DomainError("simplex_steps must be >= 1")
    nx, ns = len(ch.x_alphabet), len(ch.s_alphabet)
    row = _simplex_grid(u_size, simplex_steps)
    n_maps = nx ** (u_size * ns)
    n_simplex = len(row) ** ns
    needed = n_maps * n_simplex
    if needed > budget:
        raise BudgetError(needed, budget)
    Q = np.array([np.stack(r) for r in itertools.product(row, repeat=ns)])  # (k, ns, u)
    maps = np.array(list(itertools.product(range(nx), repeat=u_size * ns)), dtype=int).reshape(n_maps, u_size, ns)
    per = Q.shape[0] * len(ch.a_prior) * u_size * ch.transition.shape[-1]
    chunk = max(1, CHUNK_FLOATS // per)
    starts = list(range(0, n_maps, chunk))

    def run(start):
        vals = _batch_objective(ch, _kernels(ch, maps[start : start + chunk]), Q)
        return vals

    vals = np.concatenate(pmap(run, starts), axis=0)  # (n_maps, k)
    flat = vals.ravel()
    # stable ordering: best value first, then lowest (map, simplex) index
    order = np.lexsort((np.arange(flat.size), -flat))[: max(1, top_k)]
    best = None
    for idx in order:
        mi, ki = divmod(int(idx), Q.shape[0])
        K1 = _kernels(ch, maps[mi : mi + 1])
        q, v = _refine(ch, K1, Q[ki].copy(), 1.0 / simplex_steps / 2, REFINE_MIN_STEP)
        if best is None or v > best[0] + 1e-15:
            best = (v, mi, q)
    v, mi, q = best
    x_idx = maps[mi]
    return GPSolution(
        u_size=u_size,
        p_u_given_s=q,
        x_map=ch.x_alphabet[x_idx],
        x_index=x_idx,
        rate=float(v),
        n_evaluations=needed,
    )


# ------------------------------------------------------------- Monte Carlo
def _integrand_constant(fading, params):
    v = float(params.get("value", 1.0))
    return lambda a: np.full(np.shape(a), v)


def _integrand_tin(fading, params):
    P, c = float(params["P"]), float(params["c"])
    return lambda a: 0.5 * np.log2(1 + P / (1 + c * c * np.asarray(a) ** 2))


def _integrand_g_m(fading, params):
    m = float(params["m"])
    qbar = 1.0 - fading.prob_at(m)
    if qbar <= 0:
        raise DomainError("the event A != m is empty")
    mu2 = 1 + fading.mean**2

    def f(a):
        a = np.asarray(a, dtype=float)
        off = a != m
        with np.errstate(divide="ignore"):
            v = 0.5 * np.log2(mu2 / np.where(off, (a - m) ** 2, 1.0))
        return np.where(off, v, 0.0) / qbar

    return f


def _integrand_rgamma(fading, params):
    xs, us, ux = (float(v) for v in params["rho"])
    P, c = float(params["P"]), float(params["c"])
    return lambda a: _r_gamma(xs, us, ux, np.asarray(a, dtype=float), P, c)


INTEGRANDS: dict[str, Callable] = {
    "constant": _integrand_constant,
    "tin": _integrand_tin,
    "g_m": _integrand_g_m,
    "rgamma": _integrand_rgamma,
}


@dataclass(frozen=True)
class MCResult:
    mc_mean: float
    mc_stderr: float
    quad_value: float

    def agrees(self, k: float = 3.0) -> bool:
        return abs(self.mc_mean - self.quad_value) <= k * self.mc_stderr + 1e-12

    def __iter__(self):
        return iter((self.mc_mean, self.mc_stderr, self.quad_value))


def mc_expectation_check(
    fading: FadingDistribution,
    integrand_id: str,
    params: dict | None = None,
    n_samples: int = 100_000,
    seed: int = 0,
) -> MCResult:
    """Sample mean and standard error of a registered integrand against quadrature."""
    if integrand_id not in INTEGRANDS:
        raise DomainError(f"unknown integrand {integrand_id!r}; known: {sorted(INTEGRANDS)}")
    if n_samples < 10_000:
        raise DomainError("n_samples must be >= 10^4")
    fn = INTEGRANDS[integrand_id](fading, params or {})
    rng = np.random.default_rng(seed)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.asarray(fn(fading.sample(rng, n_samples)), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise DomainError(f"integrand {integrand_id!r} is not finite on the support for params {params}")
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(n_samples))
    quad = fading.integrate(lambda a: float(np.asarray(fn(np.array([a])))[0])) if not fading.is_discrete else fading.integrate(fn)
    return MCResult(mean, stderr, float(quad))


# ----------------------------------------------------------- monotonicity
@dataclass(frozen=True)
class MonotoneReport:
    c_values: tuple[float, ...]
    rates: tuple[float, ...]
    violations: tuple[tuple[float, float, float], ...] = field(default=())
    slack: float = 2e-2

    @property
    def passed(self) -> bool:
        return not self.violations


def capacity_monotone_in_c_check(
    ch_family: Callable[[float], DiscreteGPChannel],
    c_list: Sequence[float],
    u_size: int = 2,
    simplex_steps: int = 8,
    budget: int = DEFAULT_BUDGET,
    slack: float = 2e-2,
) -> MonotoneReport:
    """Solve the oracle along ascending c and report increases beyond ``slack``."""
    cs = sorted(float(c) for c in c_list)
    rates = [gp_capacity_bruteforce(ch_family(c), u_size, simplex_steps, budget).rate for c in cs]
    viol = tuple((cs[i], cs[i + 1], rates[i + 1] - rates[i]) for i in range(len(cs) - 1) if rates[i + 1] > rates[i] + slack)
    return MonotoneReport(tuple(cs), tuple(rates), viol, slack)
