"""One-step algorithms for MAX-CUT on triangle-free D-regular graphs.

For a single step on a triangle-free graph the joint law of the two spins
on an edge (i, j) depends only on the 2D-vertex subgraph made of i, j and
their other neighbors. "Improvement" below is E[-Z_i Z_j / 2], the expected
cut fraction minus 1/2.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import engine
from .engine import InitDistribution, SignWithBiasedNoise, Step, init_distribution

MAX_ENUMERATION = 10**8
MC_BATCH = 1_000_000


def binomial_half_weights(n: int) -> np.ndarray:
    """2^-n * C(n, k) for k = 0..n.

    Built by the ratio recursion C(n,k+1)/C(n,k) = (n-k)/(k+1) outward from
    the mode and normalized at the end, so nothing overflows or underflows
    near the center for any n.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    mode = n // 2
    w = np.empty(n + 1)
    w[mode] = 1.0
    for k in range(mode, n):
        w[k + 1] = w[k] * (n - k) / (k + 1)
    for k in range(mode, 0, -1):
        w[k - 1] = w[k] * k / (n - k + 1)
    return w / w.sum()


@dataclass(frozen=True)
class FlipRule:
    """q[m]: expectation of Z_i relative to its initial sign when m of D neighbors agree."""

    d: int
    q: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(x) for x in self.q))
        if len(self.q) != self.d + 1:
            raise ValueError(f"flip rule for degree {self.d} needs {self.d + 1} entries")
        if any(not -1.0 <= x <= 1.0 for x in self.q):
            raise ValueError("q values must lie in [-1, 1]")

    def __neg__(self):
        return FlipRule(self.d, tuple(-x for x in self.q))


@dataclass(frozen=True)
class EvalResult:
    d: int
    improvement: float
    method: str
    params: dict = field(default_factory=dict)
    samples: int | None = None
    stderr: float = 0.0


def expected_improvement(rule: FlipRule) -> float:
    """Exact per-edge E[-Z_i Z_j / 2] for a one-step flip rule.

    Weighting the other D-1 neighbors binomially: spins that agree initially
    have correlation A^2, disagreeing spins -B^2, giving (B^2 - A^2)/4.
    """
    d = rule.d
    w = binomial_half_weights(d - 1)
    q = np.array(rule.q)
    disagree = float(w @ q[:d])
    agree = float(w @ q[1:])
    return 0.25 * (disagree * disagree - agree * agree)


def threshold_rule(d: int, tau: int) -> FlipRule:
    """Flip when at least ``tau`` neighbors agree; ``tau = d + 1`` never flips."""
    if not 0 <= tau <= d + 1:
        raise ValueError(f"tau must lie in [0, {d + 1}]")
    return FlipRule(d, tuple(1.0 if m < tau else -1.0 for m in range(d + 1)))


def soft_threshold_rule(d: int, boundary: int, value: float) -> FlipRule:
    """No flip below ``boundary``, always flip above, q[boundary] = ``value``."""
    q = [1.0 if m < boundary else -1.0 for m in range(d + 1)]
    q[boundary] = value
    return FlipRule(d, tuple(q))


def threshold_improvements(d: int) -> np.ndarray:
    """Improvement of the hard threshold rule for every tau in 0..d+1 at once."""
    w = binomial_half_weights(d - 1)
    cdf = np.concatenate(([0.0, 0.0], np.cumsum(w)))  # cdf[t + 1] = P(n < t)
    cdf = np.minimum(cdf, 1.0)
    taus = np.arange(d + 2)
    below = lambda t: cdf[np.clip(t, -1, d) + 1]
    disagree = 2.0 * below(taus) - 1.0
    agree = 2.0 * below(taus - 1) - 1.0
    return 0.25 * (disagree**2 - agree**2)


def optimize_threshold(d: int) -> tuple[int, float]:
    """Exhaustive search over tau; the smallest maximizer wins ties."""
    if d < 1:
        raise ValueError("d must be at least 1")
    vals = threshold_improvements(d)
    # Float noise must not break exact ties.
    tau = int(np.flatnonzero(vals >= vals.max() - 1e-14)[0])
    return tau, float(vals[tau])


def optimize_soft_threshold(d: int, grid: float = 0.01) -> tuple[FlipRule, float]:
    """Best one-boundary soft threshold over boundary counts and a grid of q values.

    Ties go to the smallest boundary, then the smallest q value.
    """
    if d < 1 or not grid > 0:
        raise ValueError("need d >= 1 and grid > 0")
    steps = int(round(2.0 / grid))
    values = np.round(np.linspace(-1.0, 1.0, steps + 1), 12)
    best_rule, best = None, -math.inf
    for m0 in range(d + 1):
        for s in values:
            rule = soft_threshold_rule(d, m0, float(s))
            val = expected_improvement(rule)
            if val > best + 1e-15:
                best_rule, best = rule, val
    return best_rule, best


def qaoa_one_step(d: int) -> float:
    """Improvement of the optimal one-step QAOA on triangle-free D-regular graphs."""
    if d < 1:
        raise ValueError("d must be at least 1")
    return (1.0 - 1.0 / d) ** ((d - 1) / 2.0) / (2.0 * math.sqrt(d))


# --- local-subgraph evaluation -------------------------------------------------------


def brute_force_flip_rule(rule: FlipRule) -> float:
    """E[-Z_i Z_j / 2] by summing all 2^(2D) sign patterns of the local subgraph."""
    d = rule.d
    if 2 * d > 24:
        raise ValueError("2^(2D) enumeration capped at D <= 12")
    q = np.array(rule.q)
    bits = np.array(list(itertools.product((-1, 1), repeat=2 * d)), dtype=np.int64)
    vi, vj = bits[:, 0], bits[:, 1]
    ni, nj = bits[:, 2:d + 1], bits[:, d + 1:]
    m_i = (vj == vi).astype(int) + (ni == vi[:, None]).sum(axis=1)
    m_j = (vi == vj).astype(int) + (nj == vj[:, None]).sum(axis=1)
    corr = q[m_i] * vi * q[m_j] * vj
    return float(-0.5 * corr.mean())


def _sum_distribution(values, probs, count):
    """Exact law of the sum of ``count`` i.i.d. draws, as {sum: probability}."""
    dist = {Fraction(0): Fraction(1)}
    for _ in range(count):
        nxt: dict[Fraction, Fraction] = {}
        for s, p in dist.items():
            for x, px in zip(values, probs):
                nxt[s + x] = nxt.get(s + x, Fraction(0)) + p * px
        dist = nxt
    return dist


def _sign(x: Fraction) -> int:
    return (x > 0) - (x < 0)


def enumerate_local_subgraph(d: int, init, c: float) -> float:
    """Exact E[-Z_i Z_j / 2] for v1 = v0 + c J v0 (J = -adjacency), Z = sign(v1).

    Only the sums over the D-1 other neighbors of i and of j matter, so the
    enumeration runs over (v_i, v_j, S_i, S_j) with exact rational weights.
    Exact zeros round by a fair coin and so contribute nothing.
    """
    init = init_distribution(init)
    if init.support is None:
        raise ValueError("exact enumeration needs a finite-support initialization")
    values, probs = init.support, init.probabilities
    sums = _sum_distribution(values, probs, d - 1)
    size = (len(values) * len(sums)) ** 2
    if size > MAX_ENUMERATION:
        raise ValueError(f"enumeration of {size} cases exceeds cap {MAX_ENUMERATION}")
    c = Fraction(c)
    # Given (v_i, v_j), Z_i and Z_j depend on disjoint neighbor sets.
    total = Fraction(0)
    for vi, pi in zip(values, probs):
        for vj, pj in zip(values, probs):
            ei = sum((p * _sign(vi - c * (vj + s)) for s, p in sums.items()), Fraction(0))
            ej = sum((p * _sign(vj - c * (vi + s)) for s, p in sums.items()), Fraction(0))
            total += pi * pj * ei * ej
    return float(-total / 2)


def _mc_batch(d, init, c, n, seed, batch_index):
    rng = engine.substream(seed, batch_index)
    v = init.sample(rng, (n, 2 * d))
    vi, vj = v[:, 0], v[:, 1]
    si = v[:, 2:d + 1].sum(axis=1)
    sj = v[:, d + 1:].sum(axis=1)
    zi = engine._sign_with_coin(vi - c * (vj + si), rng)
    zj = engine._sign_with_coin(vj - c * (vi + sj), rng)
    x = -0.5 * zi * zj
    return float(x.sum()), float((x * x).sum())


def mc_local_subgraph(d: int, init, c: float, samples: int, seed, workers: int | None = None):
    """Monte Carlo estimate of E[-Z_i Z_j / 2] on the local subgraph.

    Samples are drawn in fixed-size batches, each with its own stream, so the
    estimate does not depend on ``workers``. Returns (estimate, stderr).
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    init = init_distribution(init)
    if workers is None:
        workers = int(os.environ.get("LOCALTENSOR_WORKERS", "1"))
    sizes = [MC_BATCH] * (samples // MC_BATCH)
    if samples % MC_BATCH:
        sizes.append(samples % MC_BATCH)
    jobs = [(d, init, c, n, seed, b) for b, n in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _mc_batch(*a), jobs))
    else:
        parts = [_mc_batch(*a) for a in jobs]
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0)
    return mean, math.sqrt(var / samples)


def evaluate_continuous(d, c, samples, seed, init="continuous_uniform") -> EvalResult:
    est, err = mc_local_subgraph(d, init, c, samples, seed)
    return EvalResult(d, est, "monte-carlo", {"c": c, "init": init_distribution(init).name},
                      samples, err)


# --- mapping rules onto the local tensor engine ------------------------------------


def threshold_scalar(d: int, tau: int) -> float:
    """Step scalar c for which sign(1 - c(2m - D)) flips exactly when m >= tau."""
    if tau == d + 1:
        return 0.0
    if 2 * tau - d < 1:
        raise ValueError(f"tau={tau} is not reachable with c > 0 at D={d}; need 2*tau - D >= 1")
    return 1.0 / (2 * tau - d - 0.5)


def threshold_schedule(d: int, tau: int) -> list[Step]:
    return [Step(threshold_scalar(d, tau), engine.Identity())]


def soft_threshold_schedule(d: int, boundary: int, value: float, eps: float = 1e-3) -> list[Step]:
    """One step whose sign output follows ``soft_threshold_rule(d, boundary, value)``.

    c is tuned so that 1 - c(2*boundary - D) = eps; weak noise then reverses
    the sign with probability (1 - value)/2 only inside the band |x| <= 2 eps.
    """
    lever = 2 * boundary - d
    if lever < 1:
        raise ValueError("boundary must satisfy 2*boundary - D >= 1")
    c = (1.0 - eps) / lever
    # Nearest other counts sit at |1 - c(lever +- 2)| ~ 2/lever, far outside the band.
    return [Step(c, SignWithBiasedNoise(2 * eps, (1.0 - value) / 2.0))]


# --- scans -----------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanRow:
    d: int
    tau_star: int
    thr_improvement: float
    qaoa_improvement: float

    @property
    def thr_scaled(self) -> float:
        return math.sqrt(self.d) * self.thr_improvement

    @property
    def qaoa_scaled(self) -> float:
        return math.sqrt(self.d) * self.qaoa_improvement


def scaling_scan(d_min: int, d_max: int) -> list[ScanRow]:
    if not 1 <= d_min <= d_max:
        raise ValueError("need 1 <= d_min <= d_max")
    rows = []
    for d in range(d_min, d_max + 1):
        tau, val = optimize_threshold(d)
        rows.append(ScanRow(d, tau, val, qaoa_one_step(d)))
    return rows


def qaoa_wins(rows, tol: float = 1e-12) -> list[int]:
    """Degrees where the one-step QAOA beats the best threshold rule."""
    return [r.d for r in rows if r.qaoa_improvement > r.thr_improvement + tol]
