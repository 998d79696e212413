"""One-step soft-spin algorithm for MAX-K-LIN-2 and its small-c0 expansion.

Algorithm: v0 uniform on {-1/2, +1/2}, v1 = v0 + c0 F(v0), Z_i drawn with
E[Z_i] = v1_i (sign of v1_i when |v1_i| > 1).

Writing E[objective(v1)] as a polynomial in c0, the constant and c0^2
coefficients vanish for K=3, the c0 coefficient is ``linear_term`` and the
c0^3 coefficient is a sum over closed four-coupling loops.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import engine
from .engine import PLUS_MINUS_HALF, SOFT_SPIN, Step
from .instances import Instance, gen_maxklin2
from .tensor_net import coupling_slice

SPIN = 0.5
MAX_ENUM_SPINS = 24
ENUM_CHUNK = 1 << 14
TRIAL_BATCH = 1000

# Coefficient of c0^3 * loop_sum(inst) in the c0^3 term for v0 = +-1/2:
# (1/3!) * (1/2)^3 from the three forces, 8 admissible pairings, and
# (1/4)^3 from the three paired second moments. Checked against exhaustive
# enumeration in the tests (see calibrate_loop_prefactor).
LOOP_PREFACTOR = (1 / 6) * (1 / 8) * 8 * SPIN**6


def _require_k3(inst: Instance):
    if inst.k != 3:
        raise ValueError(f"expected a K=3 instance, got K={inst.k}")


def linear_term(inst: Instance, c0: float, spin: float = SPIN) -> float:
    """Exact c0-linear part of E[objective(v1)] for v0 uniform on {-spin, +spin}.

    Each term pairs only with its own appearance in the force, so the value
    is c0 * K * spin^(2(K-1)) * sum coeff^2; for +-1 couplings of degree D
    with K=3 and spin=1/2 that is c0 * D * N / 16.
    """
    if inst.k < 2:
        raise ValueError("arity must be at least 2")
    return c0 * inst.k * spin ** (2 * (inst.k - 1)) * float(np.sum(inst.coeff_array**2))


def _init_configs(n, start, stop, spin=SPIN):
    rows = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (rows >> np.arange(n, dtype=np.int64)) & 1
    return spin * (2.0 * bits - 1.0)


def _enumerate(inst, fn, max_spins):
    """Average ``fn(v0_block)`` (summed over rows) over all 2^N initial states."""
    n = inst.n_spins
    if n > max_spins:
        raise ValueError(f"exhaustive enumeration over 2^{n} states exceeds cap 2^{max_spins}")
    total = None
    count = 1 << n
    for start in range(0, count, ENUM_CHUNK):
        part = fn(_init_configs(n, start, min(count, start + ENUM_CHUNK)))
        total = part if total is None else total + part
    return total / count


def expansion_coefficients(inst: Instance, max_spins: int = MAX_ENUM_SPINS) -> np.ndarray:
    """Coefficients of E[objective(v0 + c0 F0)] as a polynomial in c0, by enumeration.

    Entry m is the c0^m coefficient (m = 0..K). No clamping: this is the
    expectation of the relaxed objective, with every v0 in {-1/2,+1/2}^N.
    """
    k = inst.k

    def block(v):
        f = engine.compute_force(inst, v)
        vv, ff = v[:, inst.index_array], f[:, inst.index_array]  # (B, T, K)
        poly = np.zeros(vv.shape[:2] + (k + 1,))
        poly[..., 0] = 1.0
        for p in range(k):
            shifted = np.zeros_like(poly)
            shifted[..., 1:] = poly[..., :-1] * ff[..., p:p + 1]
            poly = poly * vv[..., p:p + 1] + shifted
        return np.einsum("btm,t->m", poly, inst.coeff_array)

    return _enumerate(inst, block, max_spins)


def clamp_soft(v):
    return np.where(np.abs(v) <= 1.0, v, np.sign(v))


def exact_expected_objective(inst: Instance, c0: float, max_spins: int = MAX_ENUM_SPINS) -> float:
    """E[objective(Z)] of the full algorithm including clamping, with no sampling.

    Soft spins are independent given v1, so E[prod Z] = prod E[Z_i].
    """
    def block(v):
        v1 = v + c0 * engine.compute_force(inst, v)
        return float(np.sum(inst.evaluate(clamp_soft(v1))))

    return _enumerate(inst, block, max_spins)


def exact_expected_objective_by_outcomes(inst: Instance, c0: float, max_spins: int = 10) -> float:
    """Same expectation, enumerating every rounding outcome with its probability."""
    n = inst.n_spins
    outcomes = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    values = inst.evaluate(outcomes)

    def block(v):
        p_plus = (1.0 + clamp_soft(v + c0 * engine.compute_force(inst, v))) / 2.0
        acc = 0.0
        for row in p_plus:
            probs = np.where(outcomes > 0, row, 1.0 - row).prod(axis=1)
            acc += float(probs @ values)
        return acc

    return _enumerate(inst, block, max_spins)


def loop_sum(inst: Instance) -> float:
    """sum over ordered (i,j,k) and l,m,o of J_ijk J_ilm J_jmo J_kol (symmetrized J)."""
    _require_k3(inst)
    slices = {}

    def rows(i):
        if i not in slices:
            s = coupling_slice(inst, i).entries
            by_row = {}
            for (l, m), val in s.items():
                by_row.setdefault(l, []).append((m, val))
            slices[i] = by_row
        return slices[i]

    total = 0.0
    for t, c in zip(inst.terms, inst.coeffs):
        for i, j, k in itertools.permutations(t):
            a1, a2, a3 = rows(i), rows(j), rows(k)
            tr = 0.0
            for l, row1 in a1.items():
                for m, x in row1:
                    for o, y in a2.get(m, ()):
                        for l2, z in a3.get(o, ()):
                            if l2 == l:
                                tr += x * y * z
            total += c * tr
    return total


@dataclass(frozen=True)
class CubicTerm:
    oracle: float | None
    loop: float
    agree: bool | None


def cubic_term(inst: Instance, c0: float, max_spins: int = MAX_ENUM_SPINS) -> CubicTerm:
    """c0^3 part of E[objective(v1)], by enumeration (small N) and by the loop sum."""
    _require_k3(inst)
    loop = LOOP_PREFACTOR * c0**3 * loop_sum(inst)
    if inst.n_spins > max_spins:
        return CubicTerm(None, loop, None)
    oracle = c0**3 * float(expansion_coefficients(inst, max_spins)[3])
    return CubicTerm(oracle, loop, math.isclose(oracle, loop, rel_tol=1e-10, abs_tol=1e-12))


def calibrate_loop_prefactor(instances) -> float:
    """Least-squares ratio of the enumerated c0^3 coefficient to loop_sum."""
    num = den = 0.0
    for inst in instances:
        y = float(expansion_coefficients(inst)[3])
        x = loop_sum(inst)
        num += x * y
        den += x * x
    return num / den


def cubic_bound(inst: Instance, c0: float) -> float:
    """(1/3!)(1/2^3) D N (2D)^(3/2) |c0|^3 for a degree-regular K=3 instance."""
    _require_k3(inst)
    d = inst.degree if inst.degree is not None else int(inst.spin_degrees().max())
    return d * inst.n_spins * (2 * d) ** 1.5 * abs(c0) ** 3 / 48.0


# --- sampling ----------------------------------------------------------------------


def _trial_blocks(trials):
    for b, start in enumerate(range(0, trials, TRIAL_BATCH)):
        yield b, min(TRIAL_BATCH, trials - start)


def _first_step(inst, c0, seed, block, n):
    v0 = PLUS_MINUS_HALF.sample(engine.substream(seed, 0, block), (n, inst.n_spins))
    return engine.apply_step(inst, v0, c0, engine.Identity())


def run_m3l2(inst: Instance, c0: float, trials: int, seed):
    """Mean and standard error of the rounded objective over independent runs."""
    if trials < 1:
        raise ValueError("trials must be positive")
    vals = []
    for b, n in _trial_blocks(trials):
        v1 = _first_step(inst, c0, seed, b, n)
        z = engine.round_spins(v1, SOFT_SPIN, engine.substream(seed, 1, b))
        vals.append(np.atleast_1d(inst.evaluate(z)))
    x = np.concatenate(vals)
    err = float(x.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return float(x.mean()), err


def clamp_fraction(inst: Instance, c0: float, trials: int, seed) -> float:
    """Fraction of (spin, trial) pairs with |v1_i| > 1; same v0 draws as run_m3l2."""
    hits = 0
    for b, n in _trial_blocks(trials):
        hits += int(np.count_nonzero(np.abs(_first_step(inst, c0, seed, b, n)) > 1.0))
    return hits / (trials * inst.n_spins)


def m3l2_schedule(c0: float) -> engine.Schedule:
    return engine.Schedule(PLUS_MINUS_HALF, (Step(c0, engine.Identity()),), SOFT_SPIN)


def default_c0(d: int, alpha: float = 0.25) -> float:
    return alpha * d ** -0.75


@dataclass(frozen=True)
class ExpansionReport:
    c0: float
    linear_term: float
    cubic_term: float
    predicted_total: float
    measured_total: float
    measured_stderr: float
    clamp_fraction: float

    def to_json(self) -> dict:
        return asdict(self)


def expansion_report(inst: Instance, c0: float, trials: int, seed) -> ExpansionReport:
    lin = linear_term(inst, c0)
    cub = cubic_term(inst, c0, max_spins=min(MAX_ENUM_SPINS, 16))
    cubic = cub.oracle if cub.oracle is not None else cub.loop
    mean, err = run_m3l2(inst, c0, trials, seed)
    return ExpansionReport(c0, lin, cubic, lin + cubic, mean, err,
                           clamp_fraction(inst, c0, trials, seed))


@dataclass(frozen=True)
class ScalingRow:
    d: int
    n: int
    k: int
    c0: float
    mean: float
    stderr: float
    clamp: float

    @property
    def scaled(self) -> float:
        return self.mean / (self.d**0.25 * self.n)


def scaling_experiment(d_list, n, alpha=0.25, trials=2000, seed=0, k=3,
                       sign_mode="uniform_random") -> list[ScalingRow]:
    """Mean objective at c0 = alpha * D^(-3/4) for each D, on one random instance per D."""
    rows = []
    for d in d_list:
        inst = gen_maxklin2(n, d, k, seed=(seed, d), sign_mode=sign_mode)
        c0 = default_c0(d, alpha)
        mean, err = run_m3l2(inst, c0, trials, (seed, d))
        rows.append(ScalingRow(d, n, k, c0, mean, err, clamp_fraction(inst, c0, trials, (seed, d))))
    return rows


def report_json(report: ExpansionReport) -> str:
    return json.dumps(report.to_json(), indent=1, sort_keys=True)
