"""Local tensor algorithm: v_{a+1} = g_a(v_a + c_a F(v_a)), then round to spins.

Randomness comes from one root seed. Every consumer (initialization, each
step, rounding) gets its own stream keyed by a counter, so the result does
not depend on evaluation order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .instances import Instance

_INIT, _STEP, _ROUND = 0, 1, 2


def substream(seed, *counters) -> np.random.Generator:
    """Independent generator for ``(seed, *counters)``."""
    if isinstance(seed, (tuple, list)):
        key = [int(s) for s in seed]
    else:
        key = [int(seed)]
    return np.random.default_rng(np.random.SeedSequence(key + [int(c) for c in counters]))


# --- initial distributions ----------------------------------------------------


@dataclass(frozen=True)
class InitDistribution:
    """i.i.d. per-spin initial law; ``support`` is None for the continuous one."""

    name: str
    support: tuple[Fraction, ...] | None

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.support is None:
            return rng.uniform(-1.0, 1.0, size=shape)
        values = np.array([float(s) for s in self.support])
        return values[rng.integers(0, len(values), size=shape)]

    @property
    def probabilities(self) -> tuple[Fraction, ...]:
        if self.support is None:
            raise ValueError(f"{self.name} has no finite support")
        return (Fraction(1, len(self.support)),) * len(self.support)


PLUS_MINUS_ONE = InitDistribution("plus_minus_one", (Fraction(-1), Fraction(1)))
PLUS_MINUS_HALF = InitDistribution("plus_minus_half", (Fraction(-1, 2), Fraction(1, 2)))
CONTINUOUS_UNIFORM = InitDistribution("continuous_uniform", None)
FOUR_POINT = InitDistribution("four_point", tuple(Fraction(x, 3) for x in (-3, -1, 1, 3)))

INIT_DISTRIBUTIONS = {d.name: d for d in (PLUS_MINUS_ONE, PLUS_MINUS_HALF,
                                           CONTINUOUS_UNIFORM, FOUR_POINT)}


def init_distribution(name) -> InitDistribution:
    if isinstance(name, InitDistribution):
        return name
    try:
        return INIT_DISTRIBUTIONS[name]
    except KeyError:
        raise ValueError(f"unknown init distribution {name!r}; "
                         f"choose from {sorted(INIT_DISTRIBUTIONS)}") from None


# --- nonlinearities -------------------------------------------------------------


def _sign_with_coin(x, rng):
    s = np.sign(x)
    zero = s == 0
    if np.any(zero):
        s[zero] = rng.choice((-1.0, 1.0), size=int(zero.sum()))
    return s


@dataclass(frozen=True)
class Identity:
    kind = "identity"

    def __call__(self, x, c, rng):
        return x


@dataclass(frozen=True)
class Clamp:
    kind = "clamp"

    def __call__(self, x, c, rng):
        return np.clip(x, -1.0, 1.0)


@dataclass(frozen=True)
class SignWithBiasedNoise:
    """Sign of the input, reversed with probability ``flip_prob`` when ``|x| <= band``.

    Exact zeros get a fair coin. With ``band`` small and the step scalar tuned
    so that exactly one agreement count lands inside the band, this realizes
    a soft threshold.
    """

    band: float
    flip_prob: float
    kind = "sign_biased_noise"

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")

    def __call__(self, x, c, rng):
        s = _sign_with_coin(np.array(x, dtype=float), rng)
        u = rng.random(np.shape(x))
        inside = np.abs(x) <= self.band
        return np.where(inside & (u < self.flip_prob), -s, s)


def heat_bath_flip_probability(delta, temperature, flip_rate):
    """Probability that a spin flips when flipping changes the objective by ``delta``.

    Heat-bath rule for maximization, damped by a global rate ``flip_rate``.
    """
    delta = np.asarray(delta, dtype=float)
    if math.isinf(temperature):
        return np.full(delta.shape, 0.5 * flip_rate)
    # 1/(1+exp(-delta/T)) without overflow
    return flip_rate * 0.5 * (1.0 + np.tanh(0.5 * delta / temperature))


@dataclass(frozen=True)
class AnnealStep:
    """Random map onto {-1,+1} that performs one parallel heat-bath sweep.

    Expects ``x = v + c F`` with ``v`` in {-1,+1} and ``|c F| < 1``; the sign
    of ``x`` recovers ``v`` and ``(x - v)/c`` recovers the force.
    """

    temperature: float
    flip_rate: float = 1.0
    kind = "anneal"

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not 0.0 < self.flip_rate <= 1.0:
            raise ValueError("flip_rate must lie in (0, 1]")

    def __call__(self, x, c, rng):
        if c <= 0:
            raise ValueError("annealing step needs c > 0")
        v = np.sign(x)
        force = (x - v) / c
        delta = -2.0 * v * force
        p = heat_bath_flip_probability(delta, self.temperature, self.flip_rate)
        flip = rng.random(np.shape(x)) < p
        return np.where(flip, -v, v)


NONLINEARITIES = {cls.kind: cls for cls in (Identity, Clamp, SignWithBiasedNoise, AnnealStep)}


@dataclass(frozen=True)
class Step:
    c: float
    g: object = Identity()

    def __post_init__(self):
        if not math.isfinite(self.c):
            raise ValueError("step scalar c must be finite")


# --- rounding ---------------------------------------------------------------------


SIGN, SOFT_SPIN = "sign", "soft"


def round_spins(v, rule, rng) -> np.ndarray:
    """Map real entries to +-1 spins.

    ``sign``: sign of each entry, fair coin on exact zeros.
    ``soft``: independent spins with E[Z_i] = v_i when |v_i| <= 1, sign(v_i) otherwise.
    """
    v = np.asarray(v, dtype=float)
    if rule == SIGN:
        return _sign_with_coin(v.copy(), rng).astype(np.int8)
    if rule == SOFT_SPIN:
        p_plus = np.clip((1.0 + v) / 2.0, 0.0, 1.0)
        return np.where(rng.random(v.shape) < p_plus, 1, -1).astype(np.int8)
    raise ValueError(f"unknown rounding rule {rule!r}")


# --- the algorithm ------------------------------------------------------------------


def compute_force(inst: Instance, v) -> np.ndarray:
    """F_i = half the objective difference between Z_i=+1 and Z_i=-1, others set to v.

    For multilinear objectives this is sum over terms containing i of
    coeff * prod(v_j for the other members). Accepts batched ``v`` (..., N).
    """
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != inst.n_spins:
        raise ValueError(f"state has length {v.shape[-1]}, instance has {inst.n_spins} spins")
    if inst.n_terms == 0:
        return np.zeros_like(v)
    vals = v[..., inst.index_array]  # (..., T, K)
    contrib = np.empty_like(vals)
    for p in range(inst.k):
        others = np.delete(vals, p, axis=-1).prod(axis=-1)
        contrib[..., p] = others * inst.coeff_array
    flat = contrib.reshape(-1, inst.n_terms * inst.k)
    force = (inst.incidence.T @ flat.T).T
    return force.reshape(v.shape)


def apply_step(inst: Instance, v, c, g=Identity(), rng=None) -> np.ndarray:
    x = np.asarray(v, dtype=float) + c * compute_force(inst, v)
    return g(x, c, rng)


def run_batch(inst: Instance, init, steps: Sequence[Step], rule, seed, trials: int):
    """Run ``trials`` independent copies; returns (spins (trials, N), objectives (trials,))."""
    init = init_distribution(init)
    v = init.sample(substream(seed, _INIT), (trials, inst.n_spins))
    for a, step in enumerate(steps):
        v = apply_step(inst, v, step.c, step.g, substream(seed, _STEP, a))
    z = round_spins(v, rule, substream(seed, _ROUND))
    return z, np.atleast_1d(inst.evaluate(z))


def run_local_tensor(inst: Instance, init, steps: Sequence[Step], rule, seed):
    """One run; returns (spin assignment, objective value)."""
    z, obj = run_batch(inst, init, steps, rule, seed, 1)
    return z[0], float(obj[0])


def annealing_scalar(inst: Instance) -> float:
    """A step scalar small enough that |c F_i| < 1 for every +-1 state."""
    bound = np.zeros(inst.n_spins)
    np.add.at(bound, inst.index_array.reshape(-1), np.repeat(np.abs(inst.coeff_array), inst.k))
    return 0.5 / (float(bound.max(initial=0.0)) + 1.0)


def annealing_schedule(inst: Instance, temperatures, flip_rate=1.0) -> list[Step]:
    c = annealing_scalar(inst)
    return [Step(c, AnnealStep(float(t), flip_rate)) for t in temperatures]


def run_annealing(inst: Instance, temperatures, flip_rate, seed, trials=1, record=False):
    """Simulated annealing written as a local tensor algorithm.

    Returns (spins, objectives) for ``trials`` parallel chains; with
    ``record=True`` also the list of states after each step.
    """
    steps = annealing_schedule(inst, temperatures, flip_rate)
    v = PLUS_MINUS_ONE.sample(substream(seed, _INIT), (trials, inst.n_spins))
    history = [v]
    for a, step in enumerate(steps):
        v = apply_step(inst, v, step.c, step.g, substream(seed, _STEP, a))
        if record:
            history.append(v)
    z = v.astype(np.int8)
    obj = np.atleast_1d(inst.evaluate(z))
    return (z, obj, history) if record else (z, obj)


# --- schedule JSON ---------------------------------------------------------------------


def nonlinearity_from_json(spec) -> object:
    if isinstance(spec, str):
        spec = {"g": spec}
    kind = spec.get("g", "identity")
    params = spec.get("params", {}) or {}
    try:
        cls = NONLINEARITIES[kind]
    except KeyError:
        raise ValueError(f"unknown nonlinearity {kind!r}") from None
    return cls(**params)


def nonlinearity_to_json(g) -> dict:
    out = {"g": g.kind}
    params = {k: getattr(g, k) for k in getattr(g, "__dataclass_fields__", {})}
    if params:
        out["params"] = params
    return out


@dataclass(frozen=True)
class Schedule:
    init: InitDistribution
    steps: tuple[Step, ...]
    rounding: str
    k: int | None = None

    def to_json(self) -> dict:
        out = {
            "init": self.init.name,
            "steps": [{"c": s.c, **nonlinearity_to_json(s.g)} for s in self.steps],
            "rounding": self.rounding,
        }
        if self.k is not None:
            out["k"] = self.k
        return out

    @classmethod
    def from_json(cls, data) -> "Schedule":
        if isinstance(data, str):
            data = json.loads(data)
        try:
            init = init_distribution(data["init"])
            steps = tuple(Step(float(s["c"]), nonlinearity_from_json(s)) for s in data["steps"])
            rounding = data.get("rounding", SIGN)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed schedule: {exc}") from None
        if rounding not in (SIGN, SOFT_SPIN):
            raise ValueError(f"unknown rounding rule {rounding!r}")
        return cls(init, steps, rounding, data.get("k"))
