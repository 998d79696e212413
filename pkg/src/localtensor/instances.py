"""Problem instances: MAX-K-LIN-2 term lists and simple graphs for MAX-CUT.

An :class:`Instance` stores the objective as an unordered term list,

    objective(Z) = sum_t coeff_t * prod_{i in t} Z_i,

which equals ``(1/K!) * sum J Z...Z`` for the fully symmetrized coupling
tensor ``J``.
"""
from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

MAX_ATTEMPTS = 10_000


class GenerationError(RuntimeError):
    """A random generator exhausted its retry budget."""


@dataclass(frozen=True)
class Instance:
    k: int
    n_spins: int
    terms: tuple[tuple[int, ...], ...]
    coeffs: tuple[float, ...]
    degree: int | None = None

    def __post_init__(self):
        if len(self.terms) != len(self.coeffs):
            raise ValueError("terms and coeffs differ in length")
        # Sort indices inside each term; validity is checked by validate_instance.
        object.__setattr__(self, "terms", tuple(tuple(sorted(int(i) for i in t)) for t in self.terms))
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @classmethod
    def from_terms(cls, k, n_spins, terms, degree=None):
        """Build from ``[(indices, coeff), ...]``."""
        terms = list(terms)
        return cls(k, n_spins, tuple(t for t, _ in terms), tuple(c for _, c in terms), degree)

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @cached_property
    def index_array(self) -> np.ndarray:
        """(n_terms, k) integer array of spin indices."""
        return np.array(self.terms, dtype=np.int64).reshape(len(self.terms), self.k)

    @cached_property
    def coeff_array(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=float)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Sparse map from flattened (term, slot) pairs to spins."""
        rows = np.arange(self.n_terms * self.k)
        cols = self.index_array.reshape(-1)
        data = np.ones(rows.size)
        return sp.csr_matrix((data, (rows, cols)), shape=(rows.size, self.n_spins))

    def spin_degrees(self) -> np.ndarray:
        return np.bincount(self.index_array.reshape(-1), minlength=self.n_spins)

    def evaluate(self, z) -> np.ndarray | float:
        """Objective at ``z``; ``z`` may carry leading batch dimensions."""
        z = np.asarray(z, dtype=float)
        if self.n_terms == 0:
            return np.zeros(z.shape[:-1]) if z.ndim > 1 else 0.0
        vals = z[..., self.index_array].prod(axis=-1) @ self.coeff_array
        return vals if z.ndim > 1 else float(vals)

    def to_json(self) -> dict:
        out = {
            "k": self.k,
            "n_spins": self.n_spins,
            "terms": [[list(t), c] for t, c in zip(self.terms, self.coeffs)],
        }
        if self.degree is not None:
            out["degree"] = self.degree
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Instance":
        return cls.from_terms(
            int(data["k"]), int(data["n_spins"]),
            [(tuple(t), float(c)) for t, c in data["terms"]],
            degree=data.get("degree"),
        )


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    arity_violations: list = field(default_factory=list)
    repeated_index_terms: list = field(default_factory=list)
    out_of_range_terms: list = field(default_factory=list)
    duplicate_terms: list = field(default_factory=list)
    nonunit_coeffs: list = field(default_factory=list)
    degrees: list = field(default_factory=list)
    regular_degree: int | None = None

    @property
    def regular(self) -> bool:
        return self.regular_degree is not None


def validate_instance(inst: Instance) -> ValidationReport:
    arity, repeated, out_of_range, nonunit = [], [], [], []
    for n, (t, c) in enumerate(zip(inst.terms, inst.coeffs)):
        if len(t) != inst.k:
            arity.append(n)
        if len(set(t)) != len(t):
            repeated.append(n)
        if any(i < 0 or i >= inst.n_spins for i in t):
            out_of_range.append(n)
        if c not in (-1.0, 1.0):
            nonunit.append(n)
    counts = Counter(inst.terms)
    duplicates = sorted(t for t, m in counts.items() if m > 1)

    degrees = [0] * inst.n_spins
    for t in inst.terms:
        for i in t:
            if 0 <= i < inst.n_spins:
                degrees[i] += 1
    regular = degrees[0] if degrees and len(set(degrees)) == 1 else None

    valid = not (arity or repeated or out_of_range or duplicates)
    if inst.degree is not None and regular != inst.degree:
        valid = False
    return ValidationReport(valid, arity, repeated, out_of_range, duplicates,
                            nonunit, degrees, regular)


def _signs(rng, n, sign_mode):
    if sign_mode == "all_plus":
        return [1.0] * n
    if sign_mode == "uniform_random":
        return [float(s) for s in rng.choice((-1, 1), size=n)]
    raise ValueError(f"unknown sign_mode {sign_mode!r}")


def _match_stubs(rng, n, d, k, distinct_groups):
    """Group ``n*d`` stubs into ``k``-sets with distinct vertices.

    Groups that are valid are kept; leftover stubs are reshuffled. Returns
    None when the leftovers can no longer be completed.
    """
    groups: set[tuple[int, ...]] = set()
    stubs = np.repeat(np.arange(n), d)
    while stubs.size:
        rng.shuffle(stubs)
        leftover = []
        for chunk in stubs.reshape(-1, k):
            g = tuple(sorted(int(x) for x in chunk))
            if len(set(g)) == k and g not in groups and distinct_groups(groups, g):
                groups.add(g)
            else:
                leftover.extend(g)
        if len(leftover) == stubs.size:
            return None
        stubs = np.array(leftover, dtype=np.int64)
    return groups


def gen_maxklin2(n, d, k=3, seed=None, sign_mode="uniform_random") -> Instance:
    """Random degree-``d`` MAX-K-LIN-2 instance on ``n`` spins."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise ValueError(f"need n >= k, got n={n}, k={k}")
    if (n * d) % k:
        raise ValueError(f"n*d = {n * d} is not divisible by k = {k}")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_ATTEMPTS):
        groups = _match_stubs(rng, n, d, k, lambda gs, g: True)
        if groups is not None:
            terms = sorted(groups)
            coeffs = _signs(rng, len(terms), sign_mode)
            return Instance(k, n, tuple(terms), tuple(coeffs), degree=d)
    raise GenerationError(f"no simple {d}-regular {k}-uniform hypergraph on {n} vertices "
                          f"after {MAX_ATTEMPTS} attempts")


def gen_max3lin2(n, d, seed=None, sign_mode="uniform_random") -> Instance:
    return gen_maxklin2(n, d, 3, seed, sign_mode)


# --- graphs -----------------------------------------------------------------


def find_triangle(n, edges):
    adj = [set() for _ in range(n)]
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    for a, b in edges:
        common = adj[a] & adj[b]
        if common:
            return (a, b, min(common))
    return None


@dataclass(frozen=True)
class Graph:
    n_vertices: int
    edges: tuple[tuple[int, int], ...]
    degree: int | None = None
    triangle_free: bool = False

    def __post_init__(self):
        edges = tuple(sorted(tuple(sorted((int(a), int(b)))) for a, b in self.edges))
        object.__setattr__(self, "edges", edges)
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-loop at vertex {a}")
            if not 0 <= a < b < self.n_vertices:
                raise ValueError(f"edge {(a, b)} out of range")
        if len(set(edges)) != len(edges):
            raise ValueError("multi-edge present")
        if self.degree is not None:
            deg = self.degrees()
            if np.any(deg != self.degree):
                raise ValueError(f"graph is not {self.degree}-regular")
        if self.triangle_free:
            tri = find_triangle(self.n_vertices, edges)
            if tri is not None:
                raise ValueError(f"triangle {tri} in graph flagged triangle-free")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        return np.bincount(np.array(self.edges, dtype=np.int64).reshape(-1),
                           minlength=self.n_vertices)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_vertices, self.n_vertices))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def to_json(self) -> dict:
        return {"n_vertices": self.n_vertices, "edges": [list(e) for e in self.edges],
                "degree": self.degree, "triangle_free": self.triangle_free}

    @classmethod
    def from_json(cls, data: dict) -> "Graph":
        return cls(int(data["n_vertices"]), tuple(tuple(e) for e in data["edges"]),
                   data.get("degree"), bool(data.get("triangle_free", False)))


def gen_bipartite_regular_graph(n_per_side, d, seed=None) -> Graph:
    """Random simple ``d``-regular bipartite graph with ``n_per_side`` vertices per side."""
    if not n_per_side >= d >= 1:
        raise ValueError(f"need n_per_side >= d >= 1, got {n_per_side}, {d}")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_ATTEMPTS):
        left = np.repeat(np.arange(n_per_side), d)
        right = np.repeat(np.arange(n_per_side, 2 * n_per_side), d)
        edges: set[tuple[int, int]] = set()
        while left.size:
            rng.shuffle(right)
            keep = np.ones(left.size, dtype=bool)
            for n, (a, b) in enumerate(zip(left, right)):
                e = (int(a), int(b))
                if e not in edges:
                    edges.add(e)
                    keep[n] = False
            if keep.all():
                break
            left, right = left[keep], right[keep]
        else:
            return Graph(2 * n_per_side, tuple(edges), d, triangle_free=True)
    raise GenerationError(f"no simple {d}-regular bipartite graph after {MAX_ATTEMPTS} attempts")


def gen_triangle_free_regular_graph(n, d, seed=None) -> Graph:
    """Random simple ``d``-regular triangle-free graph by pairing + rejection."""
    if (n * d) % 2:
        raise ValueError(f"n*d = {n * d} must be even")
    if not n > d:
        raise ValueError(f"need n > d, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_ATTEMPTS):
        groups = _match_stubs(rng, n, d, 2, lambda gs, g: True)
        if groups is None:
            continue
        if find_triangle(n, groups) is None:
            return Graph(n, tuple(groups), d, triangle_free=True)
    raise GenerationError(f"no {d}-regular triangle-free graph on {n} vertices "
                          f"after {MAX_ATTEMPTS} attempts")


def maxcut_as_max2lin2(g: Graph) -> Instance:
    """MAX-CUT as K=2 instance with J = -adjacency (one -1 term per edge)."""
    return Instance(2, g.n_vertices, g.edges, (-1.0,) * g.n_edges, degree=g.degree)


def cut_value(g: Graph, z) -> int:
    z = np.asarray(z)
    if z.shape != (g.n_vertices,):
        raise ValueError(f"assignment length {z.shape} does not match {g.n_vertices} vertices")
    if not np.all(np.abs(z) == 1):
        raise ValueError("assignment entries must be +-1")
    if g.n_edges == 0:
        return 0
    e = np.array(g.edges)
    return int(np.count_nonzero(z[e[:, 0]] != z[e[:, 1]]))


def spin_assignment(values) -> np.ndarray:
    z = np.asarray(values)
    if not np.all((z == 1) | (z == -1)):
        raise ValueError("spin assignment entries must be in {-1, +1}")
    return z.astype(np.int8)


def load_json(path):
    data = json.loads(Path(path).read_text())
    if "k" in data:
        return Instance.from_json(data)
    if "n_vertices" in data:
        return Graph.from_json(data)
    raise ValueError(f"{path}: neither an instance nor a graph")


def dump_json(obj, path):
    Path(path).write_text(json.dumps(obj.to_json(), indent=1) + "\n")


def all_triples_triangle_free(g: Graph) -> bool:
    """Exhaustive O(n^3) triple check; independent of :func:`find_triangle`."""
    a = g.adjacency().astype(bool)
    for i, j, k in itertools.combinations(range(g.n_vertices), 3):
        if a[i, j] and a[j, k] and a[i, k]:
            return False
    return True
