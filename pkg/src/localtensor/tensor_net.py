"""Sparse tensor networks, brute-force contraction and the doubling bound.

A network is a list of sparse tensors plus a list of edges joining pairs of
legs. ``contract`` sums the product of entries over every labeling of the
edges; ``cut`` builds the doubled network Cut(M, S) used to show
|Val(M)| <= d^(N_T/2) via Cauchy-Schwarz.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .instances import Instance

MAX_LABELINGS = 10**8
TOL = 1e-9

Leg = tuple[int, int]


class BoundPrecondition(ValueError):
    """The network does not satisfy the hypotheses of the bound."""


@dataclass(frozen=True)
class SparseTensor:
    dims: tuple[int, ...]
    entries: dict  # index tuple -> value

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(x) for x in self.dims))
        clean = {}
        for idx, val in self.entries.items():
            idx = tuple(int(i) for i in idx)
            if len(idx) != len(self.dims) or any(not 0 <= i < n for i, n in zip(idx, self.dims)):
                raise ValueError(f"index {idx} does not fit dims {self.dims}")
            if val != 0:
                clean[idx] = float(val)
        object.__setattr__(self, "entries", clean)

    @property
    def nnz(self) -> int:
        return len(self.entries)

    def dense(self) -> np.ndarray:
        a = np.zeros(self.dims)
        for idx, val in self.entries.items():
            a[idx] = val
        return a


@dataclass(frozen=True)
class TensorNetwork:
    tensors: tuple[SparseTensor, ...]
    edges: tuple[tuple[Leg, Leg], ...]

    def __post_init__(self):
        object.__setattr__(self, "tensors", tuple(self.tensors))
        edges = tuple((tuple(map(int, a)), tuple(map(int, b))) for a, b in self.edges)
        object.__setattr__(self, "edges", edges)
        seen = set()
        for a, b in edges:
            for t, leg in (a, b):
                if not 0 <= t < len(self.tensors) or not 0 <= leg < len(self.tensors[t].dims):
                    raise ValueError(f"leg {(t, leg)} does not exist")
                if (t, leg) in seen:
                    raise ValueError(f"leg {(t, leg)} appears in more than one edge")
                seen.add((t, leg))
            if self.dim(a) != self.dim(b):
                raise ValueError(f"bond dimension mismatch on edge {(a, b)}")

    def dim(self, leg: Leg) -> int:
        return self.tensors[leg[0]].dims[leg[1]]

    @property
    def n_tensors(self) -> int:
        return len(self.tensors)

    def external_legs(self) -> list[Leg]:
        used = {leg for e in self.edges for leg in e}
        return [(t, l) for t, ten in enumerate(self.tensors)
                for l in range(len(ten.dims)) if (t, l) not in used]

    def max_nnz(self) -> int:
        """The d of the bound: the largest number of nonzero entries in any tensor."""
        return max((t.nnz for t in self.tensors), default=0)

    def has_self_loop(self) -> bool:
        return any(a[0] == b[0] for a, b in self.edges)

    def to_json(self) -> dict:
        return {
            "tensors": [{"dims": list(t.dims), "entries": [[list(i), v] for i, v in t.entries.items()]}
                        for t in self.tensors],
            "edges": [[list(a), list(b)] for a, b in self.edges],
        }

    @classmethod
    def from_json(cls, data) -> "TensorNetwork":
        if isinstance(data, str):
            data = json.loads(data)
        tensors = tuple(SparseTensor(tuple(t["dims"]), {tuple(i): v for i, v in t["entries"]})
                        for t in data["tensors"])
        return cls(tensors, tuple((tuple(a), tuple(b)) for a, b in data["edges"]))


def contract(net: TensorNetwork, max_labelings: int = MAX_LABELINGS) -> float:
    """Exact scalar value by depth-first enumeration of nonzero entries.

    Tensors are visited in order; each visited tensor contributes only those
    nonzero entries consistent with the edge labels already fixed by earlier
    tensors (and with its own self-loops).
    """
    if net.external_legs():
        raise ValueError("network has external legs; only scalar networks can be contracted")
    total_labelings = math.prod(net.dim(a) for a, _ in net.edges)
    if total_labelings > max_labelings:
        raise ValueError(f"{total_labelings} edge labelings exceed cap {max_labelings}")
    if not net.tensors:
        return 1.0

    partner = {}
    for eid, (a, b) in enumerate(net.edges):
        partner[a] = (eid, b)
        partner[b] = (eid, a)

    # For tensor t: legs whose edge was labeled by an earlier tensor (must match),
    # self-loop leg pairs (must agree), and the edges t itself labels.
    plans = []
    for t, ten in enumerate(net.tensors):
        fixed, loops, sets = [], [], []
        for leg in range(len(ten.dims)):
            eid, (u, ul) = partner[(t, leg)]
            if u < t:
                fixed.append((leg, eid))
            elif u == t:
                if ul > leg:
                    loops.append((leg, ul))
            else:
                sets.append((leg, eid))
        plans.append((list(ten.entries.items()), fixed, loops, sets))

    labels = [0] * len(net.edges)

    def visit(t: int) -> float:
        if t == len(plans):
            return 1.0
        entries, fixed, loops, sets = plans[t]
        acc = 0.0
        for idx, val in entries:
            if any(idx[leg] != labels[eid] for leg, eid in fixed):
                continue
            if any(idx[a] != idx[b] for a, b in loops):
                continue
            for leg, eid in sets:
                labels[eid] = idx[leg]
            acc += val * visit(t + 1)
        return acc

    return visit(0)


def contract_dense(net: TensorNetwork) -> float:
    """Independent check: dense arrays contracted with a single einsum."""
    if net.external_legs():
        raise ValueError("network has external legs")
    subs = [[None] * len(ten.dims) for ten in net.tensors]
    for eid, (a, b) in enumerate(net.edges):
        subs[a[0]][a[1]] = eid
        subs[b[0]][b[1]] = eid
    operands = []
    for t, ten in enumerate(net.tensors):
        operands.append(ten.dense())
        operands.append(subs[t])
    return float(np.einsum(*operands, [], optimize=False)) if net.tensors else 1.0


def cut(net: TensorNetwork, s) -> TensorNetwork:
    """Cut(M, S): sever edges between S and its complement, then glue M to a mirror copy.

    Tensor t of M becomes tensors t and t + N_T. A severed edge's two legs are
    each rejoined to the same leg on the mirror image of their own tensor.
    """
    s = set(s)
    n = net.n_tensors
    edges = []
    for a, b in net.edges:
        if (a[0] in s) == (b[0] in s):
            edges.append((a, b))
            edges.append(((a[0] + n, a[1]), (b[0] + n, b[1])))
        else:
            edges.append((a, (a[0] + n, a[1])))
            edges.append((b, (b[0] + n, b[1])))
    return TensorNetwork(net.tensors + net.tensors, tuple(edges))


def check_cauchy_schwarz(net: TensorNetwork, s):
    """Returns (Val(M)^2, Val(Cut(M, S)), Val(M)^2 <= Val(Cut(M, S)))."""
    val = contract(net)
    doubled = contract(cut(net, s))
    lhs = val * val
    return lhs, doubled, lhs <= doubled + TOL * max(1.0, abs(doubled))


def _check_preconditions(net: TensorNetwork):
    if net.external_legs():
        raise BoundPrecondition("network has external legs")
    if net.has_self_loop():
        raise BoundPrecondition("self-loops are outside the bound's hypotheses")
    for t, ten in enumerate(net.tensors):
        for idx, val in ten.entries.items():
            if abs(val) > 1.0:
                raise BoundPrecondition(f"tensor {t} entry {idx} has |value| = {abs(val)} > 1")


def check_lemma_bound(net: TensorNetwork):
    """Returns (Val(M), d^(N_T/2), |Val(M)| <= d^(N_T/2))."""
    _check_preconditions(net)
    val = contract(net)
    bound = float(net.max_nnz()) ** (net.n_tensors / 2.0)
    return val, bound, abs(val) <= bound + TOL


def iterated_cuts(net: TensorNetwork, order=None) -> list[TensorNetwork]:
    """Cut on all copies of vertex order[0], then order[1], ...; returns every stage."""
    order = list(range(net.n_tensors)) if order is None else list(order)
    origin = list(range(net.n_tensors))
    stages = []
    cur = net
    for v in order:
        s = [t for t, o in enumerate(origin) if o == v]
        cur = cut(cur, s)
        origin = origin + origin
        stages.append(cur)
    return stages


def is_bipartite(net: TensorNetwork) -> bool:
    adj = defaultdict(list)
    for a, b in net.edges:
        adj[a[0]].append(b[0])
        adj[b[0]].append(a[0])
    color = {}
    for start in range(net.n_tensors):
        if start in color:
            continue
        color[start] = 0
        stack = [start]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in color:
                    color[w] = 1 - color[u]
                    stack.append(w)
                elif color[w] == color[u]:
                    return False
    return True


def random_network(rng: np.random.Generator, max_tensors=4, max_dim=4, max_legs=3,
                   max_nnz=None) -> TensorNetwork:
    """Random scalar network without self-loops; sparse entries uniform in [-1, 1]."""
    while True:
        n = int(rng.integers(1, max_tensors + 1))
        legs = [int(rng.integers(0, max_legs + 1)) for _ in range(n)]
        stubs = [(t, l) for t in range(n) for l in range(legs[t])]
        if len(stubs) % 2:
            continue
        order = rng.permutation(len(stubs))
        pairs = [(stubs[order[i]], stubs[order[i + 1]]) for i in range(0, len(stubs), 2)]
        if any(a[0] == b[0] for a, b in pairs):
            continue
        break
    dims = [[0] * legs[t] for t in range(n)]
    for a, b in pairs:
        d = int(rng.integers(1, max_dim + 1))
        dims[a[0]][a[1]] = d
        dims[b[0]][b[1]] = d
    tensors = []
    for t in range(n):
        shape = tuple(dims[t])
        size = math.prod(shape)
        cap = size if max_nnz is None else min(size, max_nnz)
        k = int(rng.integers(1, cap + 1))
        flat = rng.choice(size, size=k, replace=False)
        entries = {tuple(int(x) for x in np.unravel_index(f, shape)): float(rng.uniform(-1, 1))
                   for f in flat}
        tensors.append(SparseTensor(shape, entries))
    return TensorNetwork(tuple(tensors), tuple(pairs))


def dot_network(a, b) -> TensorNetwork:
    a, b = list(a), list(b)
    ta = SparseTensor((len(a),), {(i,): x for i, x in enumerate(a)})
    tb = SparseTensor((len(b),), {(i,): x for i, x in enumerate(b)})
    return TensorNetwork((ta, tb), (((0, 0), (1, 0)),))


def coupling_slice(inst: Instance, i: int) -> SparseTensor:
    """The matrix (A)_{lm} = J_{i,l,m} of a K=3 instance."""
    entries = {}
    for t, c in zip(inst.terms, inst.coeffs):
        if i in t:
            l, m = (x for x in t if x != i)
            entries[(l, m)] = c
            entries[(m, l)] = c
    return SparseTensor((inst.n_spins, inst.n_spins), entries)


def m3l2_loop_network(inst: Instance, i: int, j: int, k: int) -> TensorNetwork:
    """Three-matrix ring whose value is sum_{l,m,o} J_{i,l,m} J_{j,m,o} J_{k,o,l}."""
    if inst.k != 3:
        raise ValueError("loop networks are defined for K=3 instances")
    if tuple(sorted((i, j, k))) not in set(inst.terms):
        raise ValueError(f"{(i, j, k)} is not a term of the instance")
    a1, a2, a3 = coupling_slice(inst, i), coupling_slice(inst, j), coupling_slice(inst, k)
    # a1[l, m] a2[m, o] a3[o, l]
    edges = (((0, 1), (1, 0)), ((1, 1), (2, 0)), ((2, 1), (0, 0)))
    return TensorNetwork((a1, a2, a3), edges)
