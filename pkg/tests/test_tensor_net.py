import itertools

import numpy as np
import pytest

from localtensor.instances import Instance, gen_max3lin2
from localtensor.m3l2 import loop_sum
from localtensor.tensor_net import (
    BoundPrecondition, SparseTensor, TensorNetwork, check_cauchy_schwarz, check_lemma_bound,
    contract, contract_dense, cut, dot_network, is_bipartite, iterated_cuts,
    m3l2_loop_network, random_network,
)


def matrix_tensor(a):
    a = np.asarray(a, dtype=float)
    return SparseTensor(a.shape, {idx: v for idx, v in np.ndenumerate(a) if v})


def trace_network(a):
    return TensorNetwork((matrix_tensor(a),), (((0, 0), (0, 1)),))


def naive_triple_sum(inst, i, j, k):
    n = inst.n_spins
    J = np.zeros((n, n, n))
    for t, c in zip(inst.terms, inst.coeffs):
        for p in itertools.permutations(t):
            J[p] = c
    return float(np.einsum("lm,mo,ol->", J[i], J[j], J[k]))


def test_dot_product():
    assert contract(dot_network([1, 1], [1, 1])) == 2.0


def test_matrix_trace_self_loop():
    assert contract(trace_network(np.eye(3))) == 3.0


def test_external_legs_rejected():
    net = TensorNetwork((SparseTensor((2,), {(0,): 1.0}),), ())
    with pytest.raises(ValueError, match="external"):
        contract(net)


def test_bond_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        TensorNetwork((SparseTensor((2,), {}), SparseTensor((3,), {})), (((0, 0), (1, 0)),))


def test_labeling_cap():
    net = dot_network(np.ones(50), np.ones(50))
    with pytest.raises(ValueError, match="cap"):
        contract(net, max_labelings=10)


def test_contract_matches_dense_oracle():
    rng = np.random.default_rng(0)
    for _ in range(300):
        net = random_network(rng, max_tensors=4, max_dim=4)
        assert contract(net) == pytest.approx(contract_dense(net), abs=1e-10)


def test_contract_with_self_loops_matches_dense():
    rng = np.random.default_rng(1)
    a = rng.uniform(-1, 1, (3, 3, 2))
    b = rng.uniform(-1, 1, (2, 4, 4))
    net = TensorNetwork((matrix_tensor(a), matrix_tensor(b)),
                        (((0, 0), (0, 1)), ((0, 2), (1, 0)), ((1, 1), (1, 2))))
    assert contract(net) == pytest.approx(contract_dense(net), abs=1e-12)
    assert contract(net) == pytest.approx(np.trace(a).dot(np.trace(b, axis1=1, axis2=2)))


def test_cut_empty_and_full():
    rng = np.random.default_rng(2)
    for _ in range(20):
        net = random_network(rng)
        v = contract(net)
        for s in ([], range(net.n_tensors)):
            doubled = cut(net, s)
            assert doubled.n_tensors == 2 * net.n_tensors
            assert contract(doubled) == pytest.approx(v * v, abs=1e-10)


def test_cut_dot_product():
    net = dot_network([1, 1], [1, 1])
    doubled = cut(net, [0])
    assert doubled.n_tensors == 4 and not doubled.external_legs()
    # vector a glued to its mirror, vector b glued to its mirror
    assert set(doubled.edges) == {((0, 0), (2, 0)), ((1, 0), (3, 0))}
    assert contract(doubled) == 4.0
    lhs, rhs, ok = check_cauchy_schwarz(net, [0])
    assert (lhs, rhs, ok) == (4.0, 4.0, True)


def test_cut_matches_hand_doubled_fixtures():
    a = np.array([[0.5, -1.0], [0.25, 0.75]])
    x = np.array([1.0, -0.5])
    y = np.array([0.3, 0.9])
    # x_i a_ij y_j with S = {a}: ||a||_F^2-type doubling gives (x.x)(y.y) sum a_ij^2
    net = TensorNetwork((matrix_tensor(x), matrix_tensor(a), matrix_tensor(y)),
                        (((0, 0), (1, 0)), ((1, 1), (2, 0))))
    assert contract(cut(net, [1])) == pytest.approx((x @ x) * (y @ y) * (a * a).sum())
    # S = {x}: x glued to its mirror, the rest (a y) glued to its mirror
    assert contract(cut(net, [0])) == pytest.approx((x @ x) * ((a @ y) @ (a @ y)))
    # triangle tr(ABC) with S = {A}
    b = np.array([[1.0, 0.0], [-0.5, 0.2]])
    c = np.array([[0.1, 0.4], [0.0, -1.0]])
    tri = TensorNetwork((matrix_tensor(a), matrix_tensor(b), matrix_tensor(c)),
                        (((0, 1), (1, 0)), ((1, 1), (2, 0)), ((2, 1), (0, 0))))
    bc = b @ c
    assert contract(cut(tri, [0])) == pytest.approx((a * a).sum() * (bc * bc).sum())


def test_cauchy_schwarz_random():
    rng = np.random.default_rng(3)
    for _ in range(100):
        net = random_network(rng, max_tensors=4, max_dim=4)
        s = [t for t in range(net.n_tensors) if rng.random() < 0.5]
        lhs, rhs, ok = check_cauchy_schwarz(net, s)
        assert ok and rhs >= -1e-12


def test_lemma_bound_tight_dot_product():
    val, bound, ok = check_lemma_bound(dot_network([1, 1], [1, 1]))
    assert (val, bound, ok) == (2.0, 2.0, True)


def test_lemma_bound_random():
    rng = np.random.default_rng(4)
    for _ in range(100):
        assert check_lemma_bound(random_network(rng, max_nnz=3))[2]


def test_lemma_preconditions():
    with pytest.raises(BoundPrecondition):
        check_lemma_bound(dot_network([2, 0], [1, 1]))
    with pytest.raises(BoundPrecondition):
        check_lemma_bound(trace_network(np.eye(3)))


@pytest.mark.parametrize("seed", range(10))
def test_iterated_cuts_end_bipartite(seed):
    rng = np.random.default_rng(seed)
    while True:
        net = random_network(rng, max_tensors=3, max_dim=2)
        if net.n_tensors == 3 and net.edges:
            break
    stages = iterated_cuts(net)
    assert len(stages) == 3
    assert stages[-1].n_tensors == 8 * 3
    assert is_bipartite(stages[-1])


def test_iterated_cuts_triangle():
    tri = TensorNetwork(tuple(matrix_tensor(np.eye(2)) for _ in range(3)),
                        (((0, 1), (1, 0)), ((1, 1), (2, 0)), ((2, 1), (0, 0))))
    assert not is_bipartite(tri)
    assert is_bipartite(iterated_cuts(tri)[-1])


def test_loop_network_single_term():
    # The term closes its own loop: l, m, o = j, k, i.
    inst = Instance.from_terms(3, 3, [((0, 1, 2), 1.0)])
    assert contract(m3l2_loop_network(inst, 0, 1, 2)) == 1.0


def test_loop_network_hand_built_ring():
    inst = Instance.from_terms(3, 6, [((0, 1, 2), 1), ((0, 3, 4), 1), ((1, 4, 5), 1), ((2, 3, 5), 1)])
    # own loop (1) plus the ring through (0,3,4), (1,4,5), (2,3,5)
    assert contract(m3l2_loop_network(inst, 0, 1, 2)) == 2.0
    assert naive_triple_sum(inst, 0, 1, 2) == 2.0


def test_loop_networks_match_triple_sum_and_bound():
    for seed in range(4):
        for d in (2, 3, 4, 5, 6):
            inst = gen_max3lin2(12, d, seed=seed)
            total = 0.0
            for t, c in zip(inst.terms, inst.coeffs):
                for i, j, k in itertools.permutations(t):
                    net = m3l2_loop_network(inst, i, j, k)
                    val, bound, ok = check_lemma_bound(net)
                    assert val == naive_triple_sum(inst, i, j, k)
                    assert net.max_nnz() == 2 * d and ok
                    assert abs(val) <= (2 * d) ** 1.5
                    total += c * val
            assert total == pytest.approx(loop_sum(inst))


def test_loop_network_requires_term():
    inst = gen_max3lin2(9, 3, seed=0)
    missing = next(t for t in itertools.combinations(range(9), 3) if t not in inst.terms)
    with pytest.raises(ValueError):
        m3l2_loop_network(inst, *missing)


def test_network_json_roundtrip():
    net = random_network(np.random.default_rng(9))
    back = TensorNetwork.from_json(net.to_json())
    assert back == net
