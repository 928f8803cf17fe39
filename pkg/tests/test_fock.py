import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from partialwidths import (BasisBudgetError, LindbladDissipator, SectorOperator, SymmetryError,
                           annihilator, build_basis, one_body_operator, two_body_operator)
from partialwidths.fock import check_two_body_symmetry

from conftest import random_hermitian, random_two_body


def test_sector_sizes_are_binomial():
    b = build_basis(4, 2)
    assert {n: b.dim(n) for n in range(3)} == {0: 1, 1: 4, 2: 6}
    b1 = build_basis(1, 1)
    assert {n: b1.dim(n) for n in range(2)} == {0: 1, 1: 1}


def test_sector_ordering_is_ascending_integer():
    b = build_basis(6, 2)
    assert [format(int(s), "06b") for s in b.states(2)[:3]] == ["000011", "000101", "000110"]
    assert np.all(np.diff(b.states(2)) > 0)


def test_every_bitstring_in_exactly_one_sector():
    b = build_basis(5, 5)
    everything = np.sort(np.concatenate([b.states(n) for n in range(6)]))
    assert np.array_equal(everything, np.arange(32))


def test_budget_error_names_the_dimension():
    with pytest.raises(BasisBudgetError, match="dimension 1225"):
        build_basis(50, 2, budget=1000)


def test_sign_convention_anchor():
    b = build_basis(2, 2)
    both = b.index(2, [0b11])[0]
    c0 = b.annihilator(0, 2).dense()[:, both]
    c1 = b.annihilator(1, 2).dense()[:, both]
    only1 = b.index(1, [0b10])[0]
    only0 = b.index(1, [0b01])[0]
    assert c0[only1] == 1 and b.label(0b10) == "01"      # c_0|11> = +|01>
    assert c1[only0] == -1 and b.label(0b01) == "10"     # c_1|11> = -|10>


def test_annihilator_columns_have_at_most_one_signed_entry():
    b = build_basis(6, 3)
    for k, n in itertools.product(range(6), range(1, 4)):
        A = b.annihilator(k, n).dense()
        assert np.all(np.count_nonzero(A, axis=0) <= 1)
        assert set(np.unique(A)) <= {-1.0, 0.0, 1.0}
        # states without mode k are annihilated
        empty = (b.states(n) >> k) & 1 == 0
        assert not np.any(A[:, empty])


def test_adjoint_is_creator():
    b = build_basis(4, 2)
    c = b.annihilator(2, 2)
    assert np.array_equal(b.creator(2, 2).dense(), c.dense().T)
    assert np.array_equal(annihilator(b, 2, 2).dense(), c.dense())


def anticommutator_errors(M):
    """Largest deviation of {c_i, c_j^+} - delta_ij and {c_i, c_j} over all sectors."""
    b = build_basis(M, M)
    c = {(k, n): b.annihilator(k, n).dense() for k in range(M) for n in range(1, M + 1)}
    worst = 0.0
    for i, j in itertools.product(range(M), repeat=2):
        for n in range(M + 1):
            d = b.dim(n)
            acc = np.zeros((d, d))
            if n < M:
                acc += c[i, n + 1] @ c[j, n + 1].T
            if n > 0:
                acc += c[j, n].T @ c[i, n]
            worst = max(worst, np.max(np.abs(acc - (i == j) * np.eye(d))))
            if n >= 2:
                both = c[i, n - 1] @ c[j, n] + c[j, n - 1] @ c[i, n]
                worst = max(worst, np.max(np.abs(both)))
    return worst


@pytest.mark.parametrize("M", [2, 4, 5])
def test_anticommutation(M):
    assert anticommutator_errors(M) <= 1e-14


def test_identity_is_number_operator():
    b = build_basis(5, 3)
    for n in range(4):
        assert np.allclose(one_body_operator(b, np.eye(5), n).matrix, n * np.eye(b.dim(n)), atol=0)


def test_cap_diagonal_one_body_operator():
    b = build_basis(4, 2)
    g = np.array([0.0, 0.1, 0.5, 2.0])
    G = one_body_operator(b, np.diag(g), 2).matrix
    occupied = [[k for k in range(4) if (s >> k) & 1] for s in b.states(2)]
    assert np.allclose(np.diag(G), [g[o].sum() for o in occupied], atol=0)
    assert not np.any(G - np.diag(np.diag(G)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_free_spectrum_is_pairwise_sums(seed):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, 4)
    b = build_basis(4, 2)
    H = one_body_operator(b, h, 2).matrix
    e = np.linalg.eigvalsh(h)
    pairs = sorted(e[i] + e[j] for i, j in itertools.combinations(range(4), 2))
    assert np.allclose(np.linalg.eigvalsh(H), pairs, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hermiticity_transport(seed):
    rng = np.random.default_rng(seed)
    b = build_basis(5, 3)
    h = random_hermitian(rng, 5)
    V = random_two_body(rng, 5)
    for n in range(4):
        A = one_body_operator(b, h, n).matrix + two_body_operator(b, V, n).matrix
        scale = max(1.0, np.max(np.abs(A)))
        assert np.max(np.abs(A - A.conj().T)) <= 1e-12 * scale


def test_two_body_vanishes_below_two_particles():
    rng = np.random.default_rng(1)
    b = build_basis(4, 3)
    V = random_two_body(rng, 4)
    for n in (0, 1):
        assert not np.any(two_body_operator(b, V, n).matrix)
    for n in range(4):
        assert not np.any(two_body_operator(b, np.zeros((4,) * 4), n).matrix)


def test_pair_diagonal_interaction_on_two_particles():
    b = build_basis(4, 2)
    x = np.arange(4.0)
    v = np.exp(-np.subtract.outer(x, x) ** 2)
    Vmat = two_body_operator(b, v, 2).matrix
    expected = []
    for s in b.states(2):
        i, j = [k for k in range(4) if (s >> k) & 1]
        expected.append(v[i, j])
    assert np.allclose(Vmat, np.diag(expected), atol=1e-15)


def test_pair_diagonal_matches_dense_tensor():
    rng = np.random.default_rng(3)
    v = rng.normal(size=(5, 5))
    v = v + v.T
    V = np.zeros((5,) * 4)
    for p, q in itertools.product(range(5), repeat=2):
        V[p, q, p, q] = v[p, q]
    b = build_basis(5, 3)
    for n in (2, 3):
        assert np.allclose(two_body_operator(b, v, n).matrix, two_body_operator(b, V, n).matrix, atol=1e-13)


def test_two_body_symmetry_is_enforced():
    V = np.zeros((3,) * 4)
    V[0, 1, 0, 2] = 1.0
    with pytest.raises(SymmetryError):
        check_two_body_symmetry(V)
    with pytest.raises(SymmetryError):
        two_body_operator(build_basis(3, 2), V, 2)


def test_dimension_mismatch():
    b = build_basis(4, 2)
    with pytest.raises(ValueError):
        one_body_operator(b, np.eye(3), 1)
    with pytest.raises(ValueError):
        b.annihilator(4, 1)
    with pytest.raises(ValueError):
        b.annihilator(0, 3)


def test_dissipator_reconstructs_anti_hermitian_part():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    gamma = a @ a.conj().T
    d = LindbladDissipator(gamma)
    assert d.is_positive()
    b = build_basis(4, 3)
    for n in range(4):
        ref = one_body_operator(b, gamma, n).matrix
        out = d.reconstruct(b, n).matrix
        assert np.max(np.abs(out - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))
    assert LindbladDissipator.from_cap([0.0, 1.0]).min_eigenvalue() == 0.0
    with pytest.raises(ValueError):
        LindbladDissipator(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_sector_operator_round_trip():
    rng = np.random.default_rng(0)
    b = build_basis(4, 2)
    op = one_body_operator(b, random_hermitian(rng, 4), 2)
    back = SectorOperator.from_dict(op.to_dict())
    assert back.basis_hash == b.hash and back.sector == 2
    assert np.array_equal(back.matrix, op.matrix)
