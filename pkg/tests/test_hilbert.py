import math

import numpy as np
import pytest

import effham as eh
from effham.errors import DimensionCapError, SpaceMismatchError


def test_basis_dimensions():
    assert eh.enumerate_basis([1], eh.EnsembleSpec(2, 1)).dim == 4
    assert eh.enumerate_basis([], eh.EnsembleSpec(3, 2)).dim == 6
    assert eh.enumerate_basis([3, 2], eh.EnsembleSpec(4, 1)).dim == 4 * 3 * 4


def test_ensemble_dimension_formula():
    for atoms in (1, 2, 3, 5):
        dim = eh.EnsembleSpec(3, atoms).dim
        assert dim == (atoms + 1) * (atoms + 2) // 2


def test_dimension_cap():
    with pytest.raises(DimensionCapError):
        eh.enumerate_basis([10000], eh.EnsembleSpec(2, 3))
    # custom cap
    with pytest.raises(DimensionCapError):
        eh.enumerate_basis([5], eh.EnsembleSpec(2, 1), cap=10)


def test_basis_roundtrip_is_bijection():
    space = eh.enumerate_basis([2, 3], eh.EnsembleSpec(3, 2))
    seen = set()
    for i in range(space.dim):
        photons, occ = space.photons(i), space.occupations(i)
        assert sum(occ) == 2
        assert space.index(photons, occ) == i
        seen.add((photons, occ))
    assert len(seen) == space.dim


def test_basis_order_modes_slowest():
    space = eh.enumerate_basis([1], eh.EnsembleSpec(2, 1))
    assert space.labels == (((0,), (1, 0)), ((0,), (0, 1)),
                            ((1,), (1, 0)), ((1,), (0, 1)))


def test_annihilator_matrix_elements():
    space = eh.enumerate_basis([5], eh.EnsembleSpec(2, 1))
    a = eh.annihilator(space, 0)
    vac = eh.basis_state(space, (0,), level=1)
    assert np.linalg.norm(a.apply(vac)) == 0.0
    four = eh.basis_state(space, (4,), level=1)
    three = eh.basis_state(space, (3,), level=1)
    assert three.conj() @ a.apply(four) == pytest.approx(2.0)


def test_canonical_commutator_below_truncation():
    space = eh.enumerate_basis([5], eh.EnsembleSpec(2, 1))
    a = eh.annihilator(space, 0)
    comm = eh.commutator(a, a.dag())
    # exact identity on every state below the cutoff
    for n in range(5):
        for level in (1, 2):
            v = eh.basis_state(space, (n,), level=level)
            assert np.allclose(comm.apply(v), v, atol=1e-12)


def test_annihilator_rejects_bad_mode():
    space = eh.enumerate_basis([2], eh.EnsembleSpec(2, 1))
    with pytest.raises(ValueError):
        eh.annihilator(space, 1)


def test_collective_single_atom_transition():
    space = eh.enumerate_basis([], eh.EnsembleSpec(2, 1))
    s12 = eh.collective_operator(space, 1, 2)
    lvl1 = eh.basis_state(space, (), level=1)
    lvl2 = eh.basis_state(space, (), level=2)
    assert np.allclose(s12.apply(lvl1), lvl2, atol=1e-15)
    assert np.linalg.norm(s12.apply(lvl2)) == 0.0


@pytest.mark.parametrize("levels,atoms", [(2, 1), (2, 3), (3, 2), (4, 1)])
def test_populations_sum_to_atom_count(levels, atoms):
    space = eh.enumerate_basis([], eh.EnsembleSpec(levels, atoms))
    total = eh.zero(space)
    for i in range(1, levels + 1):
        total = total + eh.collective_operator(space, i, i)
    assert (total - atoms * eh.identity(space)).norm() <= 1e-12


def test_collective_commutator_two_level():
    space = eh.enumerate_basis([], eh.EnsembleSpec(2, 2))
    s12 = eh.collective_operator(space, 1, 2)
    s21 = eh.collective_operator(space, 2, 1)
    s11 = eh.collective_operator(space, 1, 1)
    s22 = eh.collective_operator(space, 2, 2)
    assert (eh.commutator(s12, s21) - (s22 - s11)).norm() <= 1e-12


@pytest.mark.parametrize("levels", [2, 3, 4])
@pytest.mark.parametrize("atoms", [1, 2, 3])
def test_collective_algebra_relations(levels, atoms):
    # [S^{ij}, S^{kl}] = d_{il} S^{kj} - d_{jk} S^{il} in the transition
    # convention S^{ij}: i -> j
    space = eh.enumerate_basis([], eh.EnsembleSpec(levels, atoms))
    ops = {(i, j): eh.collective_operator(space, i, j)
           for i in range(1, levels + 1) for j in range(1, levels + 1)}
    for (i, j), sij in ops.items():
        for (k, l), skl in ops.items():
            expected = eh.zero(space)
            if i == l:
                expected = expected + ops[(k, j)]
            if j == k:
                expected = expected - ops[(i, l)]
            assert (eh.commutator(sij, skl) - expected).norm() <= 1e-12


@pytest.mark.parametrize("atoms", [1, 2, 3, 10])
def test_spin_ladder_matrix_elements(atoms):
    space = eh.enumerate_basis([], eh.EnsembleSpec(2, atoms))
    s3, sp, sm = eh.spin_operators(space)
    j = atoms / 2
    assert (eh.commutator(s3, sp) - sp).norm() <= 1e-12
    assert (eh.commutator(sp, sm) - 2 * s3).norm() <= 1e-12
    # ladder amplitudes against the closed form
    for m_int in range(atoms):
        m = -j + m_int
        occ = (atoms - m_int, m_int)          # m = (k2 - k1)/2
        occ_up = (atoms - m_int - 1, m_int + 1)
        v = eh.basis_state(space, (), occupations=occ)
        w = eh.basis_state(space, (), occupations=occ_up)
        amp = w.conj() @ sp.apply(v)
        assert amp == pytest.approx(math.sqrt((j - m) * (j + m + 1)), abs=1e-12)


def test_operator_space_mismatch():
    s1 = eh.enumerate_basis([1], eh.EnsembleSpec(2, 1))
    s2 = eh.enumerate_basis([2], eh.EnsembleSpec(2, 1))
    with pytest.raises(SpaceMismatchError):
        eh.commutator(eh.identity(s1), eh.identity(s2))


def test_operator_matrix_is_immutable():
    space = eh.enumerate_basis([1], eh.EnsembleSpec(2, 1))
    op = eh.identity(space)
    with pytest.raises(ValueError):
        op.matrix[0, 0] = 5.0
    with pytest.raises(AttributeError):
        op.matrix = np.zeros((4, 4))


def test_commutator_with_self_vanishes(rng):
    space = eh.enumerate_basis([2], eh.EnsembleSpec(2, 1))
    mat = rng.normal(size=(space.dim, space.dim)) + 1j * rng.normal(size=(space.dim, space.dim))
    op = eh.OperatorMatrix(space, mat)
    assert eh.commutator(op, op).norm() == 0.0


def test_hermiticity_predicates():
    space = eh.enumerate_basis([1], eh.EnsembleSpec(2, 1))
    h = eh.number_operator(space, 0)
    assert h.is_hermitian()
    a = eh.annihilator(space, 0)
    assert not a.is_hermitian()
    u = eh.matrix_exponential(1j * h)
    assert u.is_unitary(1e-12)
