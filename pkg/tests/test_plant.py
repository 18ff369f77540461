import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.errors import ModelEvaluationError, SingularGram
from artifact.plant import (
    ChainStructure,
    PlantModel,
    PlantState,
    chain_matrices,
    friend,
    omega_l_min_eig,
    plant_rhs,
)
from artifact.scenarios import VtolParams, vtol_plant


def make_model(structure, q=None, Omega=None, nw=1):
    ne, nu, n0 = structure.ne, structure.nu, structure.n0
    return PlantModel(
        structure=structure,
        f0=lambda w, x: np.zeros(n0),
        b=lambda w, x: np.zeros((n0, nu)),
        q=q or (lambda w, x: np.zeros(ne)),
        Omega=Omega or (lambda w, x: np.zeros((ne, nu))),
        s=lambda w: np.zeros(nw),
        nw=nw,
    )


def test_chain_matrices_two():
    C, F, H = chain_matrices(ChainStructure(0, 1, 1, (2,)))
    assert np.array_equal(F, [[0, 1], [0, 0]])
    assert np.array_equal(H, [[0], [1]])
    assert np.array_equal(C, [[1, 0]])


def test_chain_matrices_degenerate():
    C, F, H = chain_matrices(ChainStructure(0, 1, 1, (1,)))
    assert np.array_equal(F, [[0]])
    assert np.array_equal(H, [[1]])
    assert np.array_equal(C, [[1]])


def test_chain_matrices_blocks():
    C, F, H = chain_matrices(ChainStructure(0, 2, 2, (2, 1)))
    assert np.array_equal(F, [[0, 1, 0], [0, 0, 0], [0, 0, 0]])
    assert np.array_equal(H, [[0, 0], [1, 0], [0, 1]])
    assert np.array_equal(C, [[1, 0, 0], [0, 0, 1]])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=3))
def test_relative_degree_structure(lengths):
    st_ = ChainStructure(0, len(lengths), len(lengths), tuple(lengths))
    C, F, H = chain_matrices(st_)
    for i, n in enumerate(lengths):
        for k in range(n):
            val = (C @ np.linalg.matrix_power(F, k) @ H)[i, i]
            assert val == (1.0 if k == n - 1 else 0.0)


def test_structure_validation():
    with pytest.raises(ValueError):
        ChainStructure(0, 2, 1, (1, 1))
    with pytest.raises(ValueError):
        ChainStructure(0, 1, 1, (0,))
    with pytest.raises(ValueError):
        ChainStructure(0, 2, 2, (1,))


def test_plant_rhs_all_zero():
    st_ = ChainStructure(1, 1, 1, (2,))
    m = make_model(st_)
    out = plant_rhs(m, PlantState.zeros(st_, 1), [0.0])
    assert np.array_equal(out.pack(), np.zeros(5))


def test_plant_rhs_chain_example():
    st_ = ChainStructure(0, 1, 1, (2,))
    m = make_model(st_, Omega=lambda w, x: np.ones((1, 1)))
    out = plant_rhs(m, PlantState([0.0], [], [1.0, 2.0], [3.0]), [4.0])
    assert np.array_equal(out.chi, [2.0, 3.0])
    assert np.array_equal(out.zeta, [4.0])


def test_plant_rhs_vtol_origin_at_rest():
    m = vtol_plant(VtolParams())
    out = plant_rhs(m, PlantState(np.zeros(2), [], np.zeros(3), np.zeros(1)), [0.0])
    assert np.array_equal(out.pack(), np.zeros(6))


def test_plant_rhs_linear_in_u():
    rng = np.random.default_rng(3)
    st_ = ChainStructure(1, 1, 2, (2,))
    m = PlantModel(st_, lambda w, x: np.array([np.sin(x[0])]), lambda w, x: np.array([[1.0, x[1]]]),
                   lambda w, x: np.array([x[2] ** 2]), lambda w, x: np.array([[2.0, np.cos(x[0])]]),
                   lambda w: -w, 1)
    s = PlantState(rng.standard_normal(1), rng.standard_normal(1), rng.standard_normal(2), rng.standard_normal(1))
    u1, u2 = rng.standard_normal(2), rng.standard_normal(2)
    lhs = plant_rhs(m, s, u1).pack() + plant_rhs(m, s, u2).pack() - plant_rhs(m, s, np.zeros(2)).pack()
    assert np.allclose(lhs, plant_rhs(m, s, u1 + u2).pack(), rtol=0, atol=1e-14)


def test_plant_rhs_reports_nonfinite_map():
    st_ = ChainStructure(0, 1, 1, (1,))
    m = make_model(st_, q=lambda w, x: np.array([np.nan]))
    with pytest.raises(ModelEvaluationError) as info:
        plant_rhs(m, PlantState.zeros(st_, 1), [0.0])
    assert "q" in str(info.value)


def _friend_of(q, Om):
    ne, nu = Om.shape
    st_ = ChainStructure(0, ne, nu, (1,) * ne)
    m = make_model(st_, q=lambda w, x: q, Omega=lambda w, x: Om)
    return friend(m, np.zeros(1), PlantState.zeros(st_, 1))


def test_friend_scalar():
    assert np.allclose(_friend_of(np.array([4.0]), np.array([[2.0]])), [-2.0], atol=1e-15)


def test_friend_wide():
    u = _friend_of(np.array([2.0]), np.array([[1.0, 1.0]]))
    assert np.allclose(u, [-1.0, -1.0], atol=1e-15)


def test_friend_zero_q():
    assert np.array_equal(_friend_of(np.zeros(1), np.array([[3.0, 1.0]])), [0.0, 0.0])


def test_friend_rank_deficient():
    with pytest.raises(SingularGram):
        _friend_of(np.ones(2), np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_friend_annihilates_random():
    rng = np.random.default_rng(11)
    for _ in range(50):
        ne = int(rng.integers(1, 4))
        nu = ne + int(rng.integers(0, 3))
        Om = rng.standard_normal((ne, nu))
        q = rng.standard_normal(ne)
        u = _friend_of(q, Om)
        assert np.max(np.abs(q + Om @ u)) <= 1e-10


def test_omega_l_min_eig():
    assert omega_l_min_eig(np.array([[-2.0]]), np.array([[-1.0]])) == pytest.approx(4.0)
