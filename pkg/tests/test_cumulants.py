import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from repdyn.cumulants import (
    CumulantMatrix,
    Family,
    deterministic_bound_gap,
    load_cumulants,
    mc_optimal_cumulants,
    random_cumulant_bound,
    sample_cumulants,
    sample_haar,
    sample_indicator,
    sample_normalized_gaussian,
    save_cumulants,
    td_optimal_cumulants,
    truncation_bound_gap,
)
from repdyn.linalg import is_invariant_subspace
from repdyn.mdp import make_four_room, random_reversible_mdp


def test_family_parse():
    assert Family.parse("normalized-gaussian") is Family.NORMALIZED_GAUSSIAN
    with pytest.raises(ValueError):
        Family.parse("cauchy")


def test_cumulant_matrix_validation():
    with pytest.raises(ValueError):
        CumulantMatrix(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        CumulantMatrix(np.full((3, 1), 0.5), Family.INDICATOR)
    with pytest.raises(ValueError):
        CumulantMatrix(np.ones((3, 2)), Family.HAAR)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), S=st.integers(4, 30), T=st.integers(1, 4))
def test_samplers_respect_family_invariants(seed, S, T):
    H = sample_haar(seed, S, T).g
    np.testing.assert_allclose(H.T @ H, np.eye(T), atol=1e-10)
    N = sample_normalized_gaussian(seed, S, T).g
    np.testing.assert_allclose(np.linalg.norm(N, axis=0), 1.0, atol=1e-12)
    I = sample_indicator(seed, S, T).g
    assert set(np.unique(I)) <= {0.0, 1.0} and I.any(axis=0).all()


def test_samplers_are_seeded():
    a = sample_cumulants(Family.GAUSSIAN, 3, 10, 4).g
    b = sample_cumulants("gaussian", 3, 10, 4).g
    c = sample_cumulants("gaussian", 4, 10, 4).g
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_optimal_cumulants():
    m = random_reversible_mdp(1, 12)
    B = mc_optimal_cumulants(m, 4).g
    np.testing.assert_allclose(B.T @ B, np.eye(4), atol=1e-10)
    assert is_invariant_subspace(td_optimal_cumulants(m, 4).g, m.sr_matrix, 1e-8)


def test_bound_decreases_with_tasks_on_four_room():
    m = make_four_room()
    sv = np.linalg.svd(np.sqrt(m.state_weights)[:, None] * m.sr_matrix, compute_uv=False)
    bounds = [random_cumulant_bound(sv, 5, T) for T in (10, 20, 40, 80)]
    assert all(b1 >= b2 for b1, b2 in zip(bounds, bounds[1:]))
    with pytest.raises(ValueError):
        random_cumulant_bound(sv, 5, 6)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_range_finder_inequalities_hold(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((10, 10))
    d = int(rng.integers(1, 10))
    assert deterministic_bound_gap(A, rng.standard_normal((10, int(rng.integers(d, 11)))), d) >= -1e-10
    assert truncation_bound_gap(A, rng.standard_normal((10, int(rng.integers(1, 11)))), d) >= -1e-10


def test_save_load_roundtrip(tmp_path):
    cm = sample_haar(2, 9, 3)
    save_cumulants(cm, tmp_path / "g.txt")
    back = load_cumulants(tmp_path / "g.txt")
    assert back.family is Family.HAAR and np.array_equal(back.g, cm.g)
