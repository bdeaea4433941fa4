import math

import numpy as np
import pytest

from drobandit import (
    GroundCost,
    SupportSet,
    kl_divergence,
    make_distribution,
    split_radius_estimate,
    wasserstein_distance,
)
from drobandit.errors import DegenerateInput, TooFewSamples

from oracles import exact_transport_value


def scalar_dist(points, weights):
    return make_distribution(SupportSet.from_scalars(points), weights)


def test_ground_cost_properties():
    cost = GroundCost.SQUARED_EUCLIDEAN
    pts = np.array([[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]])
    cmat = cost.pairwise(pts, pts)
    assert np.allclose(np.diag(cmat), 0.0)
    assert np.allclose(cmat, cmat.T)
    assert np.all(cmat >= 0.0)
    assert cmat[0, 1] == pytest.approx((0 - 2) ** 2 + (1 + 1) ** 2)


def test_identical_distributions_have_zero_distance():
    p = scalar_dist([0.0, 1.0, 2.0], [0.2, 0.3, 0.5])
    d, plan = wasserstein_distance(p, p)
    assert d == pytest.approx(0.0, abs=1e-12)
    off_diag = plan.matrix - np.diag(np.diag(plan.matrix))
    assert np.all(np.abs(off_diag) <= 1e-12)


def test_point_masses():
    d, _ = wasserstein_distance(scalar_dist([0.0], [1.0]), scalar_dist([2.0], [1.0]))
    assert d == pytest.approx(4.0, abs=1e-12)


def test_two_by_two_derived_instance():
    p = scalar_dist([0.0, 1.0], [0.5, 0.5])
    q = scalar_dist([1.0, 2.0], [0.5, 0.5])
    d, plan = wasserstein_distance(p, q)
    assert d == pytest.approx(1.0, abs=1e-9)
    cmat = GroundCost.SQUARED_EUCLIDEAN.pairwise(p.support.points, q.support.points)
    assert plan.cost(cmat) == pytest.approx(d, abs=1e-9)


def test_empty_support_rejected():
    with pytest.raises((DegenerateInput, ValueError)):
        wasserstein_distance(
            scalar_dist([0.0], [1.0]),
            make_distribution(SupportSet(np.empty((0, 1))), np.empty(0)),
        )


def test_symmetry_and_plan_objective_random():
    rng = np.random.default_rng(3)
    for _ in range(30):
        m, n = rng.integers(2, 6, size=2)
        p = scalar_dist(np.sort(rng.normal(size=m) * 3), rng.dirichlet(np.ones(m)))
        q = scalar_dist(np.sort(rng.normal(size=n) * 3), rng.dirichlet(np.ones(n)))
        d_pq, plan = wasserstein_distance(p, q)
        d_qp, _ = wasserstein_distance(q, p)
        assert d_pq == pytest.approx(d_qp, abs=1e-9)
        cmat = GroundCost.SQUARED_EUCLIDEAN.pairwise(p.support.points, q.support.points)
        assert plan.cost(cmat) == pytest.approx(d_pq, abs=1e-9)
        assert np.allclose(plan.matrix.sum(axis=1), p.weights, atol=1e-9)
        assert np.allclose(plan.matrix.sum(axis=0), q.weights, atol=1e-9)


def test_identity_of_indiscernibles():
    rng = np.random.default_rng(5)
    support = SupportSet.from_scalars([0.0, 1.5, 4.0])
    p = make_distribution(support, rng.dirichlet(np.ones(3)))
    d, _ = wasserstein_distance(p, p)
    assert d <= 1e-12
    q = make_distribution(support, rng.dirichlet(np.ones(3)))
    if np.max(np.abs(p.weights - q.weights)) > 1e-6:
        d, _ = wasserstein_distance(p, q)
        assert d > 1e-9


def test_finite_on_disjoint_supports_where_kl_blows_up():
    support = SupportSet.from_scalars([50.0, 55.0, 60.0, 65.0])
    p = make_distribution(support, [0.5, 0.5, 0.0, 0.0])
    q = make_distribution(support, [0.5, 0.0, 0.5, 0.0])
    assert kl_divergence(q, p) == math.inf
    d, _ = wasserstein_distance(p, q)
    assert math.isfinite(d) and d > 0


def test_agreement_with_exact_rational_lp_oracle():
    rng = np.random.default_rng(17)
    cost = GroundCost.SQUARED_EUCLIDEAN
    for _ in range(200):
        m, n = rng.integers(1, 7, size=2)
        dim = int(rng.integers(1, 3))
        p_pts = rng.normal(size=(m, dim)) * 2
        q_pts = rng.normal(size=(n, dim)) * 2
        p = make_distribution(SupportSet(p_pts), rng.dirichlet(np.ones(m)))
        q = make_distribution(SupportSet(q_pts), rng.dirichlet(np.ones(n)))
        d, _ = wasserstein_distance(p, q, cost)
        cmat = cost.pairwise(p_pts, q_pts)
        exact = float(exact_transport_value(p.weights, q.weights, cmat))
        assert d == pytest.approx(exact, abs=1e-8)


def test_split_radius_identical_contexts():
    assert split_radius_estimate([1.0, 1.0, 1.0, 1.0], seed=0) == pytest.approx(0.0, abs=1e-12)


def _split_halves(values, seed):
    order = np.random.default_rng(seed).permutation(len(values))
    cut = (len(values) + 1) // 2
    arr = np.asarray(values, dtype=float)
    return sorted(arr[order[:cut]]), sorted(arr[order[cut:]])


def _seed_with_split(values, first_half):
    for seed in range(1000):
        got, _ = _split_halves(values, seed)
        if got == sorted(first_half):
            return seed
    raise AssertionError("no seed produced the requested split")


def test_split_radius_balanced_split_is_zero():
    seed = _seed_with_split([0.0, 0.0, 2.0, 2.0], [0.0, 2.0])
    assert split_radius_estimate([0.0, 0.0, 2.0, 2.0], seed=seed) == pytest.approx(0.0, abs=1e-12)


def test_split_radius_unbalanced_split_moves_half_the_mass():
    # halves {0,0} | {0,2}: move 0.5 mass across distance 2 at squared cost -> 2.0
    seed = _seed_with_split([0.0, 0.0, 0.0, 2.0], [0.0, 0.0])
    assert split_radius_estimate([0.0, 0.0, 0.0, 2.0], seed=seed) == pytest.approx(2.0, abs=1e-9)


def test_split_radius_too_few_samples():
    with pytest.raises(TooFewSamples):
        split_radius_estimate([0.0, 1.0, 2.0], seed=0)


def test_split_radius_odd_count_extra_goes_first():
    first, second = _split_halves([0.0, 1.0, 2.0, 3.0, 4.0], seed=9)
    assert len(first) == 3 and len(second) == 2
