import math

import numpy as np
import pytest

from drobandit import (
    BsgdConfig,
    Parameterization,
    Policy,
    PolicyParams,
    RobustCostTable,
    SupportSet,
    bsgd_learn,
    evaluate_policy,
    exact_opl,
    make_distribution,
    policy_probs,
    robust_cost_table,
    robust_policy_cost,
    smoothed_gradients,
    smoothed_learning_objective,
    synth_generate,
    true_robust_table,
    uniform_distribution,
)
from drobandit.data import canonical_rate_config, sample_dataset
from drobandit.errors import DimensionTooLarge, InvalidConfig, UnknownContext
from drobandit.opl import policy_costs_and_grads
from drobandit.transport import GroundCost

CLAMP = Parameterization.GROUP_PROB_CLAMP
SOFTMAX = Parameterization.GROUP_SOFTMAX


def two_context_table(m_hat=((0.2, 0.8), (0.9, 0.3)), epsilon_c=0.1):
    return RobustCostTable(np.asarray(m_hat, dtype=float), method="exact",
                           epsilon_c=epsilon_c)


# -- parameterizations -----------------------------------------------------------

def test_softmax_zero_theta_is_uniform():
    params = PolicyParams(np.zeros(3), np.array([0]), n_actions=4,
                          parameterization=SOFTMAX)
    assert np.allclose(policy_probs(params, 0), 0.25)


def test_clamp_two_actions():
    params = PolicyParams(np.array([0.8]), np.array([0]), n_actions=2,
                          parameterization=CLAMP)
    assert np.allclose(policy_probs(params, 0), [0.8, 0.2])


def test_probabilities_sum_to_one_random_thetas():
    rng = np.random.default_rng(3)
    grouping = np.array([0, 1, 1, 0])
    for _ in range(1000):
        k = int(rng.integers(2, 5))
        soft = PolicyParams(rng.normal(size=2 * (k - 1)) * 3, grouping, k, SOFTMAX)
        mat = np.vstack([policy_probs(soft, c) for c in range(4)])
        assert np.max(np.abs(mat.sum(axis=1) - 1.0)) <= 1e-12
        lead = rng.dirichlet(np.ones(k))[: k - 1]
        clamp = PolicyParams(np.tile(lead, 2), grouping, k, CLAMP)
        mat = np.vstack([policy_probs(clamp, c) for c in range(4)])
        assert np.max(np.abs(mat.sum(axis=1) - 1.0)) <= 1e-12


def test_unknown_context_rejected():
    params = PolicyParams(np.array([0.5]), np.array([0]), 2, CLAMP)
    with pytest.raises(UnknownContext):
        policy_probs(params, 5)


# -- per-context cost and gradient ------------------------------------------------

def test_cost_flat_table_has_zero_gradient():
    table = RobustCostTable(np.full((2, 2), 0.6), method="exact", epsilon_c=0.0)
    params = PolicyParams(np.array([0.3, 0.7]), np.array([0, 1]), 2, CLAMP)
    for ctx in (0, 1):
        value, grad = robust_policy_cost(params, table, ctx)
        assert value == pytest.approx(0.6, abs=1e-12)
        assert np.allclose(grad, 0.0, atol=1e-12)


def test_cost_linear_in_clamp_probability():
    table = RobustCostTable(np.array([[0.0, 1.0]]), method="exact", epsilon_c=0.0)
    params = PolicyParams(np.array([0.35]), np.array([0]), 2, CLAMP)
    value, grad = robust_policy_cost(params, table, 0)
    assert value == pytest.approx(0.65, abs=1e-12)
    assert grad[0] == pytest.approx(-1.0, abs=1e-12)


def _fd_gradient(fn, theta, h=1e-6):
    grad = np.empty_like(theta)
    for i in range(len(theta)):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (fn(up) - fn(down)) / (2 * h)
    return grad


def test_cost_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    grouping = np.array([0, 1, 0])
    for trial in range(100):
        k = int(rng.integers(2, 5))
        m_hat = rng.random((3, k))
        table = RobustCostTable(m_hat, method="exact", epsilon_c=0.0)
        param_kind = CLAMP if trial % 2 == 0 else SOFTMAX
        if param_kind is CLAMP:
            theta = np.concatenate([rng.dirichlet(np.ones(k))[: k - 1] * 0.9 + 0.02
                                    for _ in range(2)])
        else:
            theta = rng.normal(size=2 * (k - 1))
        ctx = int(rng.integers(0, 3))
        params = PolicyParams(theta, grouping, k, param_kind)
        _, grad = robust_policy_cost(params, table, ctx)

        def value_at(t):
            return robust_policy_cost(PolicyParams(t, grouping, k, param_kind), table, ctx)[0]

        fd = _fd_gradient(fn=value_at, theta=theta)
        err = np.max(np.abs(fd - grad)) / max(1.0, np.max(np.abs(grad)))
        assert err <= 1e-5


# -- smoothed gradients ------------------------------------------------------------

def full_objective(params, lam, table, cost_row, eta, epsilon_x):
    costs, _ = policy_costs_and_grads(params, table)
    z = eta * (costs - lam * cost_row)
    top = z.max()
    return epsilon_x * lam + (top + math.log(np.mean(np.exp(z - top)))) / eta


def test_full_enumeration_gradients_match_finite_differences():
    rng = np.random.default_rng(13)
    support = SupportSet.from_scalars(np.linspace(0.0, 1.0, 4))
    cmat = GroundCost.SQUARED_EUCLIDEAN.pairwise(support.points, support.points)
    grouping = np.array([0, 0, 1, 1])
    eta, eps_x = 8.0, 0.2
    for trial in range(30):
        table = RobustCostTable(rng.random((4, 2)), method="exact", epsilon_c=0.0)
        theta = rng.random(2) * 0.8 + 0.1
        lam = float(rng.random() * 2 + 0.05)
        params = PolicyParams(theta, grouping, 2, CLAMP)
        x_idx = int(rng.integers(0, 4))
        zeta = np.arange(4)
        _, theta_grad, lambda_grad = smoothed_gradients(
            params, lam, table, cmat[x_idx], zeta, eta, eps_x
        )

        fd_theta = _fd_gradient(
            lambda t: full_objective(PolicyParams(t, grouping, 2, CLAMP), lam, table,
                                     cmat[x_idx], eta, eps_x),
            theta,
        )
        h = 1e-6
        fd_lambda = (
            full_objective(params, lam + h, table, cmat[x_idx], eta, eps_x)
            - full_objective(params, lam - h, table, cmat[x_idx], eta, eps_x)
        ) / (2 * h)
        scale = max(1.0, np.max(np.abs(theta_grad)), abs(lambda_grad))
        assert np.max(np.abs(fd_theta - theta_grad)) / scale <= 1e-5
        assert abs(fd_lambda - lambda_grad) / scale <= 1e-5


def test_sampled_gradient_bias_shrinks_with_batch():
    rng = np.random.default_rng(17)
    support = SupportSet.from_scalars(np.linspace(0.0, 1.0, 6))
    cmat = GroundCost.SQUARED_EUCLIDEAN.pairwise(support.points, support.points)
    table = RobustCostTable(rng.random((6, 2)), method="exact", epsilon_c=0.0)
    params = PolicyParams(np.array([0.4]), np.zeros(6, dtype=int), 2, CLAMP)
    lam, eta, eps_x = 0.8, 8.0, 0.2
    x_idx = 2
    _, full_theta, full_lambda = smoothed_gradients(
        params, lam, table, cmat[x_idx], np.arange(6), eta, eps_x
    )
    full = np.append(full_theta, full_lambda)
    medians = []
    for m in (2, 8, 32, 128):
        errs = np.empty(2000)
        for r in range(2000):
            zeta = rng.integers(0, 6, size=m)
            _, tg, lg = smoothed_gradients(params, lam, table, cmat[x_idx], zeta, eta, eps_x)
            errs[r] = np.linalg.norm(np.append(tg, lg) - full)
        medians.append(float(np.median(errs)))
    assert all(a > b for a, b in zip(medians, medians[1:]))


# -- biased SGD ---------------------------------------------------------------------

def convex_fixture():
    support = SupportSet.from_scalars([0.0, 1.0])
    table = two_context_table()
    context_dist = make_distribution(support, [0.5, 0.5])
    policy0 = PolicyParams(np.array([0.5, 0.5]), np.array([0, 1]), 2, CLAMP)
    return support, table, context_dist, policy0


def test_bsgd_theta_frozen_when_costs_flat():
    support = SupportSet.from_scalars([0.0, 1.0])
    table = RobustCostTable(np.full((2, 2), 0.5), method="exact", epsilon_c=0.0)
    context_dist = uniform_distribution(support)
    policy0 = PolicyParams(np.array([0.3, 0.6]), np.array([0, 1]), 2, CLAMP)
    config = BsgdConfig(iterations=200, inner_batch=8, eta=5.0, epsilon_x=0.2, seed=0)
    params, _, trace = bsgd_learn(table, context_dist, support, config, policy0)
    assert np.array_equal(params.theta, policy0.theta)
    assert np.all(trace.theta == policy0.theta)


def test_bsgd_lambda_stays_in_bracket():
    support, table, context_dist, policy0 = convex_fixture()
    config = BsgdConfig(iterations=500, inner_batch=4, eta=5.0, epsilon_x=0.6,
                        seed=3, lambda0=0.0)
    _, lam, trace = bsgd_learn(table, context_dist, support, config, policy0)
    cap = float(table.m_hat.max()) / 0.6
    assert np.all(trace.lam >= 0.0)
    assert np.all(trace.lam <= cap + 1e-12)
    assert 0.0 <= lam <= cap + 1e-12


def test_bsgd_deterministic_given_seed():
    support, table, context_dist, policy0 = convex_fixture()
    config = BsgdConfig(iterations=300, inner_batch=8, eta=5.0, epsilon_x=0.2, seed=11)
    first = bsgd_learn(table, context_dist, support, config, policy0)
    second = bsgd_learn(table, context_dist, support, config, policy0)
    assert np.array_equal(first[0].theta, second[0].theta)
    assert first[1] == second[1]
    assert np.array_equal(first[2].objective, second[2].objective)


def test_bsgd_config_validation():
    with pytest.raises(InvalidConfig):
        BsgdConfig(iterations=0, inner_batch=8, eta=5.0, epsilon_x=0.2, seed=0)
    with pytest.raises(InvalidConfig):
        BsgdConfig(iterations=10, inner_batch=8, eta=-1.0, epsilon_x=0.2, seed=0)


def test_bsgd_converges_to_grid_optimum_small():
    # light version of the acceptance fixture
    support, table, context_dist, policy0 = convex_fixture()
    eta, eps_x = 5.0, 0.2
    config = BsgdConfig(iterations=4000, inner_batch=32, eta=eta, epsilon_x=eps_x, seed=7)
    params, lam, _ = bsgd_learn(table, context_dist, support, config, policy0)
    final = smoothed_learning_objective(params, lam, table, context_dist, eta, eps_x)
    _, best = exact_opl(table, context_dist, np.array([0, 1]), CLAMP, eps_x,
                        method="regularized", eta=eta, resolution=101)
    assert final - best <= 5e-2


# -- exact grid search ----------------------------------------------------------------

def test_exact_opl_flat_objective_keeps_first_grid_point():
    support = SupportSet.from_scalars([0.0, 1.0])
    table = RobustCostTable(np.full((2, 2), 0.4), method="exact", epsilon_c=0.0)
    params, value = exact_opl(table, uniform_distribution(support), np.array([0, 0]),
                              CLAMP, 0.1, resolution=11)
    assert params.theta[0] == 0.0  # earliest grid point wins ties
    assert value == pytest.approx(0.4, abs=1e-9)


def test_exact_opl_single_context_puts_mass_on_cheap_action():
    support = SupportSet.from_scalars([0.0])
    table = RobustCostTable(np.array([[0.0, 1.0]]), method="exact", epsilon_c=0.0)
    params, value = exact_opl(table, make_distribution(support, [1.0]),
                              np.array([0]), CLAMP, 0.7, resolution=101)
    assert params.theta[0] == pytest.approx(1.0)
    assert value == pytest.approx(0.0, abs=1e-9)


def test_exact_opl_beats_uniform_policy():
    rng = np.random.default_rng(23)
    support = SupportSet.from_scalars([0.0, 1.0])
    for _ in range(5):
        table = RobustCostTable(rng.random((2, 2)), method="exact", epsilon_c=0.0)
        context_dist = uniform_distribution(support)
        _, best = exact_opl(table, context_dist, np.array([0, 1]), CLAMP, 0.2,
                            resolution=41)
        uniform_value = evaluate_policy(Policy.uniform(2, 2), table, context_dist, 0.2).value
        assert best <= uniform_value + 1e-9


def test_exact_opl_dimension_limit():
    # 4 groups x 1 = 4 parameters exceeds the grid-search limit
    big_table = RobustCostTable(np.full((4, 2), 0.4), method="exact", epsilon_c=0.0)
    big_support = SupportSet.from_scalars([0.0, 1.0, 2.0, 3.0])
    with pytest.raises(DimensionTooLarge):
        exact_opl(big_table, uniform_distribution(big_support), np.arange(4), CLAMP, 0.1)


def test_exact_opl_smoothing_gap_bounded():
    # grid optima under the exact and smoothed evaluations stay within the
    # two-level lse sandwich of each other
    config = canonical_rate_config(n_contexts=4, n_xi=4, n_actions=2, seed=31, n=500)
    train, _, _ = synth_generate(config)
    grouping = np.array([0, 0, 1, 1])
    context_dist = train.empirical_context_distribution()
    for eta in (10.0, 100.0):
        exact_table = robust_cost_table(train, config.cost_model, 0.1, method="exact")
        smooth_table = robust_cost_table(train, config.cost_model, 0.1,
                                         method="regularized", eta=eta)
        _, v_exact = exact_opl(exact_table, context_dist, grouping, CLAMP, 0.2,
                               method="exact", resolution=21)
        _, v_smooth = exact_opl(smooth_table, context_dist, grouping, CLAMP, 0.2,
                                method="regularized", eta=eta, resolution=21)
        bound = (math.log(4) + math.log(4)) / eta
        assert abs(v_exact - v_smooth) <= bound + 1e-9


def test_learned_optimum_converges_with_sample_size():
    # |V-hat* - V*| shrinks roughly like n^(-1/2) on a small generator
    config = canonical_rate_config(n_contexts=3, n_xi=3, n_actions=2, seed=5)
    grouping = np.zeros(3, dtype=int)
    eps = 0.1
    true_table = true_robust_table(config, eps)
    _, v_star = exact_opl(true_table, config.context_dist, grouping, CLAMP, eps,
                          resolution=41)
    rng = np.random.default_rng(2)
    n_grid = [128, 512, 2048, 8192]
    medians = []
    for n in n_grid:
        errs = []
        for _ in range(30):
            ds = sample_dataset(config.context_dist, config.xi_dists,
                                config.behavior_policy, config.cost_model, n, rng)
            table = robust_cost_table(ds, config.cost_model, eps, impute_missing_ymax=True)
            _, v_hat = exact_opl(table, ds.empirical_context_distribution(), grouping,
                                 CLAMP, eps, resolution=41)
            errs.append(abs(v_hat - v_star))
        medians.append(float(np.median(errs)))
    slope = float(np.polyfit(np.log(n_grid), np.log(np.maximum(medians, 1e-12)), 1)[0])
    assert -0.85 <= slope <= -0.15
