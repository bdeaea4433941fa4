"""Two-step distributionally robust policy evaluation.

Step one solves, independently for every (context, action) pair, the robust
expected cost of that pair over a radius-`epsilon_c` ball around the pair's
empirical cost-observation distribution. Step two mixes those per-pair costs
through the target policy into a per-context cost and solves one more robust
problem over a radius-`epsilon_x` ball around the empirical context
distribution. Both steps use the same family of 1-d dual solvers (exact,
entropy-smoothed, or KL).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .distributions import DiscreteDistribution, SupportSet
from .duals import DualSolution, solve_kl_dual, solve_transport_dual
from .errors import (
    EmptyExperiment,
    IncompleteTable,
    MissingPair,
    NonPositiveEta,
    PolicyContextMismatch,
    ValidationError,
)
from .transport import GroundCost

METHODS = ("exact", "regularized", "kl")


@dataclass(frozen=True)
class Policy:
    """Action probabilities per context index, rows summing to one."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if p.ndim != 2:
            raise ValidationError("policy probabilities must be a (contexts, actions) matrix")
        if np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-12:
            raise ValidationError("each policy row must be a probability vector")

    @property
    def n_contexts(self) -> int:
        return int(self.probs.shape[0])

    @property
    def n_actions(self) -> int:
        return int(self.probs.shape[1])

    @staticmethod
    def uniform(n_contexts: int, n_actions: int) -> "Policy":
        return Policy(np.full((n_contexts, n_actions), 1.0 / n_actions))


@dataclass(frozen=True)
class CostModel:
    """Known cost function y[x, a, xi] on a finite observation support."""

    xi_support: SupportSet
    y: np.ndarray
    y_max: float

    def __post_init__(self):
        arr = np.asarray(self.y, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "y", arr)
        if arr.ndim != 3 or arr.shape[2] != len(self.xi_support):
            raise ValidationError(
                "cost model must have shape (contexts, actions, xi support size)"
            )
        if np.any(arr < 0) or np.any(arr > self.y_max + 1e-12):
            raise ValidationError(f"costs must lie in [0, {self.y_max}]")

    @staticmethod
    def identity(xi_support: SupportSet, n_contexts: int, n_actions: int,
                 y_max: float | None = None) -> "CostModel":
        """Cost equals the observed scalar itself, shared across all pairs."""
        if xi_support.dim != 1:
            raise ValidationError("identity costs need a scalar observation support")
        vals = xi_support.points[:, 0]
        if y_max is None:
            y_max = float(vals.max())
        y = np.broadcast_to(vals, (n_contexts, n_actions, len(vals))).copy()
        return CostModel(xi_support, y, y_max)


@dataclass(frozen=True)
class RobustCostTable:
    """Per-(context, action) robust expected costs."""

    m_hat: np.ndarray
    method: str
    epsilon_c: float
    eta: float | None = None

    def __post_init__(self):
        arr = np.asarray(self.m_hat, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "m_hat", arr)
        if arr.ndim != 2:
            raise IncompleteTable("table must be a (contexts, actions) matrix")
        if not np.all(np.isfinite(arr)):
            raise IncompleteTable("table has missing entries")

    @property
    def n_contexts(self) -> int:
        return int(self.m_hat.shape[0])

    @property
    def n_actions(self) -> int:
        return int(self.m_hat.shape[1])


def solve_shared_support(weights: np.ndarray, values: np.ndarray,
                         cost_matrix: np.ndarray, epsilon: float, method: str,
                         eta: float | None = None,
                         tol: float | None = None) -> DualSolution:
    """Dispatch to the chosen dual solver; atoms and candidates coincide."""
    if method == "exact":
        return solve_transport_dual(weights, values, cost_matrix, epsilon, tol)
    if method == "regularized":
        if eta is None or not eta > 0:
            raise NonPositiveEta("method 'regularized' needs a positive eta")
        return solve_transport_dual(weights, values, cost_matrix, epsilon, tol, eta=eta)
    if method == "kl":
        return solve_kl_dual(np.asarray(weights, float), np.asarray(values, float),
                             epsilon, tol)
    raise ValidationError(f"unknown method {method!r}; expected one of {METHODS}")


def robust_cost_table(dataset, cost_model: CostModel, epsilon_c: float,
                      method: str = "exact", eta: float | None = None,
                      tol: float | None = None, impute_missing_ymax: bool = False,
                      ground_cost: GroundCost = GroundCost.SQUARED_EUCLIDEAN,
                      n_jobs: int = 1) -> RobustCostTable:
    """Robust per-pair cost estimates from logged data.

    For every (context, action) pair the pair's observed xi samples become an
    empirical distribution over the full known observation support, and the
    chosen dual solver bounds the pair's expected cost over the
    radius-`epsilon_c` ball. Pairs are independent, so they may be solved
    concurrently (`n_jobs` threads); results are merged by index and are
    identical for any thread count.

    Pairs without any logged sample raise :class:`MissingPair` listing every
    offender, unless `impute_missing_ymax` opts into the conservative
    fallback that charges such pairs the maximum cost.
    """
    n_x, n_a = len(dataset.contexts), len(dataset.actions)
    if cost_model.y.shape[:2] != (n_x, n_a):
        raise ValidationError("cost model does not cover the dataset's context/action grid")
    n_xi = len(cost_model.xi_support)

    counts = np.zeros((n_x, n_a, n_xi), dtype=np.int64)
    np.add.at(counts, (dataset.context_idx, dataset.action_idx, dataset.xi_idx), 1)
    pair_totals = counts.sum(axis=2)
    missing = [(int(x), int(a)) for x, a in zip(*np.nonzero(pair_totals == 0))]
    if missing and not impute_missing_ymax:
        raise MissingPair(missing)

    m_hat = np.full((n_x, n_a), cost_model.y_max, dtype=np.float64)
    xi_costs = ground_cost.pairwise(cost_model.xi_support.points, cost_model.xi_support.points)

    def solve_pair(pair):
        x, a = pair
        weights = counts[x, a].astype(np.float64) / pair_totals[x, a]
        return solve_shared_support(
            weights, cost_model.y[x, a], xi_costs, epsilon_c, method, eta, tol
        ).value

    pairs = [(x, a) for x in range(n_x) for a in range(n_a) if pair_totals[x, a] > 0]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(solve_pair, pairs))
    else:
        results = [solve_pair(p) for p in pairs]
    for (x, a), value in zip(pairs, results):
        m_hat[x, a] = value
    return RobustCostTable(m_hat, method=method, epsilon_c=epsilon_c, eta=eta)


def policy_cost_per_context(policy: Policy, table: RobustCostTable) -> np.ndarray:
    """Mix the table through the policy: expected robust cost at each context."""
    if policy.probs.shape != table.m_hat.shape:
        raise PolicyContextMismatch(
            f"policy grid {policy.probs.shape} vs table grid {table.m_hat.shape}"
        )
    return np.einsum("xa,xa->x", policy.probs, table.m_hat)


def evaluate_policy(policy: Policy, table: RobustCostTable,
                    context_dist: DiscreteDistribution, epsilon_x: float,
                    method: str = "exact", eta: float | None = None,
                    tol: float | None = None,
                    ground_cost: GroundCost = GroundCost.SQUARED_EUCLIDEAN) -> DualSolution:
    """Robust policy value: outer robust aggregation of the per-pair table.

    The per-context cost is computed for every point of the context support,
    including contexts never observed, because the inner maximization of the
    dual ranges over the whole known support.
    """
    if len(context_dist.support) != table.n_contexts:
        raise PolicyContextMismatch(
            f"context support size {len(context_dist.support)} vs table rows {table.n_contexts}"
        )
    per_context = policy_cost_per_context(policy, table)
    cmat = ground_cost.pairwise(context_dist.support.points, context_dist.support.points)
    return solve_shared_support(
        context_dist.weights, per_context, cmat, epsilon_x, method, eta, tol
    )


@dataclass(frozen=True)
class RateResult:
    """Median estimation errors per sample size plus the log-log slope."""

    rows: tuple
    slope: float


def rate_experiment(config, n_grid, trials: int, seed: int,
                    policy: Policy | None = None,
                    epsilon_x: float = 0.1, epsilon_c: float = 0.1,
                    method: str = "exact", eta: float | None = None,
                    tol: float | None = None) -> RateResult:
    """Monte-Carlo convergence check of the estimated policy value.

    The reference value is computed once by running both robust steps on the
    generator's true distributions; each trial then redraws a dataset of the
    given size from those same distributions and re-estimates. Reported per
    sample size is the median absolute error over the trials, plus the
    least-squares slope of log(median error) against log(n). Missing pairs in
    a drawn dataset (possible at tiny n) fall back to the conservative
    maximum-cost imputation rather than aborting the experiment.
    """
    from .data import sample_dataset  # local import to avoid a module cycle

    n_grid = [int(n) for n in n_grid]
    if trials <= 0 or not n_grid:
        raise EmptyExperiment("need at least one sample size and one trial")
    if policy is None:
        policy = Policy.uniform(len(config.context_dist.support), len(config.xi_dists[0]))

    true_table = true_robust_table(config, epsilon_c, method, eta, tol)
    v_true = evaluate_policy(
        policy, true_table, config.context_dist, epsilon_x, method, eta, tol
    ).value

    rng = np.random.default_rng(seed)
    rows = []
    errors_by_n = []
    for n in n_grid:
        errs = np.empty(trials)
        for t in range(trials):
            ds = sample_dataset(
                config.context_dist, config.xi_dists, config.behavior_policy,
                config.cost_model, n, rng,
            )
            table = robust_cost_table(
                ds, config.cost_model, epsilon_c, method, eta, tol,
                impute_missing_ymax=True,
            )
            p_hat = DiscreteDistribution(
                config.context_dist.support,
                np.bincount(ds.context_idx, minlength=len(config.context_dist.support))
                / ds.n,
            )
            v_hat = evaluate_policy(policy, table, p_hat, epsilon_x, method, eta, tol).value
            errs[t] = abs(v_hat - v_true)
        med = float(np.median(errs))
        rows.append((n, med))
        errors_by_n.append(med)
    slope = float(np.polyfit(np.log(np.asarray(n_grid, float)),
                             np.log(np.maximum(errors_by_n, 1e-300)), 1)[0])
    return RateResult(rows=tuple(rows), slope=slope)


def true_robust_table(config, epsilon_c: float, method: str = "exact",
                      eta: float | None = None, tol: float | None = None,
                      ground_cost: GroundCost = GroundCost.SQUARED_EUCLIDEAN) -> RobustCostTable:
    """Robust cost table computed from a generator's true xi distributions."""
    n_x = len(config.context_dist.support)
    n_a = len(config.xi_dists[0])
    m_hat = np.empty((n_x, n_a))
    xi_costs = ground_cost.pairwise(
        config.cost_model.xi_support.points, config.cost_model.xi_support.points
    )
    for x in range(n_x):
        for a in range(n_a):
            dist = config.xi_dists[x][a]
            if not dist.support.matches(config.cost_model.xi_support):
                raise ValidationError("xi distributions must live on the cost model support")
            m_hat[x, a] = solve_shared_support(
                dist.weights, config.cost_model.y[x, a], xi_costs, epsilon_c, method, eta, tol
            ).value
    return RobustCostTable(m_hat, method=method, epsilon_c=epsilon_c, eta=eta)
