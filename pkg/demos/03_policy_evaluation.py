"""Two-step robust policy evaluation on a synthetic logged dataset.

A synthetic environment with a context shift between training and deployment:
the training log under-represents the high-risk context. The robust estimate
at a data-driven radius stays above the realized deployment value, while the
plain plug-in estimate is over-optimistic.
"""
import numpy as np

from drobandit import (
    Policy,
    evaluate_policy,
    robust_cost_table,
    split_radius_estimate,
    synth_generate,
    true_robust_table,
)
from drobandit.data import ShiftSpec, canonical_rate_config
import dataclasses

# environment: 4 contexts, 2 actions, identity costs on a [0, 1] grid;
# the shift halves the weight of the most expensive context in training
base = canonical_rate_config(n_contexts=4, n_xi=5, n_actions=2, seed=11, n=4000)
config = dataclasses.replace(
    base, shift=ShiftSpec(context_scale={3: 0.5}), shift_target="train"
)
train, test, truth = synth_generate(config)
print(f"train: {train.n} records, min pair frequency "
      f"{train.diagnostics.min_pair_frequency:.4f}")

policy = Policy.uniform(4, 2)
cost_model = truth.cost_model

# how much finite-sample uncertainty is there? split the training contexts
contexts_seen = train.contexts.points[train.context_idx]
radius = split_radius_estimate(contexts_seen, seed=0)
print(f"split-sample context radius: {radius:.5f}")

table_plugin = robust_cost_table(train, cost_model, epsilon_c=0.0)
table_robust = robust_cost_table(train, cost_model, epsilon_c=0.05)
context_dist = train.empirical_context_distribution()

plugin = evaluate_policy(policy, table_plugin, context_dist, epsilon_x=0.0).value
print(f"\nplug-in estimate (no robustness): {plugin:.4f}")

print("\nrobust estimates as the context radius grows:")
for eps_x in (radius, 2 * radius, 5 * radius, 10 * radius):
    robust = evaluate_policy(policy, table_robust, context_dist, epsilon_x=eps_x)
    print(f"  eps_x {eps_x:.4f}: value {robust.value:.4f} (lambda* {robust.lambda_star:.2f})")

# the deployment side: evaluate against the true (unshifted) environment
true_table = true_robust_table(truth, epsilon_c=0.0)
deployed = evaluate_policy(policy, true_table, truth.context_dist, epsilon_x=0.0).value
print(f"\nrealized value under the deployment distribution: {deployed:.4f}")
print("the plug-in under-estimates it; the robust value at a radius comfortably")
print("above the split estimate covers it.")

# per-pair table, the intermediate artifact worth inspecting
print("\nrobust per-pair costs m_hat(x, a) at eps_c = 0.05:")
print(np.round(table_robust.m_hat, 4))
