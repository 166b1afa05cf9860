"""Exact subjective planning and the two LP routes to the same answer.

Walks through the benchmark instance: value iteration, the greedy best
response, and the primal (value-form) / dual (occupation-measure) linear
programs, checking strong duality and complementary slackness along the way.
"""

import numpy as np

from berknash import (
    benchmark3,
    best_response_policy,
    build_dual_lp,
    build_primal_lp,
    greedy_sets,
    occupation_of_policy,
    policy_from_occupation,
    simplex_solve,
    value_iteration,
)

m, conjectures = benchmark3()
print(f"benchmark: {m.num_states} states, {m.num_actions} actions, beta={m.discount}")

# --- value iteration under the true kernel ---------------------------------
v = value_iteration(m)
print("\noptimal values:", np.round(v, 6))
br = best_response_policy(m)
print("best response (deterministic):", np.argmax(br, axis=1))
print("greedy action sets:", [s.tolist() for s in greedy_sets(m, v)])

# --- primal LP: minimize sum of values subject to Bellman majorization ------
primal = simplex_solve(build_primal_lp(m))
print("\nprimal LP optimum:", round(primal.objective, 10))
print("   sum of VI values:", round(float(v.sum()), 10))
print("   agreement:", abs(primal.objective - v.sum()) < 1e-7)

# --- dual LP: occupation measures, initial-distribution weighted ------------
dual = simplex_solve(build_dual_lp(m))
print("\ndual LP optimum:", round(dual.objective, 10))
print("   mu0-weighted values:", round(float(m.initial_dist @ v), 10))
print("   agreement:", abs(dual.objective - float(m.initial_dist @ v)) < 1e-8)

# --- the dual optimum encodes the same policy -------------------------------
eta = dual.x.reshape(m.num_states, m.num_actions)
pi_from_dual = policy_from_occupation(eta)
print("\npolicy recovered from the dual occupation measure:")
print(np.round(pi_from_dual, 6))

# complementary slackness: occupied pairs sit on tight primal rows
lp = build_primal_lp(m)
slack = lp.constraints @ primal.x - lp.rhs
print("\ncomplementary slackness (eta > 0 -> tight row):")
for x in range(m.num_states):
    for a in range(m.num_actions):
        if eta[x, a] > 1e-8:
            print(f"  eta({x},{a})={eta[x, a]:.4f}  row slack={slack[x * 2 + a]:.2e}")

# round trip: the BR's own occupation measure attains the dual optimum
eta_br = occupation_of_policy(m, br)
print("\nBR occupation objective:", round(float((m.rewards * eta_br).sum()), 10))
print("total discounted mass 1/(1-beta):", round(float(eta_br.sum()), 6))
