"""Exact subjective planning: Bellman backups, value iteration, greedy best
responses, and the primal/dual LP characterization of the optimal value.

All functions take an :class:`~berknash.mdp.MDPInstance` whose kernel is the
kernel the planner *believes* — pass ``m.with_kernel(Q)`` to plan under a
conjecture Q instead of the true dynamics.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .mdp import MDPInstance, uniform_policy
from .simplex import LinearProgram

DEFAULT_VI_TOL = 1e-10
DEFAULT_ACT_TOL = 1e-8


def backup_values(m: MDPInstance, v: np.ndarray) -> np.ndarray:
    """One-step lookahead table q(x,a) = r(x,a) + beta sum_y Q(y|x,a) v(y)."""
    return m.rewards + m.discount * (m.kernel @ np.asarray(v, dtype=float))


def bellman_operator(m: MDPInstance, v: np.ndarray) -> np.ndarray:
    """Hard optimality backup (Tv)(x) = max_a q(x,a)."""
    return backup_values(m, v).max(axis=1)


def value_iteration(
    m: MDPInstance, vi_tol: float = DEFAULT_VI_TOL, max_iters: int = 10**6
) -> np.ndarray:
    """Iterate the Bellman operator from v=0 until the fixed point is within
    ``vi_tol`` in sup norm.

    The stopping threshold vi_tol*(1-beta)/(2*beta) converts the successive-
    iterate gap into that guarantee via the contraction modulus.
    """
    if vi_tol <= 0.0:
        raise ValueError(f"vi_tol must be positive, got {vi_tol}")
    beta = m.discount
    threshold = vi_tol * (1.0 - beta) / (2.0 * beta)
    v = np.zeros(m.num_states)
    for _ in range(max_iters):
        v_next = bellman_operator(m, v)
        gap = np.abs(v_next - v).max()
        v = v_next
        if gap <= threshold:
            return v
    raise RuntimeError(
        f"value iteration did not converge in {max_iters} iterations "
        f"(vi_tol={vi_tol:g} may be below float precision)"
    )


def greedy_sets(
    m: MDPInstance, v: np.ndarray, act_tol: float = DEFAULT_ACT_TOL
) -> list[np.ndarray]:
    """Per-state actions whose backup is within ``act_tol`` of the best."""
    q = backup_values(m, v)
    best = q.max(axis=1, keepdims=True)
    return [np.flatnonzero(q[x] >= best[x] - act_tol) for x in range(m.num_states)]


def best_response_policy(
    m: MDPInstance,
    tie_rule: str = "lowest",
    vi_tol: float = DEFAULT_VI_TOL,
    act_tol: float = DEFAULT_ACT_TOL,
) -> np.ndarray:
    """Subjectively optimal stationary policy under ``m``'s kernel.

    ``tie_rule`` "lowest" picks the smallest greedy action index (the
    reproducible default); "uniform" spreads evenly over the greedy set.
    """
    if tie_rule not in ("lowest", "uniform"):
        raise ValueError(f"unknown tie_rule {tie_rule!r}")
    v = value_iteration(m, vi_tol=vi_tol)
    sets = greedy_sets(m, v, act_tol=act_tol)
    pi = np.zeros((m.num_states, m.num_actions))
    for x, actions in enumerate(sets):
        if tie_rule == "lowest":
            pi[x, actions[0]] = 1.0
        else:
            pi[x, actions] = 1.0 / actions.size
    return pi


def build_primal_lp(m: MDPInstance) -> LinearProgram:
    """Value-form LP: minimize sum_x v(x) subject to v majorizing every backup.

    Variables are the S state values (free); one ">=" row per (x,a):
    v(x) - beta sum_y Q(y|x,a) v(y) >= r(x,a). Rows are ordered x-major.
    """
    S, A = m.num_states, m.num_actions
    rows = np.zeros((S * A, S))
    rhs = np.zeros(S * A)
    for x in range(S):
        for a in range(A):
            i = x * A + a
            rows[i] = -m.discount * m.kernel[x, a]
            rows[i, x] += 1.0
            rhs[i] = m.rewards[x, a]
    return LinearProgram(
        objective=np.ones(S),
        constraints=rows,
        rhs=rhs,
        senses=(">=",) * (S * A),
        lower_bounds=np.full(S, -np.inf),
        maximize=False,
    )


def build_dual_lp(m: MDPInstance) -> LinearProgram:
    """Occupation-measure LP: maximize sum r(x,a) eta(x,a) under the
    discounted flow-balance rows, one per state.

    Variables eta(x,a) >= 0 are ordered x-major; row x reads
    sum_a eta(x,a) - beta sum_{x',a'} Q(x|x',a') eta(x',a') = mu0(x).
    """
    S, A = m.num_states, m.num_actions
    n = S * A
    rows = np.zeros((S, n))
    for x in range(S):
        for xp in range(S):
            for ap in range(A):
                col = xp * A + ap
                rows[x, col] = -m.discount * m.kernel[xp, ap, x]
                if xp == x:
                    rows[x, col] += 1.0
    return LinearProgram(
        objective=m.rewards.reshape(n),
        constraints=rows,
        rhs=m.initial_dist.copy(),
        senses=("=",) * S,
        lower_bounds=np.zeros(n),
        maximize=True,
    )


def policy_from_occupation(
    eta: np.ndarray, fallback: np.ndarray | None = None
) -> np.ndarray:
    """Policy induced by an occupation measure via row normalization.

    States with zero marginal mass take the matching ``fallback`` row
    (uniform by default).
    """
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < -1e-12):
        x, a = np.argwhere(eta < -1e-12)[0]
        raise ValueError(f"occupation measure negative at (x={x}, a={a}): {eta[x, a]:.3g}")
    eta = np.maximum(eta, 0.0)
    S, A = eta.shape
    if fallback is None:
        fallback = uniform_policy(S, A)
    marginal = eta.sum(axis=1)
    pi = np.array(fallback, dtype=float, copy=True)
    pos = marginal > 0.0
    pi[pos] = eta[pos] / marginal[pos, None]
    return pi


def occupation_of_policy(m: MDPInstance, pi: np.ndarray) -> np.ndarray:
    """Discounted occupation measure of ``pi`` under ``m``'s kernel.

    Solves the state flow balance h = mu0 + beta Q_pi^T h and splits each
    state's mass across actions by the policy; the result is feasible for
    the dual LP by construction.
    """
    pi = np.asarray(pi, dtype=float)
    Qpi = np.einsum("xa,xay->xy", pi, m.kernel)
    h = scipy.linalg.solve(
        np.eye(m.num_states) - m.discount * Qpi.T, m.initial_dist
    )
    return pi * h[:, None]
