"""Berk-Nash machinery: joint feasibility checking, equilibrium enumeration
over a finite conjecture set, and the entropy-regularized selection objective.

An equilibrium couples four objects: a model index k, a subjective
discounted occupation measure under that model, the true stationary
state-action frequencies of the induced policy, and the policy itself. The
checker evaluates the four condition groups of that coupled system and
reports residuals per group; the enumerator searches candidate best
responses model by model and re-verifies every hit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import (
    MDPInstance,
    ReducibleChainError,
    state_action_frequencies,
)
from .models import ConjectureSet, kl_cost_table, long_run_divergence
from .planning import greedy_sets, occupation_of_policy, value_iteration
from .soft_planning import SoftPlanConfig, soft_best_response

DEFAULT_FEAS_TOL = 1e-7

GROUP_SUBJECTIVE_FLOW = "subjective_flow"
GROUP_TRUE_FREQUENCY = "true_frequency"
GROUP_POLICY_CONSISTENCY = "policy_consistency"
GROUP_KL_MINIMALITY = "kl_minimality"


@dataclass(frozen=True)
class JointCandidate:
    """A (k, eta, d, pi) tuple to be tested for joint feasibility."""

    model_index: int
    occupation: np.ndarray
    frequencies: np.ndarray
    policy: np.ndarray


@dataclass(frozen=True)
class FeasibilityReport:
    passed: bool
    residuals: dict[str, float]
    failed_groups: tuple[str, ...]


@dataclass(frozen=True)
class EquilibriumEntry:
    model_index: int
    label: str
    policy_kind: str
    policy: np.ndarray
    divergence: float
    divergence_vector: np.ndarray
    feasibility: FeasibilityReport


@dataclass(frozen=True)
class CandidateDiagnostic:
    model_index: int
    label: str
    policy_kind: str
    accepted: bool
    reason: str
    divergence_vector: np.ndarray | None
    tie_states: int


@dataclass(frozen=True)
class EquilibriumReport:
    """Accepted equilibria plus one diagnostic row per candidate tested.

    ``tie_states`` > 0 on a hard-mode diagnostic flags states whose greedy
    set was not a singleton: only deterministic and uniform tie-breaks are
    searched, so equilibria requiring strictly interior randomization over a
    tied set would not appear.
    """

    mode: str
    temperature: float | None
    equilibria: tuple[EquilibriumEntry, ...]
    diagnostics: tuple[CandidateDiagnostic, ...]


def check_joint_feasibility(
    m: MDPInstance,
    cs: ConjectureSet,
    cand: JointCandidate,
    tol: float = DEFAULT_FEAS_TOL,
) -> FeasibilityReport:
    """Evaluate the four coupled condition groups at ``cand``.

    Failures are reported, not raised; the report carries the max residual
    of each group so a failing candidate names its broken condition.
    """
    k = cand.model_index
    if not (0 <= k < len(cs)):
        raise ValueError(f"model index {k} outside conjecture set of size {len(cs)}")
    eta = np.asarray(cand.occupation, dtype=float)
    d = np.asarray(cand.frequencies, dtype=float)
    pi = np.asarray(cand.policy, dtype=float)
    S, A = m.num_states, m.num_actions
    for name, arr in (("occupation", eta), ("frequencies", d), ("policy", pi)):
        if arr.shape != (S, A):
            raise ValueError(f"{name} must have shape ({S}, {A}), got {arr.shape}")
    Qk = cs.members[k].kernel
    beta = m.discount

    residuals: dict[str, float] = {}

    # (i) subjective discounted flow under model k, eta >= 0
    inflow = m.initial_dist + beta * np.einsum("yax,ya->x", Qk, eta)
    flow_res = np.abs(eta.sum(axis=1) - inflow).max()
    neg_res = max(0.0, float(-eta.min()))
    residuals[GROUP_SUBJECTIVE_FLOW] = float(max(flow_res, neg_res))

    # (ii) true stationary state-action frequencies, d >= 0, total mass 1
    norm_res = abs(d.sum() - 1.0)
    balance = np.abs(d.sum(axis=1) - np.einsum("xay,xa->y", m.kernel, d)).max()
    neg_res = max(0.0, float(-d.min()))
    residuals[GROUP_TRUE_FREQUENCY] = float(max(norm_res, balance, neg_res))

    # (iii) one policy governs both flows (checked on positive marginals only)
    policy_res = 0.0
    eta_marg = eta.sum(axis=1)
    d_marg = d.sum(axis=1)
    for x in range(S):
        if eta_marg[x] > tol:
            policy_res = max(policy_res, np.abs(pi[x] - eta[x] / eta_marg[x]).max())
        if d_marg[x] > tol:
            policy_res = max(policy_res, np.abs(pi[x] - d[x] / d_marg[x]).max())
    residuals[GROUP_POLICY_CONSISTENCY] = float(policy_res)

    # (iv) k attains the minimal frequency-weighted KL cost
    divs = np.array([long_run_divergence(d, kl_cost_table(m, q)) for q in cs])
    residuals[GROUP_KL_MINIMALITY] = float(max(0.0, (divs[k] - divs).max()))

    failed = tuple(g for g, r in residuals.items() if r > tol)
    return FeasibilityReport(passed=not failed, residuals=residuals, failed_groups=failed)


def _hard_candidates(m_k: MDPInstance) -> list[tuple[str, np.ndarray, int]]:
    """Deterministic and uniform-tie best responses under one model."""
    sets = greedy_sets(m_k, value_iteration(m_k))
    tie_states = sum(1 for s in sets if s.size > 1)
    S, A = m_k.num_states, m_k.num_actions
    lowest = np.zeros((S, A))
    uniform = np.zeros((S, A))
    for x, actions in enumerate(sets):
        lowest[x, actions[0]] = 1.0
        uniform[x, actions] = 1.0 / actions.size
    out = [("br-lowest", lowest, tie_states)]
    if tie_states:
        out.append(("br-uniform", uniform, tie_states))
    return out


def enumerate_equilibria(
    m: MDPInstance,
    cs: ConjectureSet,
    mode: str = "hard",
    temperature: float | None = None,
    tol: float = DEFAULT_FEAS_TOL,
) -> EquilibriumReport:
    """Search every conjecture for a self-confirming best response.

    For each model k the best response is computed (hard: deterministic
    plus, when greedy ties exist, the uniform tie-break; soft: the softmax
    best response at ``temperature``), its true long-run frequencies are
    derived, and k is accepted iff it minimizes the frequency-weighted KL
    cost over the whole set. Every accepted pair is re-verified through
    :func:`check_joint_feasibility` before being reported.
    """
    if mode not in ("hard", "soft"):
        raise ValueError(f"mode must be 'hard' or 'soft', got {mode!r}")
    if mode == "soft" and temperature is None:
        raise ValueError("soft mode requires a temperature")

    costs = [kl_cost_table(m, q) for q in cs]
    equilibria: list[EquilibriumEntry] = []
    diagnostics: list[CandidateDiagnostic] = []

    for k, member in enumerate(cs):
        m_k = m.with_kernel(member.kernel)
        if mode == "hard":
            candidates = _hard_candidates(m_k)
        else:
            pi, _, _ = soft_best_response(m_k, SoftPlanConfig(temperature=temperature))
            candidates = [("softmax", pi, 0)]

        for policy_kind, pi, tie_states in candidates:
            try:
                d = state_action_frequencies(m, pi)
            except ReducibleChainError as err:
                diagnostics.append(
                    CandidateDiagnostic(
                        model_index=k,
                        label=member.label,
                        policy_kind=policy_kind,
                        accepted=False,
                        reason=f"skipped: {err}",
                        divergence_vector=None,
                        tie_states=tie_states,
                    )
                )
                continue
            divs = np.array([long_run_divergence(d, c) for c in costs])
            if divs[k] > divs.min() + tol:
                diagnostics.append(
                    CandidateDiagnostic(
                        model_index=k,
                        label=member.label,
                        policy_kind=policy_kind,
                        accepted=False,
                        reason=(
                            f"not KL-minimal: D_k={divs[k]:.6g} vs min {divs.min():.6g}"
                        ),
                        divergence_vector=divs,
                        tie_states=tie_states,
                    )
                )
                continue
            eta = occupation_of_policy(m_k, pi)
            cand = JointCandidate(
                model_index=k, occupation=eta, frequencies=d, policy=pi
            )
            feas = check_joint_feasibility(m, cs, cand, tol=tol)
            if feas.passed:
                equilibria.append(
                    EquilibriumEntry(
                        model_index=k,
                        label=member.label,
                        policy_kind=policy_kind,
                        policy=pi,
                        divergence=float(divs[k]),
                        divergence_vector=divs,
                        feasibility=feas,
                    )
                )
                reason = "equilibrium"
            else:
                reason = f"feasibility re-check failed: {', '.join(feas.failed_groups)}"
            diagnostics.append(
                CandidateDiagnostic(
                    model_index=k,
                    label=member.label,
                    policy_kind=policy_kind,
                    accepted=feas.passed,
                    reason=reason,
                    divergence_vector=divs,
                    tie_states=tie_states,
                )
            )

    return EquilibriumReport(
        mode=mode,
        temperature=temperature,
        equilibria=tuple(equilibria),
        diagnostics=tuple(diagnostics),
    )


def bilevel_objective(
    m: MDPInstance, cs: ConjectureSet, k: int, temperature: float
) -> float:
    """Long-run KL cost of model k evaluated at its own softmax best response."""
    member = cs.members[k]
    pi, _, _ = soft_best_response(
        m.with_kernel(member.kernel), SoftPlanConfig(temperature=temperature)
    )
    d = state_action_frequencies(m, pi)
    return long_run_divergence(d, kl_cost_table(m, member))


def entropy_bn_select(
    m: MDPInstance, cs: ConjectureSet, temperature: float, tie_tol: float = 1e-9
) -> tuple[int, np.ndarray]:
    """Minimize the smooth selection objective over the conjecture set.

    Returns the lowest index within ``tie_tol`` of the minimum together with
    the full objective vector.
    """
    values = np.array(
        [bilevel_objective(m, cs, k, temperature) for k in range(len(cs))]
    )
    best = int(np.flatnonzero(values <= values.min() + tie_tol)[0])
    return best, values
