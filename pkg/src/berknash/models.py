"""Subjective model families, KL costs, and the long-run divergence functional."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import MDPInstance, ROW_SUM_TOL, state_action_frequencies


@dataclass(frozen=True)
class SubjectiveKernel:
    """One conjectured transition kernel, tagged with a parameter descriptor.

    ``param`` is the point in parameter space that produced the kernel
    (a scalar for mixture families, a vector for box grids, or None for
    arbitrary tabular conjectures).
    """

    kernel: np.ndarray
    label: str
    param: float | np.ndarray | None = None

    def __post_init__(self):
        kernel = np.ascontiguousarray(np.asarray(self.kernel, dtype=float))
        kernel.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)
        off = np.abs(kernel.sum(axis=-1) - 1.0)
        if np.any(off > ROW_SUM_TOL) or np.any(kernel < 0.0):
            x, a = np.unravel_index(np.argmax(off), off.shape)
            raise ValueError(
                f"subjective kernel '{self.label}' is not row-stochastic at (x={x}, a={a})"
            )


@dataclass(frozen=True)
class ConjectureSet:
    """An ordered finite set of conjectured kernels, optionally with a
    parameter-space box used by the zooming learner."""

    members: tuple[SubjectiveKernel, ...]
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("conjecture set must be nonempty")
        labels = [mem.label for mem in members]
        if len(set(labels)) != len(labels):
            raise ValueError(f"conjecture labels must be unique, got {labels}")
        object.__setattr__(self, "members", members)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def kernels(self) -> list[np.ndarray]:
        return [mem.kernel for mem in self.members]

    def params(self) -> list:
        return [mem.param for mem in self.members]


def kl_divergence(nu: np.ndarray, mu: np.ndarray) -> float:
    """KL divergence sum nu(i) log(nu(i)/mu(i)); terms with nu(i)=0 contribute 0.

    Requires nu << mu; raises naming the first coordinate where absolute
    continuity fails.
    """
    nu = np.asarray(nu, dtype=float)
    mu = np.asarray(mu, dtype=float)
    support = nu > 0.0
    if np.any(mu[support] <= 0.0):
        i = int(np.flatnonzero(support & (mu <= 0.0))[0])
        raise ValueError(
            f"absolute continuity violated at coordinate {i}: "
            f"nu={nu[i]:.6g} but mu={mu[i]:.6g}"
        )
    ns = nu[support]
    val = float(np.sum(ns * np.log(ns / mu[support])))
    # Gibbs' inequality: any negative result is rounding noise (ulp-scale,
    # from nearly identical rows), so it is clamped rather than returned.
    return max(0.0, val)


def kl_cost_table(m: MDPInstance, q: SubjectiveKernel | np.ndarray) -> np.ndarray:
    """Per-(x,a) KL cost of conjecturing ``q`` when the truth is ``m.kernel``."""
    Q = q.kernel if isinstance(q, SubjectiveKernel) else np.asarray(q, dtype=float)
    S, A = m.num_states, m.num_actions
    c = np.empty((S, A))
    for x in range(S):
        for a in range(A):
            try:
                c[x, a] = kl_divergence(m.kernel[x, a], Q[x, a])
            except ValueError as err:
                raise ValueError(f"at (x={x}, a={a}): {err}") from None
    return c


def long_run_divergence(d: np.ndarray, c: np.ndarray) -> float:
    """Frequency-weighted KL cost sum_{x,a} d(x,a) c(x,a); linear in d."""
    return float(np.sum(np.asarray(d, dtype=float) * np.asarray(c, dtype=float)))


def divergence_vector(m: MDPInstance, cs: ConjectureSet, d: np.ndarray) -> np.ndarray:
    """Long-run divergence of every conjecture under fixed frequencies ``d``."""
    return np.array([long_run_divergence(d, kl_cost_table(m, q)) for q in cs])


def pseudo_true_set(
    m: MDPInstance, cs: ConjectureSet, pi: np.ndarray, tie_tol: float = 1e-9
) -> list[int]:
    """Indices of conjectures minimizing the long-run divergence under ``pi``.

    All indices within ``tie_tol`` of the minimum are returned, so exact
    argmin ties survive floating point.
    """
    d = state_action_frequencies(m, pi)
    divs = divergence_vector(m, cs, d)
    return [int(k) for k in np.flatnonzero(divs <= divs.min() + tie_tol)]


def mixture_kernel(m: MDPInstance, eps: float) -> SubjectiveKernel:
    """Conjecture that blends the true kernel with uniform noise of weight eps."""
    if not (0.0 <= eps <= 1.0):
        raise ValueError(f"mixture weight must lie in [0, 1], got {eps}")
    S = m.num_states
    Q = (1.0 - eps) * m.kernel + eps / S
    return SubjectiveKernel(kernel=Q, label=f"eps={eps:g}", param=float(eps))


def mixture_family(m: MDPInstance, eps_values, bounds=None) -> ConjectureSet:
    """Finite conjecture set of uniform-noise mixtures at the given weights."""
    members = tuple(mixture_kernel(m, float(e)) for e in eps_values)
    return ConjectureSet(members=members, bounds=bounds)
