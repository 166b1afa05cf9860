"""Online model selection as an adversarial bandit.

Two learners are provided: an exponential-weights loop over a fixed
conjecture set, and an adaptive variant that every ``zoom_interval`` rounds
prunes clearly-suboptimal or resolved parameters and refines a local grid
around the promising ones.

Randomness discipline: every random draw comes from a generator seeded by
(seed, round, stream), with stream 0 for arm sampling and stream 1 for
rollout simulation. Traces are therefore bit-reproducible and independent
of caching or evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import MDPInstance, state_action_frequencies
from .models import ConjectureSet, SubjectiveKernel, kl_cost_table, kl_divergence, long_run_divergence
from .soft_planning import SoftPlanConfig, soft_best_response

ARM_STREAM = 0
ROLLOUT_STREAM = 1
DEDUPE_TOL = 1e-12


def _round_rng(seed: int, t: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(t), stream]))


@dataclass(frozen=True)
class BanditConfig:
    """Knobs for the exponential-weights loop.

    ``loss_scale`` divides clipped losses so the learner always sees values
    in [0, 1]; None means "use the largest per-entry KL cost over the initial
    conjecture set", which is only computable in oracle mode.

    Defaults are tuned for deterministic (oracle) per-arm losses, where an
    aggressive learning rate and a thin exploration floor concentrate fast;
    lower the rate and raise exploration for noisy rollout estimates.
    """

    learning_rate: float = 0.5
    exploration: float = 0.0125
    horizon: int = 1500
    loss_estimator: str = "oracle"
    rollout_horizon: int = 10_000
    rollout_smoothing: float = 1e-3
    loss_scale: float | None = None
    rng_seed: int = 11

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 < self.exploration < 1.0):
            raise ValueError(f"exploration must lie in (0, 1), got {self.exploration}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.loss_estimator not in ("oracle", "rollout"):
            raise ValueError(f"unknown loss_estimator {self.loss_estimator!r}")
        if self.rollout_horizon < 1:
            raise ValueError(f"rollout_horizon must be >= 1, got {self.rollout_horizon}")
        if self.rollout_smoothing <= 0.0:
            raise ValueError(
                f"rollout_smoothing must be positive, got {self.rollout_smoothing}"
            )
        if self.loss_scale is not None and self.loss_scale <= 0.0:
            raise ValueError(f"loss_scale must be positive, got {self.loss_scale}")


@dataclass
class BanditState:
    """Mutable per-run bookkeeping: weights, pull counts, running means."""

    weights: np.ndarray
    pull_counts: np.ndarray
    mean_losses: np.ndarray
    step: int = 0
    cumulative_loss: float = 0.0
    trace: list = field(default_factory=list)  # rows (t, arm, p_arm, loss)

    @classmethod
    def initial(cls, num_arms: int, prior_losses=None) -> "BanditState":
        priors = (
            np.zeros(num_arms)
            if prior_losses is None
            else np.asarray(prior_losses, dtype=float).copy()
        )
        return cls(
            weights=np.ones(num_arms),
            pull_counts=np.zeros(num_arms, dtype=int),
            mean_losses=priors,
        )


def sampling_distribution(weights: np.ndarray, exploration: float) -> np.ndarray:
    """Exploration-mixed sampling law (1-gamma) w/sum(w) + gamma/K."""
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0.0):
        raise ValueError("weights must be strictly positive")
    return (1.0 - exploration) * w / w.sum() + exploration / w.size


def exp3_update(
    state: BanditState, arm: int, loss: float, prob: float, learning_rate: float
) -> BanditState:
    """Importance-weighted exponential update of the pulled arm's weight.

    Weights are renormalized by their max afterwards, which leaves the
    sampling law invariant and prevents underflow over long runs.
    """
    if prob <= 0.0:
        raise ValueError(f"pulled arm must have positive probability, got {prob}")
    state.weights[arm] *= np.exp(-learning_rate * loss / prob)
    state.weights /= state.weights.max()
    # a deeply suppressed arm's weight can underflow to exact zero; the
    # floor keeps weights strictly positive without moving the sampling law
    np.maximum(state.weights, 1e-300, out=state.weights)
    return state


def record_pull(state: BanditState, t: int, arm: int, prob: float, loss: float) -> None:
    """Bookkeeping for one round: counts, running mean, cumulative, trace."""
    n_prev = state.pull_counts[arm]
    state.pull_counts[arm] = n_prev + 1
    state.mean_losses[arm] = (n_prev * state.mean_losses[arm] + loss) / (n_prev + 1)
    state.cumulative_loss += loss
    state.step = t
    state.trace.append((t, arm, prob, loss))


def uncertainty(pull_counts: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Per-arm uncertainty scale * (N v 1)^(-1/2)."""
    counts = np.maximum(np.asarray(pull_counts, dtype=float), 1.0)
    return scale / np.sqrt(counts)


def resolve_loss_scale(
    m: MDPInstance, members, cfg: BanditConfig
) -> float:
    """The divisor normalizing losses into [0, 1].

    Defaults to the largest per-entry KL cost over the given conjectures;
    rollout mode has no oracle access, so there the scale must be configured.
    """
    if cfg.loss_scale is not None:
        return cfg.loss_scale
    if cfg.loss_estimator == "rollout":
        raise ValueError("rollout mode requires an explicit loss_scale")
    top = max(float(kl_cost_table(m, q).max()) for q in members)
    if top <= 0.0:
        # every conjecture matches the truth exactly; any positive scale works
        return 1.0
    return top


def oracle_loss(
    m: MDPInstance,
    q: SubjectiveKernel,
    pi: np.ndarray,
    loss_scale: float,
    cost_table: np.ndarray | None = None,
) -> float:
    """Exact normalized long-run KL cost of running ``pi`` while conjecturing ``q``."""
    c = kl_cost_table(m, q) if cost_table is None else cost_table
    d = state_action_frequencies(m, pi)
    return min(long_run_divergence(d, c), loss_scale) / loss_scale


def rollout_loss(
    m: MDPInstance,
    q: SubjectiveKernel,
    pi: np.ndarray,
    cfg: BanditConfig,
    loss_scale: float,
    rng: np.random.Generator,
) -> float:
    """Plug-in estimate of the long-run KL cost from a simulated trajectory.

    Simulates ``rollout_horizon`` steps under the true kernel, discards the
    first tenth as burn-in, builds additively smoothed empirical transition
    rows, and evaluates the frequency-weighted KL against the conjecture.
    Conjecture rows containing zeros are smoothed the same way so the
    plug-in stays finite.
    """
    S, A = m.num_states, m.num_actions
    H = cfg.rollout_horizon
    burn_in = H // 10
    alpha = cfg.rollout_smoothing

    # Inverse-CDF sampling with pre-drawn uniforms: orders of magnitude
    # faster than per-step rng.choice at these horizons.
    cum_pi = np.cumsum(np.asarray(pi, dtype=float), axis=1)
    cum_kernel = np.cumsum(m.kernel, axis=2)
    cum_init = np.cumsum(m.initial_dist)
    u = rng.random((H, 2))

    counts = np.zeros((S, A, S))
    x = min(int(np.searchsorted(cum_init, rng.random(), side="right")), S - 1)
    for t in range(H):
        a = min(int(np.searchsorted(cum_pi[x], u[t, 0], side="right")), A - 1)
        y = min(int(np.searchsorted(cum_kernel[x, a], u[t, 1], side="right")), S - 1)
        if t >= burn_in:
            counts[x, a, y] += 1.0
        x = y

    visits = counts.sum(axis=2)
    total = visits.sum()
    p_hat = (counts + alpha) / (visits + S * alpha)[:, :, None]

    div = 0.0
    for x in range(S):
        for a in range(A):
            if visits[x, a] == 0.0:
                continue
            q_row = q.kernel[x, a]
            if np.any(q_row <= 0.0):
                q_row = (q_row + alpha) / (1.0 + S * alpha)
            div += (visits[x, a] / total) * kl_divergence(p_hat[x, a], q_row)
    return min(max(div, 0.0), loss_scale) / loss_scale


def estimate_loss(
    m: MDPInstance,
    q: SubjectiveKernel,
    pi: np.ndarray,
    cfg: BanditConfig,
    loss_scale: float,
    rng: np.random.Generator | None = None,
    cost_table: np.ndarray | None = None,
) -> float:
    """Loss in [0, 1] for one pull, per the configured estimator."""
    if cfg.loss_estimator == "oracle":
        return oracle_loss(m, q, pi, loss_scale, cost_table=cost_table)
    if rng is None:
        raise ValueError("rollout estimation needs an rng")
    return rollout_loss(m, q, pi, cfg, loss_scale, rng)


@dataclass(frozen=True)
class Exp3RunRecord:
    """Full trace of one fixed-set run plus derived summaries.

    ``regret`` is cumulative versus the best fixed arm, with per-arm oracle
    losses as the reference even when the run itself used rollouts.
    """

    labels: tuple[str, ...]
    params: tuple
    loss_scale: float
    oracle_losses: np.ndarray
    arms: np.ndarray
    probs: np.ndarray
    losses: np.ndarray
    running_mean: np.ndarray
    regret: np.ndarray
    selection_frequencies: np.ndarray
    final_probabilities: np.ndarray
    state: BanditState


def run_exp3(
    m: MDPInstance,
    cs: ConjectureSet,
    cfg: BanditConfig,
    soft_cfg: SoftPlanConfig,
) -> Exp3RunRecord:
    """Exponential-weights model selection over a fixed conjecture set.

    The per-arm softmax best responses (and, in oracle mode, the losses
    themselves) are deterministic, so they are computed once upfront.
    """
    K = len(cs)
    loss_scale = resolve_loss_scale(m, cs.members, cfg)
    policies = [
        soft_best_response(m.with_kernel(q.kernel), soft_cfg)[0] for q in cs
    ]
    tables = [kl_cost_table(m, q) for q in cs]
    oracle = np.array(
        [
            oracle_loss(m, q, policies[k], loss_scale, cost_table=tables[k])
            for k, q in enumerate(cs)
        ]
    )

    state = BanditState.initial(K)
    T = cfg.horizon
    arms = np.zeros(T, dtype=int)
    probs = np.zeros(T)
    losses = np.zeros(T)

    for t in range(1, T + 1):
        p = sampling_distribution(state.weights, cfg.exploration)
        arm = int(_round_rng(cfg.rng_seed, t, ARM_STREAM).choice(K, p=p))
        if cfg.loss_estimator == "oracle":
            loss = float(oracle[arm])
        else:
            loss = rollout_loss(
                m,
                cs.members[arm],
                policies[arm],
                cfg,
                loss_scale,
                _round_rng(cfg.rng_seed, t, ROLLOUT_STREAM),
            )
        record_pull(state, t, arm, float(p[arm]), loss)
        exp3_update(state, arm, loss, float(p[arm]), cfg.learning_rate)
        arms[t - 1] = arm
        probs[t - 1] = p[arm]
        losses[t - 1] = loss

    steps = np.arange(1, T + 1)
    running_mean = np.cumsum(losses) / steps
    regret = np.cumsum(oracle[arms]) - steps * oracle.min()
    frequencies = np.bincount(arms, minlength=K) / T

    return Exp3RunRecord(
        labels=tuple(q.label for q in cs),
        params=tuple(q.param for q in cs),
        loss_scale=loss_scale,
        oracle_losses=oracle,
        arms=arms,
        probs=probs,
        losses=losses,
        running_mean=running_mean,
        regret=regret,
        selection_frequencies=frequencies,
        final_probabilities=sampling_distribution(state.weights, cfg.exploration),
        state=state,
    )


def prune(
    mean_losses: np.ndarray,
    uncertainties: np.ndarray,
    alpha: float,
    delta: float,
) -> tuple[np.ndarray, list[tuple[int, str]]]:
    """Drop arms that are clearly worse than the best or already resolved.

    The incumbent (lowest running mean, lowest index on ties) is exempt from
    the "converged" rule: freezing the best arm must not delete it.
    """
    L = np.asarray(mean_losses, dtype=float)
    U = np.asarray(uncertainties, dtype=float)
    incumbent = int(np.argmin(L))
    floor = L[incumbent] + alpha
    kept: list[int] = []
    pruned: list[tuple[int, str]] = []
    for k in range(L.size):
        if k == incumbent:
            kept.append(k)
        elif L[k] > floor:
            pruned.append((k, "suboptimal"))
        elif U[k] < delta:
            pruned.append((k, "converged"))
        else:
            kept.append(k)
    return np.array(kept, dtype=int), pruned


def refine(params, radius: float, grid_size: int, bounds, existing=()) -> list:
    """Evenly spaced local grids around each parameter, clipped to bounds.

    Scalar parameters get ``grid_size`` points on the clipped interval;
    vector parameters get the axis-aligned product grid. Points within
    1e-12 of an existing or already-emitted parameter are dropped.
    """
    if grid_size < 2:
        raise ValueError(f"grid_size must be >= 2, got {grid_size}")
    lo_b, hi_b = bounds
    seen = [np.atleast_1d(np.asarray(p, dtype=float)) for p in existing]
    out: list = []

    def is_new(vec) -> bool:
        for other in seen:
            if other.shape == vec.shape and np.abs(other - vec).max() <= DEDUPE_TOL:
                return False
        return True

    for p in params:
        vec = np.atleast_1d(np.asarray(p, dtype=float))
        scalar = np.isscalar(p) or np.ndim(p) == 0
        lo = np.maximum(np.atleast_1d(lo_b), vec - radius)
        hi = np.minimum(np.atleast_1d(hi_b), vec + radius)
        axes = [np.linspace(lo[i], hi[i], grid_size) for i in range(vec.size)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, vec.size)
        for point in mesh:
            if is_new(point):
                seen.append(point)
                out.append(float(point[0]) if scalar else point.copy())
    return out


@dataclass(frozen=True)
class ZoomEvent:
    """What one zoom boundary did to the conjecture set."""

    t: int
    incumbent_param: float
    kept: tuple
    pruned: tuple  # (param, reason) pairs
    added: tuple


@dataclass(frozen=True)
class ZoomConfig:
    """Zoom schedule: thresholds and radii decay geometrically per epoch.

    At round t the epoch index is floor(t / zoom_interval), and e.g.
    alpha_t = alpha0 * alpha_decay**epoch. Decays in (0, 1] keep every
    schedule positive and non-increasing.
    """

    zoom_interval: int = 100
    alpha0: float = 0.1
    alpha_decay: float = 0.8
    delta0: float = 0.02
    delta_decay: float = 1.0
    rho0: float = 0.1
    rho_decay: float = 0.5
    grid_size: int = 3
    uncertainty_scale: float = 1.0
    bounds: tuple[float, float] = (0.0, 0.5)

    def __post_init__(self):
        if self.zoom_interval < 1:
            raise ValueError(f"zoom_interval must be >= 1, got {self.zoom_interval}")
        for name in ("alpha0", "delta0", "rho0", "uncertainty_scale"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("alpha_decay", "delta_decay", "rho_decay"):
            if not (0.0 < getattr(self, name) <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1], got {getattr(self, name)}")
        if self.grid_size < 2:
            raise ValueError(f"grid_size must be >= 2, got {self.grid_size}")
        lo, hi = self.bounds
        if not np.all(np.asarray(lo) < np.asarray(hi)):
            raise ValueError(f"bounds must satisfy lo < hi, got {self.bounds}")

    def alpha(self, t: int) -> float:
        return self.alpha0 * self.alpha_decay ** (t // self.zoom_interval)

    def delta(self, t: int) -> float:
        return self.delta0 * self.delta_decay ** (t // self.zoom_interval)

    def rho(self, t: int) -> float:
        return self.rho0 * self.rho_decay ** (t // self.zoom_interval)


@dataclass(frozen=True)
class ZoomRunRecord:
    """Trace of an adaptive run: per-round pulls plus per-epoch set surgery."""

    loss_scale: float
    selected_params: np.ndarray
    probs: np.ndarray
    losses: np.ndarray
    running_mean: np.ndarray
    set_sizes: np.ndarray
    events: tuple[ZoomEvent, ...]
    final_params: tuple
    final_mean_losses: np.ndarray
    final_counts: np.ndarray
    final_weights: np.ndarray


def run_zoom_exp3(
    m: MDPInstance,
    family,
    initial_params,
    cfg: BanditConfig,
    zoom_cfg: ZoomConfig,
    soft_cfg: SoftPlanConfig,
) -> ZoomRunRecord:
    """Adaptive exponential weights over a self-refining conjecture set.

    ``family`` maps a parameter value to a :class:`SubjectiveKernel`. Every
    ``zoom_interval`` rounds the current set is pruned by running mean and
    uncertainty, then a finer local grid is added around the best arm that
    is still uncertain enough to refine. Kept arms carry their statistics
    over; new arms start at the median kept weight with their parent's
    running mean as prior. The incumbent always survives and never-pulled
    arms are left untouched, so the set is never empty.
    """
    params = [float(p) if np.ndim(p) == 0 else np.asarray(p, float) for p in initial_params]
    if not params:
        raise ValueError("initial conjecture set must be nonempty")

    kernels: dict = {}
    policies: dict = {}
    oracle_cache: dict = {}

    def key(p):
        return float(p) if np.ndim(p) == 0 else tuple(np.asarray(p, float))

    def arm_for(p):
        k = key(p)
        if k not in kernels:
            q = family(p)
            kernels[k] = q
            policies[k], _, _ = soft_best_response(m.with_kernel(q.kernel), soft_cfg)
        return kernels[k], policies[k]

    def arm_oracle_loss(p, loss_scale):
        k = key(p)
        if k not in oracle_cache:
            q, pi = arm_for(p)
            oracle_cache[k] = oracle_loss(m, q, pi, loss_scale)
        return oracle_cache[k]

    initial_members = [arm_for(p)[0] for p in params]
    loss_scale = resolve_loss_scale(m, initial_members, cfg)

    weights = np.ones(len(params))
    counts = np.zeros(len(params), dtype=int)
    means = np.zeros(len(params))

    T = cfg.horizon
    selected = np.zeros(T)
    probs = np.zeros(T)
    losses = np.zeros(T)
    set_sizes = np.zeros(T, dtype=int)
    events: list[ZoomEvent] = []

    for t in range(1, T + 1):
        K = len(params)
        p = sampling_distribution(weights, cfg.exploration)
        arm = int(_round_rng(cfg.rng_seed, t, ARM_STREAM).choice(K, p=p))
        if cfg.loss_estimator == "oracle":
            loss = arm_oracle_loss(params[arm], loss_scale)
        else:
            q, pi = arm_for(params[arm])
            loss = rollout_loss(
                m, q, pi, cfg, loss_scale, _round_rng(cfg.rng_seed, t, ROLLOUT_STREAM)
            )
        counts[arm] += 1
        means[arm] += (loss - means[arm]) / counts[arm]
        weights[arm] *= np.exp(-cfg.learning_rate * loss / p[arm])
        weights /= weights.max()
        np.maximum(weights, 1e-300, out=weights)

        selected[t - 1] = params[arm] if np.ndim(params[arm]) == 0 else np.nan
        probs[t - 1] = p[arm]
        losses[t - 1] = loss
        set_sizes[t - 1] = K

        if t % zoom_cfg.zoom_interval == 0:
            alpha = zoom_cfg.alpha(t)
            delta = zoom_cfg.delta(t)
            rho = zoom_cfg.rho(t)
            unc = uncertainty(counts, zoom_cfg.uncertainty_scale)
            # Zoom decisions need evidence: never-pulled arms have no loss
            # estimate yet, so they are kept untouched and neither pruned
            # nor used as refinement centers.
            pulled = np.flatnonzero(counts > 0)
            kept_sub, pruned_sub = prune(means[pulled], unc[pulled], alpha, delta)
            kept_idx = np.sort(
                np.concatenate([pulled[kept_sub], np.flatnonzero(counts == 0)])
            ).astype(int)
            pruned_idx = [(int(pulled[i]), why) for i, why in pruned_sub]
            incumbent = int(pulled[np.argmin(means[pulled])])
            best_mean = means[incumbent]

            # Refinement centers: the grid is allowed to be any subset of the
            # radius-rho ball, and refining every near-optimal arm grows the
            # set geometrically (rho shrinks faster than the alpha band), so
            # resolution is added around the best still-uncertain arm only.
            active = [
                int(k)
                for k in pulled
                if means[k] <= best_mean + alpha and unc[k] >= delta
            ]
            if active:
                active = [min(active, key=lambda k: (means[k], k))]
            # prune always retains the incumbent, so kept_params is nonempty
            kept_params = [params[k] for k in kept_idx]
            new_entries: list[tuple] = []
            for k in active:
                fresh = refine(
                    [params[k]],
                    rho,
                    zoom_cfg.grid_size,
                    zoom_cfg.bounds,
                    existing=kept_params + [pp for pp, _ in new_entries],
                )
                # The refinement grid only has to be a subset of the radius-
                # rho ball; points closer than rho/2 to an existing arm add
                # no resolution and would let the set grow without bound.
                for pp in fresh:
                    others = kept_params + [qq for qq, _ in new_entries]
                    gap = min(
                        np.abs(np.atleast_1d(pp) - np.atleast_1d(qq)).max()
                        for qq in others
                    )
                    if gap >= 0.5 * rho:
                        new_entries.append((pp, means[k]))

            median_w = float(np.median(weights[kept_idx]))
            events.append(
                ZoomEvent(
                    t=t,
                    incumbent_param=params[incumbent],
                    kept=tuple(kept_params),
                    pruned=tuple((params[k], why) for k, why in pruned_idx),
                    added=tuple(pp for pp, _ in new_entries),
                )
            )

            params = kept_params + [pp for pp, _ in new_entries]
            weights = np.concatenate(
                [weights[kept_idx], np.full(len(new_entries), median_w)]
            )
            weights /= weights.max()
            counts = np.concatenate(
                [counts[kept_idx], np.zeros(len(new_entries), dtype=int)]
            )
            means = np.concatenate(
                [means[kept_idx], np.array([prior for _, prior in new_entries])]
            )

    steps = np.arange(1, T + 1)
    return ZoomRunRecord(
        loss_scale=loss_scale,
        selected_params=selected,
        probs=probs,
        losses=losses,
        running_mean=np.cumsum(losses) / steps,
        set_sizes=set_sizes,
        events=tuple(events),
        final_params=tuple(params),
        final_mean_losses=means.copy(),
        final_counts=counts.copy(),
        final_weights=weights.copy(),
    )
