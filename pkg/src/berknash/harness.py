"""Experiment harness: JSON configs, the frozen benchmark instance, and
seeded end-to-end pipelines that emit CSV artifacts plus a manifest.

Every pipeline is deterministic given the config and seed; CSV floats are
written with 17 significant digits so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import os
import platform
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .equilibrium import enumerate_equilibria
from .learning import BanditConfig, ZoomConfig, run_exp3, run_zoom_exp3
from .mdp import MDPInstance, policy_value, validate_instance
from .models import ConjectureSet, SubjectiveKernel, mixture_family, mixture_kernel
from .planning import (
    build_dual_lp,
    build_primal_lp,
    greedy_sets,
    policy_from_occupation,
    value_iteration,
)
from .simplex import simplex_solve
from .soft_planning import SoftPlanConfig, soft_best_response

ENV_OUTPUT_DIR = "BERKNASH_OUTPUT_DIR"

EXPERIMENT_KINDS = (
    "case-study",
    "lambda-sweep",
    "zooming",
    "equilibrium-report",
    "duality-audit",
)

BENCHMARK_EPSILONS = (0.05, 0.15, 0.30, 0.45)


class ConfigError(ValueError):
    """A config file failed to parse or validate."""


def benchmark3() -> tuple[MDPInstance, ConjectureSet]:
    """The frozen 3-state, 2-action benchmark and its mixture conjectures.

    Action 0 is conservative: rows concentrate sharply on the current state
    and rewards are mild. Action 1 is aggressive: rows spread toward state 2
    and rewards swing from a loss to a large payoff there (strictly higher
    variance). All kernel entries are positive, so the chain induced by any
    policy is irreducible and aperiodic; the optimal policy holds states 0
    and 1 conservatively and gambles only in state 2.
    """
    kernel = np.array(
        [
            [[0.998, 0.001, 0.001], [0.25, 0.25, 0.50]],
            [[0.001, 0.998, 0.001], [0.20, 0.30, 0.50]],
            [[0.001, 0.001, 0.998], [0.45, 0.35, 0.20]],
        ]
    )
    rewards = np.array(
        [
            [0.42, -0.60],
            [0.45, -0.50],
            [0.48, 1.40],
        ]
    )
    m = MDPInstance(
        kernel=kernel,
        rewards=rewards,
        discount=0.95,
        initial_dist=np.full(3, 1.0 / 3.0),
    )
    validate_instance(m)
    return m, mixture_family(m, BENCHMARK_EPSILONS, bounds=(0.0, 1.0))


@dataclass(frozen=True)
class LambdaGridConfig:
    lo: float = 1e-4
    hi: float = 1e4
    points: int = 33
    reference_state: int = 0
    model_index: int = 0

    def values(self) -> np.ndarray:
        return np.logspace(np.log10(self.lo), np.log10(self.hi), self.points)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    instance: MDPInstance
    conjectures: ConjectureSet
    soft: SoftPlanConfig
    bandit: BanditConfig
    zoom: ZoomConfig
    zoom_initial_grid: int
    lambda_grid: LambdaGridConfig
    equilibrium_mode: str
    equilibrium_tol: float
    output_dir: Path
    seed: int
    raw: dict


@dataclass(frozen=True)
class RunArtifacts:
    output_dir: Path
    manifest_path: Path
    csv_paths: dict[str, Path]


def _section(data: dict, name: str) -> dict:
    sub = data.get(name, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"{name}: expected an object, got {type(sub).__name__}")
    return sub


def _build(section_name: str, cls, kwargs: dict):
    try:
        return cls(**kwargs)
    except TypeError as err:
        raise ConfigError(f"{section_name}: {err}") from None
    except ValueError as err:
        raise ConfigError(f"{section_name}: {err}") from None


def _instance_from_spec(spec) -> MDPInstance:
    if spec == "benchmark3":
        return benchmark3()[0]
    if not isinstance(spec, dict):
        raise ConfigError(f"mdp: expected 'benchmark3' or inline tables, got {spec!r}")
    missing = {"kernel", "rewards", "discount", "initial_dist"} - set(spec)
    if missing:
        raise ConfigError(f"mdp: missing fields {sorted(missing)}")
    m = MDPInstance(
        kernel=np.asarray(spec["kernel"], dtype=float),
        rewards=np.asarray(spec["rewards"], dtype=float),
        discount=float(spec["discount"]),
        initial_dist=np.asarray(spec["initial_dist"], dtype=float),
    )
    try:
        validate_instance(m)
    except ValueError as err:
        raise ConfigError(f"mdp: {err}") from None
    return m


def _conjectures_from_spec(spec, m: MDPInstance) -> ConjectureSet:
    if spec is None:
        return mixture_family(m, BENCHMARK_EPSILONS, bounds=(0.0, 1.0))
    if not isinstance(spec, dict):
        raise ConfigError("conjectures: expected an object")
    if "epsilons" in spec:
        try:
            return mixture_family(m, spec["epsilons"], bounds=(0.0, 1.0))
        except ValueError as err:
            raise ConfigError(f"conjectures.epsilons: {err}") from None
    if "kernels" in spec:
        members = []
        for i, item in enumerate(spec["kernels"]):
            try:
                members.append(
                    SubjectiveKernel(
                        kernel=np.asarray(item["kernel"], dtype=float),
                        label=str(item.get("label", f"model-{i}")),
                        param=item.get("param"),
                    )
                )
            except (KeyError, ValueError) as err:
                raise ConfigError(f"conjectures.kernels[{i}]: {err}") from None
        return ConjectureSet(members=tuple(members))
    raise ConfigError("conjectures: provide either 'epsilons' or 'kernels'")


def config_from_dict(data: dict) -> ExperimentConfig:
    """Validate a parsed config and fill defaults (echoed into the manifest)."""
    if not isinstance(data, dict):
        raise ConfigError(f"top level: expected an object, got {type(data).__name__}")
    known = {"experiment", "seed", "output_dir", "mdp", "conjectures", "soft",
             "bandit", "zoom", "lambda_grid", "equilibrium"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level fields: {sorted(unknown)}")
    kind = data.get("experiment")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(
            f"experiment: must be one of {EXPERIMENT_KINDS}, got {kind!r}"
        )
    seed = data.get("seed", 11)
    if not isinstance(seed, int):
        raise ConfigError(f"seed: expected an integer, got {seed!r}")

    instance = _instance_from_spec(data.get("mdp", "benchmark3"))
    conjectures = _conjectures_from_spec(data.get("conjectures"), instance)

    soft_kwargs = {"temperature": 0.1, **_section(data, "soft")}
    soft = _build("soft", SoftPlanConfig, soft_kwargs)

    bandit_kwargs = dict(_section(data, "bandit"))
    bandit_kwargs["rng_seed"] = seed
    bandit = _build("bandit", BanditConfig, bandit_kwargs)

    zoom_section = dict(_section(data, "zoom"))
    initial_grid = zoom_section.pop("initial_grid", 6)
    if not isinstance(initial_grid, int) or initial_grid < 1:
        raise ConfigError(f"zoom.initial_grid: expected a positive integer, got {initial_grid!r}")
    if "bounds" in zoom_section:
        zoom_section["bounds"] = tuple(zoom_section["bounds"])
    else:
        zoom_section["bounds"] = (0.0, 0.5)
    zoom = _build("zoom", ZoomConfig, zoom_section)

    grid_section = _section(data, "lambda_grid")
    lam_grid = _build(
        "lambda_grid",
        LambdaGridConfig,
        {
            "lo": grid_section.get("min", 1e-4),
            "hi": grid_section.get("max", 1e4),
            "points": grid_section.get("points", 33),
            "reference_state": grid_section.get("reference_state", 0),
            "model_index": grid_section.get("model_index", 0),
        },
    )
    if not (0 <= lam_grid.reference_state < instance.num_states):
        raise ConfigError("lambda_grid.reference_state: out of range for instance")
    if not (0 <= lam_grid.model_index < len(conjectures)):
        raise ConfigError("lambda_grid.model_index: out of range for conjecture set")
    if lam_grid.points < 2 or lam_grid.lo <= 0 or lam_grid.hi <= lam_grid.lo:
        raise ConfigError("lambda_grid: need points >= 2 and 0 < min < max")

    eq_section = _section(data, "equilibrium")
    eq_mode = eq_section.get("mode", "both")
    if eq_mode not in ("hard", "soft", "both"):
        raise ConfigError(f"equilibrium.mode: must be hard, soft, or both, got {eq_mode!r}")
    eq_tol = float(eq_section.get("tol", 1e-7))
    if eq_tol <= 0:
        raise ConfigError(f"equilibrium.tol: must be positive, got {eq_tol}")

    output_dir = Path(os.environ.get(ENV_OUTPUT_DIR) or data.get("output_dir", f"runs/{kind}"))

    resolved = {
        "experiment": kind,
        "seed": seed,
        "output_dir": str(output_dir),
        "mdp": data.get("mdp", "benchmark3"),
        "conjectures": data.get("conjectures", {"epsilons": list(BENCHMARK_EPSILONS)}),
        "soft": soft_kwargs,
        "bandit": {
            "learning_rate": bandit.learning_rate,
            "exploration": bandit.exploration,
            "horizon": bandit.horizon,
            "loss_estimator": bandit.loss_estimator,
            "rollout_horizon": bandit.rollout_horizon,
            "rollout_smoothing": bandit.rollout_smoothing,
            "loss_scale": bandit.loss_scale,
        },
        "zoom": {**zoom_section, "bounds": list(zoom_section["bounds"]), "initial_grid": initial_grid},
        "lambda_grid": {
            "min": lam_grid.lo,
            "max": lam_grid.hi,
            "points": lam_grid.points,
            "reference_state": lam_grid.reference_state,
            "model_index": lam_grid.model_index,
        },
        "equilibrium": {"mode": eq_mode, "tol": eq_tol},
    }

    return ExperimentConfig(
        kind=kind,
        instance=instance,
        conjectures=conjectures,
        soft=soft,
        bandit=bandit,
        zoom=zoom,
        zoom_initial_grid=initial_grid,
        lambda_grid=lam_grid,
        equilibrium_mode=eq_mode,
        equilibrium_tol=eq_tol,
        output_dir=output_dir,
        seed=seed,
        raw=resolved,
    )


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON experiment config from disk."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"{path}: parse error at line {err.lineno}, column {err.colno}: {err.msg}"
        ) from None
    return config_from_dict(data)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


PLOT_SCRIPT = """\
#!/usr/bin/env python
# Generic plotting helper for the CSVs in this run directory.
# Optional: requires matplotlib (not a package dependency).
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt


def is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


run_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
for csv_path in sorted(run_dir.glob("*.csv")):
    with open(csv_path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        continue
    numeric = [k for k in rows[0] if all(is_float(r[k]) for r in rows)]
    if len(numeric) < 2:
        continue
    x = [float(r[numeric[0]]) for r in rows]
    fig, ax = plt.subplots()
    for col in numeric[1:]:
        ax.plot(x, [float(r[col]) for r in rows], label=col)
    ax.set_xlabel(numeric[0])
    ax.legend()
    ax.set_title(csv_path.name)
    fig.savefig(csv_path.with_suffix(".png"))
    print("wrote", csv_path.with_suffix(".png"))
"""


def run_experiment(cfg: ExperimentConfig) -> RunArtifacts:
    """Dispatch to the pipeline for ``cfg.kind`` and write its artifact set."""
    start = time.perf_counter()
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)

    if cfg.kind == "case-study":
        csvs = _run_case_study(cfg, out)
    elif cfg.kind == "lambda-sweep":
        csvs = _run_lambda_sweep(cfg, out)
    elif cfg.kind == "zooming":
        csvs = _run_zooming(cfg, out)
    elif cfg.kind == "equilibrium-report":
        csvs = _run_equilibrium_report(cfg, out)
    elif cfg.kind == "duality-audit":
        csvs = _run_duality_audit(cfg, out)
    else:  # pragma: no cover - guarded by config validation
        raise ConfigError(f"experiment: unknown kind {cfg.kind!r}")

    plot_path = out / "plot.py"
    plot_path.write_text(PLOT_SCRIPT)

    manifest_path = out / "manifest.json"
    manifest = {
        "experiment": cfg.kind,
        "seed": cfg.seed,
        "config": cfg.raw,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "berknash": __version__,
        },
        "artifacts": {name: path.name for name, path in csvs.items()},
        "wall_clock_seconds": time.perf_counter() - start,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunArtifacts(output_dir=out, manifest_path=manifest_path, csv_paths=csvs)


def _run_case_study(cfg: ExperimentConfig, out: Path) -> dict[str, Path]:
    record = run_exp3(cfg.instance, cfg.conjectures, cfg.bandit, cfg.soft)
    freq_path = out / "frequencies.csv"
    counts = np.bincount(record.arms, minlength=len(cfg.conjectures))
    _write_csv(
        freq_path,
        ["arm", "label", "param", "count", "frequency", "oracle_loss"],
        [
            (
                k,
                record.labels[k],
                "" if record.params[k] is None else record.params[k],
                int(counts[k]),
                record.selection_frequencies[k],
                record.oracle_losses[k],
            )
            for k in range(len(cfg.conjectures))
        ],
    )
    trace_path = out / "loss_trace.csv"
    _write_csv(
        trace_path,
        ["t", "arm", "label", "param", "prob", "loss", "running_mean", "regret"],
        [
            (
                t + 1,
                int(record.arms[t]),
                record.labels[record.arms[t]],
                "" if record.params[record.arms[t]] is None
                else record.params[record.arms[t]],
                record.probs[t],
                record.losses[t],
                record.running_mean[t],
                record.regret[t],
            )
            for t in range(cfg.bandit.horizon)
        ],
    )
    return {"frequencies": freq_path, "loss_trace": trace_path}


def _run_lambda_sweep(cfg: ExperimentConfig, out: Path) -> dict[str, Path]:
    member = cfg.conjectures.members[cfg.lambda_grid.model_index]
    m_theta = cfg.instance.with_kernel(member.kernel)
    rows = []
    for lam in cfg.lambda_grid.values():
        # The policy depends on q/lambda, so the fixed-point tolerance can
        # grow with lambda; an absolute 1e-10 at lambda=1e4 would sit below
        # the float noise floor of a ~1e5 fixed point.
        soft_cfg = SoftPlanConfig(
            temperature=float(lam),
            fp_tol=cfg.soft.fp_tol * max(1.0, float(lam)),
            max_iters=cfg.soft.max_iters,
        )
        pi, v_soft, _ = soft_best_response(m_theta, soft_cfg)
        # Reward-only evaluation of the softmax policy under the same
        # kernel it was planned against (no entropy bonus in either term).
        v_reward = policy_value(m_theta, pi)
        for x in range(cfg.instance.num_states):
            for a in range(cfg.instance.num_actions):
                rows.append((lam, x, a, pi[x, a], v_soft[x], v_reward[x]))
    sweep_path = out / "sweep.csv"
    _write_csv(
        sweep_path,
        ["lambda", "state", "action", "pi", "v_soft", "v_reward"],
        rows,
    )
    return {"sweep": sweep_path}


def _run_zooming(cfg: ExperimentConfig, out: Path) -> dict[str, Path]:
    lo, hi = cfg.zoom.bounds
    initial = np.linspace(lo, hi, cfg.zoom_initial_grid)
    record = run_zoom_exp3(
        cfg.instance,
        lambda eps: mixture_kernel(cfg.instance, float(eps)),
        list(initial),
        cfg.bandit,
        cfg.zoom,
        cfg.soft,
    )
    T = cfg.bandit.horizon
    trace_path = out / "param_trace.csv"
    _write_csv(
        trace_path,
        ["t", "param", "prob", "loss", "running_mean", "set_size"],
        [
            (
                t + 1,
                record.selected_params[t],
                record.probs[t],
                record.losses[t],
                record.running_mean[t],
                int(record.set_sizes[t]),
            )
            for t in range(T)
        ],
    )
    size_path = out / "set_size.csv"
    _write_csv(
        size_path,
        ["t", "num_arms"],
        [(t + 1, int(record.set_sizes[t])) for t in range(T)],
    )
    final_path = out / "final_set.csv"
    _write_csv(
        final_path,
        ["param", "mean_loss", "count", "weight"],
        [
            (
                record.final_params[k],
                record.final_mean_losses[k],
                int(record.final_counts[k]),
                record.final_weights[k],
            )
            for k in range(len(record.final_params))
        ],
    )
    events_path = out / "zoom_events.csv"
    _write_csv(
        events_path,
        ["t", "incumbent_param", "num_kept", "num_pruned_suboptimal",
         "num_pruned_converged", "num_added"],
        [
            (
                ev.t,
                ev.incumbent_param,
                len(ev.kept),
                sum(1 for _, why in ev.pruned if why == "suboptimal"),
                sum(1 for _, why in ev.pruned if why == "converged"),
                len(ev.added),
            )
            for ev in record.events
        ],
    )
    return {
        "param_trace": trace_path,
        "set_size": size_path,
        "final_set": final_path,
        "zoom_events": events_path,
    }


def _run_equilibrium_report(cfg: ExperimentConfig, out: Path) -> dict[str, Path]:
    modes = ("hard", "soft") if cfg.equilibrium_mode == "both" else (cfg.equilibrium_mode,)
    K = len(cfg.conjectures)
    rows = []
    summary_lines = []
    for mode in modes:
        report = enumerate_equilibria(
            cfg.instance,
            cfg.conjectures,
            mode=mode,
            temperature=cfg.soft.temperature if mode == "soft" else None,
            tol=cfg.equilibrium_tol,
        )
        residuals_by_key = {
            (e.model_index, e.policy_kind): e.feasibility.residuals
            for e in report.equilibria
        }
        for diag in report.diagnostics:
            res = residuals_by_key.get((diag.model_index, diag.policy_kind), {})
            divs = (
                ["" for _ in range(K)]
                if diag.divergence_vector is None
                else list(diag.divergence_vector)
            )
            rows.append(
                [
                    mode,
                    diag.model_index,
                    diag.label,
                    diag.policy_kind,
                    diag.accepted,
                    diag.tie_states,
                    diag.reason,
                ]
                + divs
                + [
                    res.get("subjective_flow", ""),
                    res.get("true_frequency", ""),
                    res.get("policy_consistency", ""),
                    res.get("kl_minimality", ""),
                ]
            )
        summary_lines.append(f"mode={mode}: {len(report.equilibria)} equilibrium(ia)")
        for e in report.equilibria:
            summary_lines.append(
                f"  model {e.model_index} ({e.label}), policy={e.policy_kind}, "
                f"divergence={e.divergence:.6g}"
            )
        ties = sum(d.tie_states for d in report.diagnostics)
        if mode == "hard" and ties:
            summary_lines.append(
                "  note: greedy ties present; equilibria needing strictly interior"
                " randomization over tied actions are not searched"
            )
    eq_path = out / "equilibria.csv"
    _write_csv(
        eq_path,
        ["mode", "model_index", "label", "policy_kind", "accepted", "tie_states", "reason"]
        + [f"divergence_{k}" for k in range(K)]
        + ["res_subjective_flow", "res_true_frequency", "res_policy_consistency",
           "res_kl_minimality"],
        rows,
    )
    summary_path = out / "summary.txt"
    summary_path.write_text("\n".join(summary_lines) + "\n")
    return {"equilibria": eq_path, "summary": summary_path}


def _run_duality_audit(cfg: ExperimentConfig, out: Path) -> dict[str, Path]:
    rows = []
    for k, member in enumerate(cfg.conjectures):
        m_k = cfg.instance.with_kernel(member.kernel)
        v = value_iteration(m_k)
        primal = simplex_solve(build_primal_lp(m_k))
        dual = simplex_solve(build_dual_lp(m_k))
        eta = dual.x.reshape(cfg.instance.num_states, cfg.instance.num_actions)

        # complementary slackness: positive occupation mass must sit on
        # tight primal rows
        lp = build_primal_lp(m_k)
        slack = lp.constraints @ primal.x - lp.rhs
        slackness = 0.0
        for x in range(cfg.instance.num_states):
            for a in range(cfg.instance.num_actions):
                if eta[x, a] > 1e-8:
                    slackness = max(slackness, abs(slack[x * cfg.instance.num_actions + a]))

        greedy = greedy_sets(m_k, v)
        pi = policy_from_occupation(eta)
        greedy_ok = all(
            set(np.flatnonzero(pi[x] > 1e-8)) <= set(greedy[x].tolist())
            for x in range(cfg.instance.num_states)
        )
        rows.append(
            (
                k,
                member.label,
                primal.objective,
                v.sum(),
                dual.objective,
                float(cfg.instance.initial_dist @ v),
                abs(primal.objective - v.sum()),
                abs(dual.objective - float(cfg.instance.initial_dist @ v)),
                slackness,
                greedy_ok,
            )
        )
    path = out / "duality.csv"
    _write_csv(
        path,
        [
            "model_index",
            "label",
            "primal_objective",
            "vi_sum_values",
            "dual_objective",
            "vi_mu0_weighted",
            "primal_gap",
            "dual_gap",
            "max_slackness_violation",
            "occupation_policy_greedy",
        ],
        rows,
    )
    return {"duality": path}
