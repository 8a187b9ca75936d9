"""Experiment orchestration: seeded multi-run training, learning-rate
sweeps, the per-episode performance measure with its selection window,
and CSV/figure reporting.

All report paths write delimited output first and render a matplotlib
figure next to it. Sweeps parallelize across (cell, run) pairs on a
process pool; results are keyed and reduced in key order, so output files
are byte-identical regardless of scheduling.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import ddpg
from .adapters import DescriptorSet, Partition, make_descriptors, partition_adapter, repeat_adapter
from .config import (ToolkitConfig, arch_from_settings, default_config,
                     make_heat_invader_env, make_pde_model_env)
from .ddpg import RUNLOG_CSV_HEADER, RunLog, TrainConfig, make_actor, make_critic, train_run
from .errors import AggregationError, ConfigurationError, SweepError
from .fields import save_field

plt.rcParams["svg.fonttype"] = "none"
plt.rcParams["svg.hashsalt"] = "pdectrl"

DOMAINS = ("pde_model", "heat_invader")

# 1-based inclusive selection windows for 200-episode runs
EVALUATE_WINDOWS = {"pde_model": (180, 200), "heat_invader": (150, 200)}

ACTION_RANGES = {"pde_model": (-1.0, 1.0), "heat_invader": (-0.5, 0.0)}
ACTOR_OUTPUT_ACTIVATIONS = {"pde_model": "tanh", "heat_invader": "sigmoid"}


@dataclass
class ExperimentSpec:
    domain: str = "pde_model"
    variant: str = "descriptor"
    k: int = 36
    d: int = 6  # PDE Model grid side
    airflow: str = "uniform"
    episodes: int = 200
    runs: int = 1
    actor_lrs: tuple = (1e-4,)
    multipliers: tuple = (10.0,)
    seed: int = 0
    out_dir: str = "out"
    workers: int = 1
    config: ToolkitConfig = field(default_factory=default_config)

    def validate(self):
        if self.domain not in DOMAINS:
            raise ConfigurationError(f"unknown domain {self.domain!r}")
        if self.variant not in ddpg.ACTOR_VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")
        if not self.actor_lrs or not self.multipliers:
            raise ConfigurationError("the sweep grid must not be empty")


@dataclass
class AggregateCurve:
    """Across-run mean reward per step, one point per episode."""

    label: str
    means: np.ndarray
    stderr: np.ndarray

    @property
    def episodes(self) -> int:
        return len(self.means)


def aggregate(run_logs, label: str = "") -> AggregateCurve:
    """Per-episode mean across runs with the sample standard error."""
    if not run_logs:
        raise AggregationError("no run logs to aggregate")
    lengths = {len(log.records) for log in run_logs}
    if len(lengths) != 1:
        raise AggregationError(f"run logs have mismatched episode counts: {sorted(lengths)}")
    per_run = np.stack([log.episode_means() for log in run_logs])  # (N, E)
    n = per_run.shape[0]
    means = per_run.mean(axis=0)
    stderr = per_run.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(means)
    return AggregateCurve(label=label, means=means, stderr=stderr)


def evaluate_window(curve: AggregateCurve, domain: str, m: int | None = None,
                    n: int | None = None) -> float:
    """Sum of the per-episode means over the selection window [m, n]
    (1-based, both ends inclusive). Defaults to the domain's window for
    200-episode runs."""
    if m is None or n is None:
        m, n = EVALUATE_WINDOWS[domain]
    if not 1 <= m <= n:
        raise ValueError(f"invalid window [{m}, {n}]")
    if curve.episodes < n:
        raise ValueError(f"curve covers {curve.episodes} episodes, window needs {n}")
    return float(np.sum(curve.means[m - 1 : n]))


def scaled_window(domain: str, episodes: int) -> tuple[int, int]:
    """The domain's selection window scaled proportionally to a shorter run."""
    m0, n0 = EVALUATE_WINDOWS[domain]
    m = max(1, round(episodes * m0 / n0))
    return m, episodes


def window_sum_stats(run_logs, m: int, n: int) -> tuple[float, float]:
    """Evaluate as the across-run mean of per-run window sums, with its
    standard error (0 for a single run)."""
    sums = np.array([np.sum(log.episode_means()[m - 1 : n]) for log in run_logs])
    stderr = sums.std(ddof=1) / np.sqrt(len(sums)) if len(sums) > 1 else 0.0
    return float(sums.mean()), float(stderr)


def downsample_mean(values: np.ndarray, side: int) -> np.ndarray:
    """Block-mean a square grid down to side x side (blocks as equal as
    np.array_split allows). Identity when the sizes already match."""
    if values.shape[0] == side:
        return values
    row_blocks = np.array_split(values, side, axis=0)
    out = np.empty((side, side))
    for i, rb in enumerate(row_blocks):
        for j, block in enumerate(np.array_split(rb, side, axis=1)):
            out[i, j] = block.mean()
    return out


# ---------------------------------------------------------------------------
# single runs

def _pde_grid_adapter(descriptors: DescriptorSet, d: int):
    """Partition adapter specialized to the d x d action grid: each cell
    centre takes the value of its nearest descriptor."""
    centers = (np.arange(d) + 0.5) / d - 0.5
    xg, yg = np.meshgrid(centers, centers)
    queries = np.column_stack([xg.ravel(), yg.ravel()])
    part = Partition(descriptors, lo=(-0.5, -0.5), hi=(0.5, 0.5))
    idx = part.assign(queries)

    def adapter(u):
        return np.asarray(u)[idx].reshape(d, d)

    return adapter


def run_experiment_once(domain: str, variant: str, k: int, d: int, airflow: str,
                        episodes: int, run_seed: int, actor_lr: float, critic_lr: float,
                        cfg: ToolkitConfig, run_id: int = 0) -> RunLog:
    """Build environment, descriptors, adapter and networks for one seeded
    run and execute the training loop."""
    arch = arch_from_settings(cfg.networks)
    lo, hi = ACTION_RANGES[domain]
    out_act = ACTOR_OUTPUT_ACTIVATIONS[domain]

    if domain == "pde_model":
        pm = cfg.pde_model if not d or d == cfg.pde_model.d else replace(cfg.pde_model, d=d)
        env = make_pde_model_env(pm, seed=run_seed)
        descriptors = make_descriptors("pde_model", k)
        adapter = _pde_grid_adapter(descriptors, env.d)
        native_side = env.d
        steps = cfg.pde_model.steps_per_episode
    else:
        env = make_heat_invader_env(cfg.heat_invader, seed=run_seed, airflow=airflow)
        descriptors = make_descriptors("heat_invader", k)
        adapter = repeat_adapter
        native_side = env.grid
        steps = cfg.heat_invader.steps_per_episode

    obs_side = cfg.networks.state_side or native_side
    obs_fn = None
    if obs_side != native_side:
        obs_fn = lambda values: downsample_mean(values, obs_side)

    net_rng_actor = np.random.default_rng([run_seed, 1])
    net_rng_critic = np.random.default_rng([run_seed, 2])
    actor = make_actor(variant, obs_side, descriptors, arch, out_act, lo, hi, net_rng_actor)
    critic = make_critic(obs_side, k, arch, net_rng_critic)

    tc = TrainConfig(gamma=cfg.train.gamma, tau=cfg.train.tau,
                     actor_lr=actor_lr, critic_lr=critic_lr,
                     batch_size=cfg.train.batch_size, episodes=episodes,
                     steps_per_episode=steps,
                     buffer_capacity=cfg.train.buffer_capacity,
                     l2_decay=cfg.train.l2_decay, noise_mode=cfg.train.noise_mode,
                     seed=run_seed)
    return train_run(env, actor, critic, adapter, tc, run_id=run_id, obs_fn=obs_fn)


def _sweep_task(payload):
    key, args = payload
    return key, run_experiment_once(*args)


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepResult:
    cells: list  # (actor_lr, multiplier) in grid order
    curves: dict  # cell -> AggregateCurve
    evaluates: dict  # cell -> float
    logs: dict  # cell -> list[RunLog]
    best: tuple


def sweep(spec: ExperimentSpec) -> SweepResult:
    """Train every (actor_lr, multiplier) cell of the grid with `runs`
    seeded repetitions each, aggregate, and pick the cell maximizing the
    evaluation window (ties go to the lexicographically lowest cell).

    Writes per-cell run logs and aggregate curves, a summary table, and a
    figure of all cell curves into spec.out_dir.
    """
    spec.validate()
    cells = [(alr, mult) for alr in spec.actor_lrs for mult in spec.multipliers]
    tasks = []
    for ci, (alr, mult) in enumerate(cells):
        for r in range(spec.runs):
            args = (spec.domain, spec.variant, spec.k, spec.d, spec.airflow,
                    spec.episodes, spec.seed + r, alr, alr * mult, spec.config, r)
            tasks.append(((ci, r), args))

    results = {}
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for key, log in pool.map(_sweep_task, tasks):
                results[key] = log
    else:
        for payload in tasks:
            key, log = _sweep_task(payload)
            results[key] = log

    logs = {cell: [results[(ci, r)] for r in range(spec.runs)]
            for ci, cell in enumerate(cells)}

    curves = {}
    evaluates = {}
    window = EVALUATE_WINDOWS[spec.domain]
    m, n = window if spec.episodes >= window[1] else scaled_window(spec.domain, spec.episodes)
    for cell in cells:
        label = f"lr={cell[0]:g} mult={cell[1]:g}"
        curve = aggregate(logs[cell], label=label)
        curves[cell] = curve
        evaluates[cell] = evaluate_window(curve, spec.domain, m, n)

    finite = [c for c in cells if np.isfinite(evaluates[c])]
    if not finite:
        raise SweepError("every sweep cell produced a non-finite evaluation; "
                         "see the per-cell logs for aborted episodes")
    best = max(finite, key=lambda c: (evaluates[c], (-c[0], -c[1])))

    _write_sweep_outputs(spec, cells, logs, curves, evaluates, best, (m, n))
    return SweepResult(cells=cells, curves=curves, evaluates=evaluates, logs=logs, best=best)


def _cell_dir_name(cell) -> str:
    return f"cell_lr{cell[0]:g}_mult{cell[1]:g}"


def _write_sweep_outputs(spec, cells, logs, curves, evaluates, best, window):
    os.makedirs(spec.out_dir, exist_ok=True)
    for cell in cells:
        cell_dir = os.path.join(spec.out_dir, _cell_dir_name(cell))
        os.makedirs(cell_dir, exist_ok=True)
        write_run_logs(logs[cell], os.path.join(cell_dir, "runs.csv"))
        write_curves([curves[cell]], os.path.join(cell_dir, "curve.csv"))
    m, n = window
    lines = ["actor_lr,multiplier,evaluate,best"]
    for cell in cells:
        flag = 1 if cell == best else 0
        lines.append(f"{cell[0]!r},{cell[1]!r},{evaluates[cell]!r},{flag}")
    with open(os.path.join(spec.out_dir, "sweep_summary.csv"), "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    render_curves([curves[c] for c in cells], os.path.join(spec.out_dir, "sweep.svg"))


# ---------------------------------------------------------------------------
# train (single cell, multiple runs)

def train_experiment(spec: ExperimentSpec) -> AggregateCurve:
    """Run one (actor_lr, multiplier) cell with `runs` seeded repetitions
    and write run logs, the aggregate curve, the rendered figure, the
    descriptor dump, and a final-state snapshot into spec.out_dir."""
    spec.validate()
    if len(spec.actor_lrs) != 1 or len(spec.multipliers) != 1:
        raise ConfigurationError("train_experiment expects a single grid cell; use sweep")
    alr, mult = spec.actor_lrs[0], spec.multipliers[0]

    tasks = []
    for r in range(spec.runs):
        args = (spec.domain, spec.variant, spec.k, spec.d, spec.airflow,
                spec.episodes, spec.seed + r, alr, alr * mult, spec.config, r)
        tasks.append(((0, r), args))
    results = {}
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for key, log in pool.map(_sweep_task, tasks):
                results[key] = log
    else:
        for payload in tasks:
            key, log = _sweep_task(payload)
            results[key] = log
    logs = [results[(0, r)] for r in range(spec.runs)]

    os.makedirs(spec.out_dir, exist_ok=True)
    write_run_logs(logs, os.path.join(spec.out_dir, "runs.csv"))
    curve = aggregate(logs, label=f"{spec.variant} k={spec.k}")
    write_curves([curve], os.path.join(spec.out_dir, f"curve_{spec.variant}.csv"))
    render_curves([curve], os.path.join(spec.out_dir, f"curve_{spec.variant}.svg"))

    if spec.domain == "pde_model":
        make_descriptors("pde_model", spec.k).save(os.path.join(spec.out_dir, "descriptors.txt"))
    else:
        make_descriptors("heat_invader", spec.k).save(os.path.join(spec.out_dir, "descriptors.txt"))
    _dump_final_state(spec, os.path.join(spec.out_dir, "state_final.txt"))
    return curve


def _dump_final_state(spec: ExperimentSpec, path):
    """Dump a reset-state snapshot in the plain-text field format."""
    if spec.domain == "pde_model":
        env = make_pde_model_env(spec.config.pde_model, seed=spec.seed)
    else:
        env = make_heat_invader_env(spec.config.heat_invader, seed=spec.seed,
                                    airflow=spec.airflow)
    save_field(env.reset(), path)


# ---------------------------------------------------------------------------
# reporting

def write_run_logs(logs, path) -> None:
    lines = [RUNLOG_CSV_HEADER]
    for log in logs:
        lines.extend(log.csv_rows())
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def write_curves(curves, path) -> None:
    """Delimited aggregate curves: label,episode,mean_reward_per_step,stderr."""
    lines = ["label,episode,mean_reward_per_step,stderr"]
    for c in curves:
        for i in range(c.episodes):
            lines.append(f"{c.label},{i + 1},{float(c.means[i])!r},{float(c.stderr[i])!r}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_curves(path) -> list:
    """Inverse of write_curves; recovers values exactly (repr round-trip)."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "label,episode,mean_reward_per_step,stderr":
        raise ValueError(f"not a curve file: {path}")
    data = {}
    order = []
    for ln in lines[1:]:
        label, ep, mean, se = ln.split(",")
        if label not in data:
            data[label] = ([], [])
            order.append(label)
        data[label][0].append(float(mean))
        data[label][1].append(float(se))
    return [AggregateCurve(label=lab, means=np.array(data[lab][0]),
                           stderr=np.array(data[lab][1])) for lab in order]


def render_curves(curves, path) -> None:
    """Line chart of the aggregate curves with standard-error bands, one
    legend entry per curve in the given order; the raw CSV is written next
    to the figure."""
    if not curves:
        raise ValueError("no curves to render")
    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    for c in curves:
        ep = np.arange(1, c.episodes + 1)
        (line,) = ax.plot(ep, c.means, label=c.label)
        ax.fill_between(ep, c.means - c.stderr, c.means + c.stderr,
                        color=line.get_color(), alpha=0.2, linewidth=0)
    ax.set_xlabel("episode")
    ax.set_ylabel("mean reward per step")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
    plt.close(fig)
    base, _ = os.path.splitext(str(path))
    write_curves(curves, base + ".csv")
