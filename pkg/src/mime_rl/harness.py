"""Experiment runner: training loop, metrics, visitation heatmaps, seed aggregation.

One seed's run alternates: collect a batch, score it with the intrinsic method,
fit the world model on it, then take a PPO step on ``r_ext + eta * r_int``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import shutil
import tempfile
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, dump_config, load_config, parse_config
from .envs import ROOMS, WORMHOLE, make_env, write_trajectory
from .intrinsic import IntrinsicMethod
from .ndmath import Adam, NumericError, save_checkpoint
from .policy import adapt_learning_rate, collect_rollouts, compute_advantages, make_policy, make_value_net, ppo_update

# --- visitation ---------------------------------------------------------------


@dataclass
class VisitationGrid:
    """Dense 2-D visit counts. ``counts[iy, ix]`` covers ``[x0 + ix*w, x0 + (ix+1)*w)`` and likewise for y."""

    bin_width: float
    origin: tuple[float, float]
    counts: np.ndarray

    @classmethod
    def covering(cls, lo: tuple[float, float], hi: tuple[float, float], bin_width: float) -> "VisitationGrid":
        nx = max(1, math.ceil((hi[0] - lo[0]) / bin_width))
        ny = max(1, math.ceil((hi[1] - lo[1]) / bin_width))
        return cls(bin_width, (float(lo[0]), float(lo[1])), np.zeros((ny, nx), dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def extent(self) -> tuple[float, float, float, float]:
        ny, nx = self.counts.shape
        x0, y0 = self.origin
        return x0, x0 + nx * self.bin_width, y0, y0 + ny * self.bin_width

    def indices(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ix = np.floor((xy[:, 0] - self.origin[0]) / self.bin_width).astype(np.int64)
        iy = np.floor((xy[:, 1] - self.origin[1]) / self.bin_width).astype(np.int64)
        return ix, iy

    def _grow(self, ix: np.ndarray, iy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.counts.shape
        left, below = max(0, -int(ix.min())), max(0, -int(iy.min()))
        right, above = max(0, int(ix.max()) + 1 - nx), max(0, int(iy.max()) + 1 - ny)
        if left or below or right or above:
            self.counts = np.pad(self.counts, ((below, above), (left, right)))
            self.origin = (self.origin[0] - left * self.bin_width, self.origin[1] - below * self.bin_width)
        return ix + left, iy + below


def record_visitation(grid: VisitationGrid, trajectory) -> VisitationGrid:
    """Add one count per (x, y) row of ``trajectory``; points outside the grid enlarge it."""
    xy = np.asarray(trajectory, dtype=np.float64).reshape(-1, 2)
    if len(xy) == 0:
        return grid
    ix, iy = grid._grow(*grid.indices(xy))
    np.add.at(grid.counts, (iy, ix), 1)
    return grid


def boundary_occupancy(trajectory, radius: float = 0.5, tolerance: float = 0.05) -> float:
    """Fraction of steps whose (x, y) distance from the origin lies within ``tolerance`` of ``radius``."""
    xy = np.asarray(trajectory, dtype=np.float64)
    if xy.ndim != 2 or xy.shape[0] == 0 or xy.shape[1] < 2:
        raise ValueError("boundary occupancy needs a non-empty (n, >=2) trajectory")
    return float(np.mean(_in_annulus(xy, radius, tolerance)))


def _in_annulus(xy: np.ndarray, radius: float, tolerance: float) -> np.ndarray:
    r = np.hypot(xy[:, 0], xy[:, 1])
    return (r >= radius - tolerance) & (r <= radius + tolerance)


def heatmap_levels(counts: np.ndarray) -> np.ndarray:
    """8-bit intensities ``255 * log10(1 + c) / log10(1 + max)``; empty bins are black."""
    counts = np.asarray(counts)
    peak = counts.max() if counts.size else 0
    if peak <= 0:
        return np.zeros(counts.shape, dtype=np.uint8)
    levels = np.log10(1.0 + counts) / np.log10(1.0 + peak)
    return np.rint(255.0 * levels).astype(np.uint8)


def emit_heatmap(grid: VisitationGrid, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (raw counts) and ``<path>.pgm`` (binary graymap, log-scaled).

    Rows appear in storage order, so the lowest y bin is the first row of both files.
    """
    base = Path(path)
    base = base.with_suffix("") if base.suffix in (".csv", ".pgm") else base
    csv_path, pgm_path = base.with_suffix(".csv"), base.with_suffix(".pgm")
    lines = [",".join(str(int(v)) for v in row) for row in grid.counts]
    csv_path.write_text("\n".join(lines) + "\n")
    levels = heatmap_levels(grid.counts)
    ny, nx = levels.shape
    pgm_path.write_bytes(f"P5\n{nx} {ny}\n255\n".encode() + levels.tobytes())
    return csv_path, pgm_path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path} is not a binary graymap")
    nx, ny = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(ny, nx)


def default_grid(cfg: ExperimentConfig, env) -> VisitationGrid:
    w = cfg.metrics.heatmap_bin
    if cfg.env.name == ROOMS:
        layout = env.layout
        size = layout.room_size
        return VisitationGrid.covering((-size, 0), (layout.num_rooms * size, size), w)
    hw = env.half_width
    return VisitationGrid.covering((-hw, -hw), (hw, hw), w)


# --- metrics ------------------------------------------------------------------

DIGEST_EXCLUDES = ("wall_clock",)


@dataclass
class RunMetrics:
    seed: int
    steps: int = 0
    steps_to_first_reward: int | None = None
    boundary_occupancy: float | None = None
    tv_occupancy: float | None = None
    # per-iteration series, aligned by index
    iteration_steps: list = field(default_factory=list)
    episodic_return: list = field(default_factory=list)
    intrinsic_mean: list = field(default_factory=list)
    model_digest: str = ""
    wall_clock: float = 0.0
    error: str | None = None

    def digest(self) -> str:
        """Hash of every field except timing, stable across processes."""
        d = {k: v for k, v in asdict(self).items() if k not in DIGEST_EXCLUDES}
        blob = json.dumps(d, sort_keys=True, allow_nan=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_dict(self) -> dict:
        return dict(asdict(self), digest=self.digest())

    @classmethod
    def from_dict(cls, d: dict) -> "RunMetrics":
        return cls(**{k: v for k, v in d.items() if k != "digest"})


SCALARS = ("steps_to_first_reward", "boundary_occupancy", "tv_occupancy", "steps")
SERIES = ("episodic_return", "intrinsic_mean")


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def aggregate_seeds(runs: list[RunMetrics]) -> dict:
    """Mean and sample standard deviation per metric.

    Missing values (no reward found, metric not applicable) are left out of the
    mean; ``count`` says how many runs contributed and ``missing`` how many did not.
    Series are truncated to the shortest run before averaging pointwise.
    """
    if not runs:
        raise ValueError("need at least one run")
    out: dict = {"runs": len(runs)}
    for name in SCALARS:
        vals = [getattr(r, name) for r in runs if getattr(r, name) is not None]
        entry = {"count": len(vals), "missing": len(runs) - len(vals), "mean": None, "std": None}
        if vals:
            entry["mean"], entry["std"] = _mean_std(vals)
        out[name] = entry
    for name in SERIES:
        n = min(len(getattr(r, name)) for r in runs)
        mat = np.array([getattr(r, name)[:n] for r in runs], dtype=np.float64).reshape(len(runs), n)
        std = mat.std(axis=0, ddof=1) if len(runs) > 1 else np.zeros(n)
        out[name] = {"mean": mat.mean(axis=0).tolist(), "std": std.tolist(), "length": n}
    return out


def median_steps(runs: list[RunMetrics]) -> float:
    """Median steps_to_first_reward with censored runs ranked above every finite value (``inf`` if the median is censored)."""
    vals = [math.inf if r.steps_to_first_reward is None else r.steps_to_first_reward for r in runs]
    return float(np.median(vals)) if vals else math.inf


# --- training loop ----------------------------------------------------------------


def _nets_digest(*digests: str) -> str:
    return hashlib.sha256("".join(digests).encode()).hexdigest()


class _SeedRun:
    """Everything one seed needs; kept as an object so a failure can still write partial artifacts."""

    def __init__(self, cfg: ExperimentConfig, seed: int):
        self.cfg, self.seed = cfg, seed
        env_ss, pol_ss, method_ss, sample_ss = np.random.SeedSequence(seed).spawn(4)
        p, m = cfg.policy, cfg.method
        env_seed = int(env_ss.generate_state(1)[0])
        self.env = make_env(cfg.env.name, p.num_envs, seed=env_seed, max_steps=cfg.env.max_steps, **cfg.env.params)
        self.env.reset()
        spec = self.env.spec
        init_rng = np.random.default_rng(pol_ss)
        self.policy = make_policy(spec, init_rng, hidden=p.hidden, init_log_std=p.init_log_std)
        heads = 2 if p.gamma_int is not None else 1
        self.value_net = make_value_net(spec.observation_dim, init_rng, hidden=p.hidden, heads=heads)
        self.method = IntrinsicMethod(
            m.kind, spec.observation_dim, spec.action_dim, discrete=spec.discrete, feature_mode=m.feature_mode,
            rng=np.random.default_rng(method_ss), hidden=m.hidden, bottleneck=m.bottleneck, feat_dim=m.feat_dim,
            learning_rate=m.learning_rate, minibatches=m.minibatches, epochs=m.epochs, k=m.k,
            bin_width=m.bin_width, normalize=m.normalize,
        )
        self.rng = np.random.default_rng(sample_ss)
        self.policy_opt, self.value_opt = Adam(p.learning_rate), Adam(p.learning_rate)
        self.metrics = RunMetrics(seed=seed)
        self.grid = default_grid(cfg, self.env)
        self.annulus_steps = 0
        self.tv_steps = 0
        self.traj_rows: list[tuple] = []

    def model_digest(self) -> str:
        nets, _ = self.policy.networks()
        parts = [n.digest() for n in nets.values()] + [self.value_net.digest()]
        if self.method.world_model is not None:
            parts.append(self.method.world_model.digest())
        return _nets_digest(*parts)

    def _record(self, batch, cutoff: int) -> None:
        """Fold the first ``cutoff`` time steps of every copy into the running statistics."""
        n, h = batch.num_envs, batch.horizon
        keep = (np.arange(n * h) % h) < cutoff
        pos = batch.info["pos"][keep]
        record_visitation(self.grid, pos)
        if self.cfg.env.name == WORMHOLE:
            self.annulus_steps += int(np.count_nonzero(
                _in_annulus(pos, self.cfg.metrics.boundary_radius, self.cfg.metrics.boundary_tolerance)))
        if self.cfg.env.name == ROOMS:
            self.tv_steps += int(np.count_nonzero(batch.info["room"][keep] == self.env.layout.tv_room))
        if self.cfg.emit.trajectory:
            # copy 0 only; its rows are the first ``horizon`` entries of the env-major batch
            base = self.metrics.steps // n
            for t in range(cutoff):
                self.traj_rows.append((base + t, batch.obs[t], batch.actions[t], batch.r_ext[t],
                                       batch.r_int[t], batch.dones[t]))

    def iterate(self) -> bool:
        """One collect/fit/update round. Returns False when the run is over."""
        cfg, p = self.cfg, self.cfg.policy
        n = p.num_envs
        remaining = cfg.budget - self.metrics.steps
        horizon = min(p.horizon, remaining // n)
        if horizon < 1:
            return False
        batch = collect_rollouts(self.env, self.policy, self.method, horizon, self.rng)
        hit = batch.r_ext.reshape(n, horizon) > 0
        cutoff = horizon
        if hit.any() and self.metrics.steps_to_first_reward is None:
            t = int(np.argmax(hit.any(axis=0)))
            self.metrics.steps_to_first_reward = self.metrics.steps + (t + 1) * n
            if cfg.mode == "first-reward":
                cutoff = t + 1
        self._record(batch, cutoff)
        self.metrics.steps += cutoff * n
        ends = batch.dones.sum()
        self.metrics.iteration_steps.append(self.metrics.steps)
        self.metrics.episodic_return.append(float(batch.r_ext.sum() / max(ends, 1)))
        self.metrics.intrinsic_mean.append(float(batch.r_int.mean()))
        if cfg.mode == "first-reward" and self.metrics.steps_to_first_reward is not None:
            return False
        if self.method.world_model is not None:
            acts = batch.actions[:, 0] if self.env.spec.discrete else batch.actions
            self.method.update(batch.obs, acts, batch.next_obs)
        compute_advantages(batch, p.gamma, p.gae_lambda, self.value_net, eta=p.eta, gamma_int=p.gamma_int,
                           normalize=p.normalize_advantages)
        stats = ppo_update(self.policy, self.value_net, batch, p.clip_eps, p.epochs, p.minibatches,
                           self.policy_opt, self.value_opt, p.entropy_coef, self.rng)
        if p.target_kl is not None:
            adapt_learning_rate(self.policy_opt, stats.final_kl, p.target_kl)
        return True

    def finish(self) -> RunMetrics:
        m = self.metrics
        if self.cfg.env.name == WORMHOLE and m.steps:
            m.boundary_occupancy = self.annulus_steps / m.steps
        if self.cfg.env.name == ROOMS and m.steps:
            m.tv_occupancy = self.tv_steps / m.steps
        m.model_digest = self.model_digest()
        return m

    def write(self, seed_dir: Path) -> None:
        seed_dir.mkdir(parents=True, exist_ok=True)
        emit = self.cfg.emit
        if emit.heatmap and self.grid.total:
            emit_heatmap(self.grid, seed_dir / "heatmap")
        if emit.trajectory and self.traj_rows:
            rows = self.traj_rows
            write_trajectory(seed_dir / "trajectory.csv", [r[0] for r in rows], np.array([r[1] for r in rows]),
                             np.array([r[2] for r in rows]), [r[3] for r in rows], [r[4] for r in rows],
                             [r[5] for r in rows])
        if emit.checkpoints:
            nets, vectors = self.policy.networks()
            nets = {f"policy.{k}": v for k, v in nets.items()}
            nets["value"] = self.value_net
            if self.method.world_model is not None:
                nets["world_model"] = self.method.world_model
            if self.method.target_net is not None:
                nets["target"] = self.method.target_net
            save_checkpoint(seed_dir / "checkpoint.bin", nets, {f"policy.{k}": v for k, v in vectors.items()})
        _write_series(seed_dir / "series.csv", self.metrics)
        (seed_dir / "metrics.json").write_text(json.dumps(self.metrics.to_dict(), indent=1) + "\n")


def _write_series(path: Path, m: RunMetrics) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "steps", "episodic_return", "intrinsic_mean"])
        for i, row in enumerate(zip(m.iteration_steps, m.episodic_return, m.intrinsic_mean)):
            w.writerow([i, *(repr(v) if isinstance(v, float) else v for v in row)])


def run_seed(cfg: ExperimentConfig, seed: int, seed_dir: Path | None = None) -> RunMetrics:
    """Train one seed to completion. Numeric failures are recorded in ``error`` and artifacts kept."""
    start = time.perf_counter()
    run = _SeedRun(cfg, seed)
    try:
        while run.iterate():
            pass
    except (NumericError, FloatingPointError, RuntimeError) as exc:
        run.metrics.error = f"{type(exc).__name__}: {exc}"
        if seed_dir is not None:
            seed_dir.mkdir(parents=True, exist_ok=True)
            (seed_dir / "error.txt").write_text(traceback.format_exc())
    metrics = run.finish()
    metrics.wall_clock = time.perf_counter() - start
    if seed_dir is not None:
        run.write(seed_dir)
    return metrics


def _run_seed_job(args) -> RunMetrics:
    text, seed, seed_dir = args
    return run_seed(parse_config(text), seed, seed_dir)


def version_stamp() -> dict:
    return {"mime_rl": __version__, "numpy": np.__version__, "python": platform.python_version()}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[RunMetrics]
    run_dir: Path | None

    @property
    def errored(self) -> bool:
        return any(r.error for r in self.runs)

    def digests(self) -> dict[int, str]:
        return {r.seed: r.digest() for r in self.runs}


def run_experiment(cfg: ExperimentConfig, run_dir=None, serial: bool = False) -> ExperimentResult:
    """Train every seed in ``cfg`` and write the run directory.

    ``run_dir`` defaults to ``<out_dir>/<run_name>``. Seeds run in worker
    processes unless ``serial`` is set or ``cfg.workers == 1``; results are
    identical either way since seeds share no state.
    """
    run_dir = Path(run_dir) if run_dir is not None else Path(cfg.out_dir) / cfg.run_name
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.yaml").write_text(dump_config(cfg))
    (run_dir / "version.json").write_text(json.dumps(version_stamp(), indent=1) + "\n")
    manifest = {"seeds": list(cfg.seeds), "streams": ["env", "policy_init", "intrinsic", "sampling"],
                "seed_dirs": {str(s): f"seed_{s}" for s in cfg.seeds}}
    (run_dir / "seeds.json").write_text(json.dumps(manifest, indent=1) + "\n")

    jobs = [(dump_config(cfg), s, run_dir / f"seed_{s}") for s in cfg.seeds]
    workers = 1 if serial else min(cfg.workers, len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_run_seed_job, jobs))
    else:
        runs = [_run_seed_job(j) for j in jobs]

    result = ExperimentResult(cfg, runs, run_dir)
    write_metrics(run_dir, runs)
    return result


def write_metrics(run_dir: Path, runs: list[RunMetrics]) -> None:
    payload = {"runs": [r.to_dict() for r in runs], "aggregate": aggregate_seeds(runs)}
    (run_dir / "metrics.json").write_text(json.dumps(payload, indent=1) + "\n")
    with open(run_dir / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "steps", "steps_to_first_reward", "boundary_occupancy", "tv_occupancy",
                    "wall_clock", "error", "digest"])
        for r in runs:
            w.writerow([r.seed, r.steps, _cell(r.steps_to_first_reward), _cell(r.boundary_occupancy),
                        _cell(r.tv_occupancy), f"{r.wall_clock:.3f}", r.error or "", r.digest()])


def _cell(v) -> str:
    return "" if v is None else repr(v)


def load_metrics(run_dir) -> list[RunMetrics]:
    payload = json.loads((Path(run_dir) / "metrics.json").read_text())
    return [RunMetrics.from_dict(d) for d in payload["runs"]]


# --- replay -------------------------------------------------------------------


@dataclass
class ReplayReport:
    matches: dict[int, bool]
    recorded: dict[int, str]
    replayed: dict[int, str]

    @property
    def ok(self) -> bool:
        return bool(self.matches) and all(self.matches.values())


def replay(run_dir, scratch=None) -> ReplayReport:
    """Re-run a finished run from its config snapshot (serially) and compare metrics digests per seed."""
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.yaml", environ={})
    recorded = {r.seed: r.digest() for r in load_metrics(run_dir)}
    own_scratch = scratch is None
    scratch = Path(tempfile.mkdtemp(prefix="replay-")) if own_scratch else Path(scratch)
    try:
        result = run_experiment(cfg, scratch, serial=True)
    finally:
        if own_scratch:
            shutil.rmtree(scratch, ignore_errors=True)
    replayed = result.digests()
    matches = {s: recorded.get(s) == d for s, d in replayed.items()}
    return ReplayReport(matches, recorded, replayed)


# --- comparisons --------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class Comparison:
    env: str
    rows: list[dict]
    checks: list[Check]
    results: dict[str, ExperimentResult]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks) and not any(r.errored for r in self.results.values())

    def to_dict(self) -> dict:
        return {"env": self.env, "rows": self.rows, "checks": [asdict(c) for c in self.checks]}

    def table(self) -> str:
        head = "| method | seeds | found | median steps | mean steps (sd) | boundary occ. (sd) | TV occ. (sd) |"
        lines = [head, "|" + "---|" * 7]
        for r in self.rows:
            lines.append(
                f"| {r['method']} | {r['seeds']} | {r['found']} | {_fmt(r['median_steps'])} "
                f"| {_fmt_ms(r['steps_mean'], r['steps_std'])} | {_fmt_ms(r['boundary_mean'], r['boundary_std'], 4)} "
                f"| {_fmt_ms(r['tv_mean'], r['tv_std'], 4)} |"
            )
        lines.append("")
        for c in self.checks:
            lines.append(f"- {'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
        return "\n".join(lines) + "\n"


def _fmt(v, digits: int = 0) -> str:
    if v is None or (isinstance(v, float) and math.isinf(v)):
        return "censored"
    return f"{v:.{digits}f}"


def _fmt_ms(mean, std, digits: int = 0) -> str:
    if mean is None:
        return "-"
    return f"{mean:.{digits}f} ({std:.{digits}f})"


def comparison_row(method: str, runs: list[RunMetrics]) -> dict:
    agg = aggregate_seeds(runs)
    med = median_steps(runs)
    return {
        "method": method,
        "seeds": len(runs),
        "found": agg["steps_to_first_reward"]["count"],
        "median_steps": None if math.isinf(med) else med,
        "steps_mean": agg["steps_to_first_reward"]["mean"],
        "steps_std": agg["steps_to_first_reward"]["std"],
        "boundary_mean": agg["boundary_occupancy"]["mean"],
        "boundary_std": agg["boundary_occupancy"]["std"],
        "tv_mean": agg["tv_occupancy"]["mean"],
        "tv_std": agg["tv_occupancy"]["std"],
        "digests": {str(r.seed): r.digest() for r in runs},
    }


def comparison_checks(env: str, runs: dict[str, list[RunMetrics]]) -> list[Check]:
    """Qualitative ordering checks for whichever method pairs are present."""
    checks = []

    def occ(method, key):
        vals = [getattr(r, key) for r in runs[method] if getattr(r, key) is not None]
        return float(np.mean(vals)) if vals else math.nan

    if env == "plane" and "none" in runs:
        base = median_steps(runs["none"])
        for m in ("surprisal", "mime"):
            if m in runs:
                med = median_steps(runs[m])
                checks.append(Check(f"{m} median below none", math.isfinite(med) and med < base,
                                    f"{_fmt(med)} vs {_fmt(base)}"))
    if env == WORMHOLE and {"surprisal", "mime"} <= runs.keys():
        s, m = occ("surprisal", "boundary_occupancy"), occ("mime", "boundary_occupancy")
        checks.append(Check("surprisal boundary occupancy above mime", s > m, f"{s:.4f} vs {m:.4f}"))
    if env == ROOMS and {"surprisal", "mime"} <= runs.keys():
        s, m = occ("surprisal", "tv_occupancy"), occ("mime", "tv_occupancy")
        checks.append(Check("surprisal TV occupancy above mime", s > m, f"{s:.4f} vs {m:.4f}"))
    return checks


def compare_methods(cfg: ExperimentConfig, methods: list[str], out_dir=None, serial: bool = False) -> Comparison:
    """Run each method on the template's seeds and budget; write comparison.json and comparison.md."""
    if len(methods) < 2:
        raise ValueError("compare needs at least two methods")
    if len(set(methods)) != len(methods):
        raise ValueError("methods must be distinct")
    out = Path(out_dir) if out_dir is not None else Path(cfg.out_dir) / f"compare-{cfg.env.name}"
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for m in methods:
        sub = cfg.replace(**{"method.kind": m, "name": f"{cfg.env.name}-{m}"})
        results[m] = run_experiment(sub, out / m, serial=serial)
    runs = {m: r.runs for m, r in results.items()}
    comp = Comparison(cfg.env.name, [comparison_row(m, runs[m]) for m in methods],
                      comparison_checks(cfg.env.name, runs), results)
    (out / "comparison.json").write_text(json.dumps(comp.to_dict(), indent=1) + "\n")
    (out / "comparison.md").write_text(comp.table())
    return comp
