"""Experiment orchestration and reporting."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agents import make_agent
from .config import ALGORITHMS, ScenarioConfig, scenario_hash
from .env import EpisodeAccumulator, EpisodeMetrics, SlicingEnv

CSV_COLUMNS = ("algorithm", "seed", "episode", "reward", "urllc_delay_ms",
               "embb_throughput_mbps", "pdr")
METRICS = ("reward", "urllc_delay_ms", "embb_throughput_mbps", "pdr")
# metrics where smaller is better
LOWER_IS_BETTER = ("urllc_delay_ms", "pdr")
FINAL_WINDOW = 0.2

# reference improvement figures over Q-learning, shown beside measured values
REPORTED_IMPROVEMENT_PCT = {"urllc_delay_ms": 21.92, "embb_throughput_mbps": 24.22, "pdr": 23.63}


@dataclass
class RunResult:
    scenario_hash: str
    algorithm: str
    seed: int
    per_episode: list[EpisodeMetrics]
    wall_time: float = 0.0


def run(config: ScenarioConfig, trace=None, agent_out: list | None = None) -> RunResult:
    """Train one agent for ``num_episodes`` episodes; the environment resets every
    episode while the agent persists.

    ``trace`` may be a writable text stream receiving a per-TTI CSV. When
    ``agent_out`` is a list the trained agent is appended to it.
    """
    config.validate()
    started = time.perf_counter()
    mdp = config.mdp
    env = SlicingEnv(config)
    agent = make_agent(config.agent, env.num_states, env.num_actions, config.seed)
    cap = mdp.queue_cap
    writer = None
    if trace is not None:
        writer = csv.writer(trace, lineterminator="\n")
        writer.writerow(["episode", "tti", "action", "q_embb", "q_urllc", "reward",
                         "delivered_embb", "delivered_urllc"])
    per_episode = []
    for episode in range(mdp.num_episodes):
        obs = env.reset(episode)
        s = obs.index(cap)
        acc = EpisodeAccumulator(config)
        for tti in range(mdp.ttis_per_episode):
            a = agent.act(s).action_index
            next_obs, metrics = env.step(a)
            s_next = next_obs.index(cap)
            agent.observe(s, a, metrics.reward, s_next)
            acc.add(metrics)
            if writer is not None:
                n_urllc = sum(1 for d in metrics.delivered if d.slice == "urllc")
                writer.writerow([episode, tti, a, obs.q_embb, obs.q_urllc, repr(metrics.reward),
                                 len(metrics.delivered) - n_urllc, n_urllc])
            s, obs = s_next, next_obs
        agent.end_episode(episode)
        per_episode.append(acc.result())
    if agent_out is not None:
        agent_out.append(agent)
    return RunResult(scenario_hash(config), config.agent.algorithm, config.seed, per_episode,
                     time.perf_counter() - started)


def _episode_row(m: EpisodeMetrics) -> dict:
    return {"reward": m.mean_reward, "urllc_delay_ms": m.mean_urllc_delay,
            "embb_throughput_mbps": m.mean_embb_throughput, "pdr": m.pdr_urllc}


def final_window(result: RunResult, fraction: float = FINAL_WINDOW) -> dict[str, float]:
    """Mean of each metric over the last ``fraction`` of episodes."""
    n = len(result.per_episode)
    if n == 0:
        return {k: math.nan for k in METRICS}
    k = max(1, int(round(n * fraction)))
    rows = [_episode_row(m) for m in result.per_episode[-k:]]
    out = {}
    for key in METRICS:
        vals = [r[key] for r in rows if not math.isnan(r[key])]
        out[key] = sum(vals) / len(vals) if vals else math.nan
    return out


def improvement(metric: str, baseline: float, candidate: float) -> float:
    """Signed relative improvement in percent; positive means better."""
    if baseline == 0:
        return 0.0 if candidate == baseline else math.copysign(math.inf, baseline - candidate
                                                               if metric in LOWER_IS_BETTER
                                                               else candidate - baseline)
    if metric in LOWER_IS_BETTER:
        return 100.0 * (baseline - candidate) / baseline
    return 100.0 * (candidate - baseline) / baseline


def degradation(metric: str, clean: float, corrupted: float) -> float:
    """Signed relative degradation in percent; positive means the corrupted arm is worse."""
    return -improvement(metric, clean, corrupted)


@dataclass
class ComparisonReport:
    algorithms: list[str]
    seeds: list[int]
    # algorithm -> seed -> metric -> final-window value
    per_seed: dict[str, dict[int, dict[str, float]]]
    per_algorithm: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    relative_improvement: dict[str, dict[str, float]] = field(default_factory=dict)
    baseline: str = "q_learning"

    def __post_init__(self):
        if not self.per_algorithm:
            self.per_algorithm = {a: _aggregate(self.per_seed[a]) for a in self.algorithms}
        if not self.relative_improvement:
            base = self.per_algorithm[self.baseline]
            self.relative_improvement = {
                a: {k: improvement(k, base[k]["mean"], self.per_algorithm[a][k]["mean"])
                    for k in METRICS}
                for a in self.algorithms
            }

    def paired(self, algorithm: str, metric: str) -> np.ndarray:
        return np.array([self.per_seed[algorithm][s][metric] for s in self.seeds])

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "algorithms": list(self.algorithms),
            "seeds": list(self.seeds),
            "per_seed": {a: {str(s): dict(v) for s, v in d.items()}
                         for a, d in self.per_seed.items()},
            "per_algorithm": self.per_algorithm,
            "relative_improvement": self.relative_improvement,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ComparisonReport":
        return cls(
            algorithms=list(doc["algorithms"]),
            seeds=[int(s) for s in doc["seeds"]],
            per_seed={a: {int(s): dict(v) for s, v in d.items()}
                      for a, d in doc["per_seed"].items()},
            per_algorithm=doc["per_algorithm"],
            relative_improvement=doc["relative_improvement"],
            baseline=doc.get("baseline", "q_learning"),
        )


def _aggregate(by_seed: dict[int, dict[str, float]]) -> dict[str, dict[str, float]]:
    out = {}
    for key in METRICS:
        vals = np.array([v[key] for v in by_seed.values()], dtype=float)
        vals = vals[~np.isnan(vals)]
        out[key] = {
            "mean": float(vals.mean()) if vals.size else math.nan,
            "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
        }
    return out


def _check_algorithms(algorithms) -> None:
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {a!r}")


def run_grid(config: ScenarioConfig, algorithms, seeds, adversarial_table=None,
             progress=None) -> dict[str, dict[int, RunResult]]:
    """Run every (algorithm, seed) pair; environment streams depend on the seed only."""
    _check_algorithms(algorithms)
    results: dict[str, dict[int, RunResult]] = {}
    for algo in algorithms:
        results[algo] = {}
        for seed in seeds:
            cfg = config.replace(seed=seed).with_agent(algorithm=algo,
                                                       adversarial_table=adversarial_table)
            results[algo][seed] = run(cfg)
            if progress is not None:
                progress(algo, seed, results[algo][seed])
    return results


def compare(config: ScenarioConfig, algorithms, seeds, progress=None,
            results: dict | None = None) -> ComparisonReport:
    algorithms = list(algorithms)
    seeds = list(seeds)
    if not seeds:
        raise ValueError("compare needs at least one seed")
    if "q_learning" not in algorithms:
        raise ValueError("compare needs q_learning as the baseline")
    if results is None:
        results = run_grid(config, algorithms, seeds, progress=progress)
    per_seed = {a: {s: final_window(results[a][s]) for s in seeds} for a in algorithms}
    return ComparisonReport(algorithms, seeds, per_seed)


ROBUST_ALGORITHMS = ("double_q", "self_play_ensemble")


@dataclass
class RobustnessReport:
    seeds: list[int]
    # algorithm -> arm ("clean" / "corrupted") -> seed -> metric -> value
    per_seed: dict[str, dict[str, dict[int, dict[str, float]]]]
    summary: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.summary:
            for algo, arms in self.per_seed.items():
                clean, bad = _aggregate(arms["clean"]), _aggregate(arms["corrupted"])
                self.summary[algo] = {
                    k: {"clean": clean[k]["mean"], "corrupted": bad[k]["mean"],
                        "degradation_pct": degradation(k, clean[k]["mean"], bad[k]["mean"])}
                    for k in METRICS
                }

    def paired(self, algorithm: str, arm: str, metric: str) -> np.ndarray:
        return np.array([self.per_seed[algorithm][arm][s][metric] for s in self.seeds])

    def to_dict(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "per_seed": {a: {arm: {str(s): dict(v) for s, v in d.items()}
                             for arm, d in arms.items()}
                         for a, arms in self.per_seed.items()},
            "summary": self.summary,
        }


def robustness(config: ScenarioConfig, seeds, adversary: bool = True, progress=None,
               clean_results: dict | None = None) -> RobustnessReport:
    """Clean vs corrupted arms for double Q-learning and the self-play ensemble.

    The corrupted arm attacks table 0 (table A for double Q-learning). With
    ``adversary=False`` both arms are clean, which is the null experiment.
    ``clean_results`` lets a caller reuse clean runs from a comparison grid.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("robustness needs at least one seed")
    per_seed = {}
    for algo in ROBUST_ALGORITHMS:
        if clean_results is not None and algo in clean_results:
            clean = clean_results[algo]
        else:
            clean = run_grid(config, [algo], seeds, progress=progress)[algo]
        bad = run_grid(config, [algo], seeds, adversarial_table=0 if adversary else None,
                       progress=progress)[algo]
        per_seed[algo] = {
            "clean": {s: final_window(clean[s]) for s in seeds},
            "corrupted": {s: final_window(bad[s]) for s in seeds},
        }
    return RobustnessReport(seeds, per_seed)


def result_csv(results) -> str:
    """CSV text for one :class:`RunResult` or an iterable of them, sorted by
    (algorithm, seed)."""
    if isinstance(results, RunResult):
        results = [results]
    results = sorted(results, key=lambda r: (r.algorithm, r.seed))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in results:
        for i, m in enumerate(r.per_episode):
            writer.writerow([r.algorithm, r.seed, i, repr(float(m.mean_reward)),
                             repr(float(m.mean_urllc_delay)), repr(float(m.mean_embb_throughput)),
                             repr(float(m.pdr_urllc))])
    return out.getvalue()


def parse_result_csv(text: str) -> dict[tuple[str, int], list[EpisodeMetrics]]:
    rows: dict[tuple[str, int], list[EpisodeMetrics]] = {}
    for rec in csv.DictReader(io.StringIO(text)):
        key = (rec["algorithm"], int(rec["seed"]))
        rows.setdefault(key, []).append(EpisodeMetrics(
            mean_reward=float(rec["reward"]),
            mean_urllc_delay=float(rec["urllc_delay_ms"]),
            mean_embb_throughput=float(rec["embb_throughput_mbps"]),
            pdr_urllc=float(rec["pdr"]),
        ))
    return rows


def comparison_summary(report: ComparisonReport) -> str:
    lines = [f"baseline: {report.baseline}  seeds: {len(report.seeds)}  "
             f"window: final {int(FINAL_WINDOW * 100)}% of episodes", ""]
    header = f"{'algorithm':<20}" + "".join(f"{k:>28}" for k in METRICS)
    lines.append(header)
    for a in report.algorithms:
        agg = report.per_algorithm[a]
        lines.append(f"{a:<20}" + "".join(
            f"{agg[k]['mean']:>17.4f} +- {agg[k]['std']:<7.4f}" for k in METRICS))
    lines.append("")
    lines.append("relative improvement vs baseline (%), reported values in brackets")
    for a in report.algorithms:
        imp = report.relative_improvement[a]
        cells = []
        for k in METRICS:
            ref = REPORTED_IMPROVEMENT_PCT.get(k)
            ref_txt = f" [{ref:.2f}]" if ref is not None and a == "self_play_ensemble" else ""
            cells.append(f"{k}={imp[k]:+.2f}{ref_txt}")
        lines.append(f"{a:<20}" + "  ".join(cells))
    return "\n".join(lines) + "\n"


def robustness_summary(report: RobustnessReport) -> str:
    lines = [f"seeds: {len(report.seeds)}  corrupted table: 0", ""]
    for algo, metrics in report.summary.items():
        lines.append(algo)
        for k, v in metrics.items():
            lines.append(f"  {k:<22} clean={v['clean']:.4f} corrupted={v['corrupted']:.4f} "
                         f"degradation={v['degradation_pct']:+.2f}%")
    return "\n".join(lines) + "\n"


def emit(obj, path, fmt: str = "csv") -> Path:
    """Write a run result (or list of them) or a report to ``path``.

    ``csv`` gives one row per (algorithm, seed, episode) for results; reports
    are written in ``summary`` text form.
    """
    path = Path(path)
    if fmt == "csv":
        if isinstance(obj, (ComparisonReport, RobustnessReport)):
            raise ValueError("csv format applies to run results; use summary for reports")
        text = result_csv(obj)
    elif fmt == "summary":
        if isinstance(obj, ComparisonReport):
            text = comparison_summary(obj)
        elif isinstance(obj, RobustnessReport):
            text = robustness_summary(obj)
        else:
            results = [obj] if isinstance(obj, RunResult) else list(obj)
            text = "".join(
                f"{r.algorithm} seed={r.seed} " + " ".join(
                    f"{k}={v:.4f}" for k, v in final_window(r).items()) + "\n"
                for r in results)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path
