#!/usr/bin/env python3
"""
Challenge Ranking - per-metric ranks, task and final leaderboard, bootstrap rank stability, Wilcoxon tests

Ranks are competition ranks (ties share the minimal rank). Bootstrap
iterations resample cases with replacement, paired across teams, and each
iteration b draws from its own stream derived from (seed, b) so results do
not depend on how iterations are split across workers.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import norm, rankdata

from fedsurg.datagen import METRIC_NAMES, CenterPredictions, MetricTable, Predictions
from fedsurg.errors import NumericalError, ValidationError
from fedsurg.metrics import (
    DEFAULT_NUM_CLASSES,
    F1_CONVENTIONS,
    F1_ZERO,
    LabelSpace,
    build_confusion_matrix,
    cost_matrix,
    expected_cost,
    macro_f1,
)
from fedsurg.utils.task_runner import ProgressCallback, TaskRunner

logger = logging.getLogger(__name__)

LOWER_BETTER = "lower_better"
HIGHER_BETTER = "higher_better"
METRIC_DIRECTIONS = {"ec": LOWER_BETTER, "f1": HIGHER_BETTER}

WILCOXON_MODES = ("auto", "exact", "normal_approx")
EXACT_MAX_N = 25
RESAMPLING_MODES = ("stratified", "pooled")

_CHUNK = 250


def rank_values(values: Sequence[float], direction: str = LOWER_BETTER) -> np.ndarray:
    """
    Competition ranking: the best value gets rank 1, ties share the minimal rank

    Raises:
        ValidationError: empty or non-finite input, unknown direction
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("cannot rank an empty sequence")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("cannot rank non-finite values")
    if direction == LOWER_BETTER:
        key = arr
    elif direction == HIGHER_BETTER:
        key = -arr
    else:
        raise ValidationError(f"unknown ranking direction '{direction}'")
    return rankdata(key, method="min").astype(np.int64)


# ===================================================================
# LEADERBOARD
# ===================================================================

@dataclass(frozen=True)
class TaskRank:
    """
    One team's standing in one task

    Attributes:
        ec_value / f1_value: Metric values used for ranking (Task 2: center means)
        ec_rank / f1_rank: Per-metric ranks
        mean_rank: Mean of the two metric ranks
        avg_rank: Rank of mean_rank among the teams
    """

    team: str
    ec_value: float
    f1_value: float
    ec_rank: int
    f1_rank: int
    mean_rank: float
    avg_rank: int


def task_ranks(table: MetricTable, task: int, teams: Optional[Sequence[str]] = None) -> Dict[str, TaskRank]:
    """
    Rank all teams in one task

    Each metric is averaged over the task's centers first (a single center for
    Task 1), then ranked.

    Raises:
        ValidationError: listing missing (team, center, metric) cells
    """
    teams = sorted(teams) if teams is not None else table.teams
    table.require([task], teams)
    centers = table.centers(task)
    ec = [float(np.mean([table.get(t, task, c, "ec") for c in centers])) for t in teams]
    f1 = [float(np.mean([table.get(t, task, c, "f1") for c in centers])) for t in teams]
    ec_ranks = rank_values(ec, LOWER_BETTER)
    f1_ranks = rank_values(f1, HIGHER_BETTER)
    mean_ranks = (ec_ranks + f1_ranks) / 2.0
    avg_ranks = rank_values(mean_ranks, LOWER_BETTER)
    return {
        t: TaskRank(team=t, ec_value=ec[i], f1_value=f1[i], ec_rank=int(ec_ranks[i]), f1_rank=int(f1_ranks[i]),
                    mean_rank=float(mean_ranks[i]), avg_rank=int(avg_ranks[i]))
        for i, t in enumerate(teams)
    }


@dataclass(frozen=True)
class LeaderboardRow:
    team: str
    task1: TaskRank
    task2: TaskRank
    final_score: float
    final_rank: int


@dataclass(frozen=True)
class RankTable:
    rows: Tuple[LeaderboardRow, ...]

    def by_team(self) -> Dict[str, LeaderboardRow]:
        return {r.team: r for r in self.rows}

    def to_frame(self) -> pd.DataFrame:
        records = []
        for r in self.rows:
            records.append({
                "team": r.team,
                "task1_ec": r.task1.ec_value,
                "task1_f1": r.task1.f1_value,
                "task1_ec_rank": r.task1.ec_rank,
                "task1_f1_rank": r.task1.f1_rank,
                "task1_mean_rank": r.task1.mean_rank,
                "task1_avg_rank": r.task1.avg_rank,
                "task2_ec": r.task2.ec_value,
                "task2_f1": r.task2.f1_value,
                "task2_ec_rank": r.task2.ec_rank,
                "task2_f1_rank": r.task2.f1_rank,
                "task2_mean_rank": r.task2.mean_rank,
                "task2_avg_rank": r.task2.avg_rank,
                "final_score": r.final_score,
                "final_rank": r.final_rank,
            })
        return pd.DataFrame.from_records(records)


def final_leaderboard(task1: Mapping[str, TaskRank], task2: Mapping[str, TaskRank]) -> RankTable:
    """
    Final score = mean of the two task avg-ranks, ranked lower-better

    Raises:
        ValidationError: the tasks were ranked for different team sets
    """
    if set(task1) != set(task2):
        raise ValidationError(
            f"team sets differ between tasks: {sorted(set(task1) ^ set(task2))}"
        )
    teams = sorted(task1)
    scores = [(task1[t].avg_rank + task2[t].avg_rank) / 2.0 for t in teams]
    finals = rank_values(scores, LOWER_BETTER)
    rows = [
        LeaderboardRow(team=t, task1=task1[t], task2=task2[t], final_score=scores[i], final_rank=int(finals[i]))
        for i, t in enumerate(teams)
    ]
    rows.sort(key=lambda r: (r.final_rank, r.team))
    return RankTable(rows=tuple(rows))


def leaderboard_from_table(table: MetricTable) -> RankTable:
    return final_leaderboard(task_ranks(table, 1), task_ranks(table, 2))


def split_tasks(predictions: Predictions, holdout_center: str) -> Dict[int, List[str]]:
    """Task 1 = the holdout center, Task 2 = every other center"""
    centers = sorted({c for per_team in predictions.values() for c in per_team})
    tasks = {}
    if holdout_center in centers:
        tasks[1] = [holdout_center]
    others = [c for c in centers if c != holdout_center]
    if others:
        tasks[2] = others
    return tasks


def metric_table_from_predictions(predictions: Predictions, holdout_center: str,
                                  num_classes: int = DEFAULT_NUM_CLASSES,
                                  absent_convention: str = F1_ZERO) -> MetricTable:
    """Per-center f1/ec values of every team, assigned to tasks by holdout center"""
    labels = LabelSpace(num_classes)
    tasks = split_tasks(predictions, holdout_center)
    table = MetricTable()
    for team in sorted(predictions):
        for task, centers in tasks.items():
            for center in centers:
                group = predictions[team].get(center)
                if group is None or len(group) == 0:
                    raise ValidationError(f"team {team} has no predictions for center {center}")
                cm = build_confusion_matrix(group.truths, group.preds, labels)
                table.add(team, task, center, "f1", macro_f1(cm, absent_convention))
                table.add(team, task, center, "ec", expected_cost(cm))
    return table


# ===================================================================
# WILCOXON SIGNED-RANK TEST
# ===================================================================

def _exact_lower_tail(doubled_ranks: np.ndarray, w_doubled: int) -> float:
    """P(S <= w) where S sums a random sign subset of the (doubled) ranks"""
    total = int(doubled_ranks.sum())
    dist = np.zeros(total + 1, dtype=np.float64)
    dist[0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[:total + 1 - r]
        dist = dist + shifted
    return float(dist[:w_doubled + 1].sum() / 2.0 ** doubled_ranks.size)


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float], mode: str = "auto") -> float:
    """
    Two-sided Wilcoxon signed-rank p-value for paired samples

    Zero differences are dropped and tied |d| get average ranks. "exact"
    counts all sign assignments (n <= 25); "normal_approx" uses the
    tie-corrected normal approximation with continuity correction; "auto"
    picks exact for n <= 25.

    Raises:
        ValidationError: unequal lengths or unknown mode
        NumericalError: all differences are zero
    """
    if mode not in WILCOXON_MODES:
        raise ValidationError(f"wilcoxon mode must be one of {WILCOXON_MODES}, got '{mode}'")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"paired samples must have equal length, got {x.shape} and {y.shape}")
    d = x - y
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise NumericalError("degenerate paired sample: all differences are zero")

    abs_d = np.abs(d)
    ranks = rankdata(abs_d, method="average")
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)

    if mode == "auto":
        mode = "exact" if n <= EXACT_MAX_N else "normal_approx"

    if mode == "exact":
        if n > EXACT_MAX_N:
            raise ValidationError(f"exact Wilcoxon is limited to n <= {EXACT_MAX_N} non-zero differences, got {n}")
        # average ranks are multiples of 1/2
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        return min(1.0, 2.0 * _exact_lower_tail(doubled, int(round(2.0 * w))))

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(abs_d, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
    if var <= 0:
        raise NumericalError("degenerate paired sample: zero variance")
    z = min(0.0, w - mean + 0.5) / math.sqrt(var)
    return min(1.0, 2.0 * float(norm.cdf(z)))


# ===================================================================
# BOOTSTRAP
# ===================================================================

@dataclass(frozen=True)
class BootstrapConfig:
    iterations: int = 10000
    seed: int = 0
    ci_level: float = 0.95
    wilcoxon_mode: str = "auto"
    resampling: str = "stratified"
    num_classes: int = DEFAULT_NUM_CLASSES
    absent_convention: str = F1_ZERO
    workers: int = 1
    metrics: Tuple[str, ...] = METRIC_NAMES

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError("bootstrap iterations must be >= 1")
        if not 0.0 < self.ci_level < 1.0:
            raise ValidationError("ci_level must lie in (0, 1)")
        if self.wilcoxon_mode not in WILCOXON_MODES:
            raise ValidationError(f"wilcoxon mode must be one of {WILCOXON_MODES}")
        if self.resampling not in RESAMPLING_MODES:
            raise ValidationError(f"task 2 resampling must be one of {RESAMPLING_MODES}")
        if self.absent_convention not in F1_CONVENTIONS:
            raise ValidationError(f"F1 convention must be one of {F1_CONVENTIONS}")
        if not self.metrics or len(set(self.metrics)) != len(self.metrics) or not set(self.metrics) <= set(METRIC_NAMES):
            raise ValidationError(f"bootstrap metrics must be a non-empty subset of {METRIC_NAMES}")


@dataclass(frozen=True)
class BootstrapResult:
    """
    Rank stability of one ranking scope ("task1/ec", "task2/f1", "task1/task", "final", ...)

    Matrices are indexed by team position in `teams`; rank_frequency[t, r - 1]
    is the share of iterations in which team t took rank r.
    """

    scope: str
    teams: Tuple[str, ...]
    iterations: int
    original_rank: np.ndarray
    rank_frequency: np.ndarray
    median_rank: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    retention: np.ndarray
    win_prob: np.ndarray
    tie_prob: np.ndarray
    wilcoxon_p: Optional[np.ndarray] = None
    value_mean: Optional[np.ndarray] = None
    value_std: Optional[np.ndarray] = None


@dataclass(frozen=True)
class BootstrapReport:
    results: Tuple[BootstrapResult, ...]
    config: BootstrapConfig = field(default_factory=BootstrapConfig)

    def scope(self, name: str) -> BootstrapResult:
        for res in self.results:
            if res.scope == name:
                return res
        raise KeyError(name)

    @property
    def scopes(self) -> List[str]:
        return [r.scope for r in self.results]


@dataclass(frozen=True)
class _TaskCases:
    """Paired cases of one task: per center, truths (n,) and team predictions (T, n)"""

    task: int
    centers: Tuple[str, ...]
    truths: Tuple[np.ndarray, ...]
    preds: Tuple[np.ndarray, ...]


def _pair_cases(predictions: Predictions, tasks: Mapping[int, Sequence[str]]) -> List[_TaskCases]:
    teams = sorted(predictions)
    out = []
    for task, centers in sorted(tasks.items()):
        truths, preds = [], []
        for center in centers:
            groups: List[CenterPredictions] = []
            for team in teams:
                group = predictions[team].get(center)
                if group is None:
                    raise ValidationError(f"unpaired case sets: team {team} has no predictions for {center}")
                groups.append(group)
            ref = groups[0]
            if len(ref) == 0:
                raise ValidationError(f"center {center} has no cases")
            for team, group in zip(teams, groups):
                if group.case_ids != ref.case_ids:
                    raise ValidationError(
                        f"unpaired case sets at {center}: team {team} differs from team {teams[0]}"
                    )
                if not np.array_equal(group.truths, ref.truths):
                    raise ValidationError(f"teams disagree on true labels at {center} (team {team})")
            truths.append(np.asarray(ref.truths, dtype=np.int64))
            preds.append(np.stack([g.preds for g in groups]).astype(np.int64))
        out.append(_TaskCases(task=task, centers=tuple(centers), truths=tuple(truths), preds=tuple(preds)))
    return out


def batch_metrics(truths: np.ndarray, preds: np.ndarray, num_classes: int,
                  absent_convention: str = F1_ZERO) -> Tuple[np.ndarray, np.ndarray]:
    """
    Macro-F1 and Expected Cost of several teams on the same cases

    Args:
        truths: (n,) true labels
        preds: (T, n) predictions per team

    Returns:
        Tuple (f1 (T,), ec (T,))
    """
    n_teams, n = preds.shape
    c = num_classes
    offsets = np.arange(n_teams)[:, None] * (c * c)
    flat = (offsets + truths[None, :] * c + preds).reshape(-1)
    counts = np.bincount(flat, minlength=n_teams * c * c).reshape(n_teams, c, c).astype(np.float64)

    tp = np.einsum("tii->ti", counts)
    fp = counts.sum(axis=1) - tp
    fn = counts.sum(axis=2) - tp
    denom = 2.0 * tp + fp + fn
    present = denom > 0
    f1 = np.divide(2.0 * tp, denom, out=np.zeros_like(tp), where=present)
    if absent_convention == F1_ZERO:
        macro = f1.mean(axis=1)
    else:
        n_present = present.sum(axis=1)
        macro = np.divide(f1.sum(axis=1), n_present, out=np.zeros(n_teams), where=n_present > 0)
    ec = (counts * cost_matrix(c)[None]).sum(axis=(1, 2)) / n
    return macro, np.clip(ec, 0.0, 1.0)


def _task_metrics(cases: _TaskCases, cfg: BootstrapConfig,
                  rng: Optional[np.random.Generator]) -> Dict[str, np.ndarray]:
    """Per-team f1/ec of one task; rng None evaluates the original cases"""
    if len(cases.centers) > 1 and cfg.resampling == "pooled":
        truths = np.concatenate(cases.truths)
        preds = np.concatenate(cases.preds, axis=1)
        if rng is not None:
            idx = rng.integers(0, truths.size, truths.size)
            truths, preds = truths[idx], preds[:, idx]
        f1, ec = batch_metrics(truths, preds, cfg.num_classes, cfg.absent_convention)
        return {"f1": f1, "ec": ec}

    f1s, ecs = [], []
    for truths, preds in zip(cases.truths, cases.preds):
        if rng is not None:
            idx = rng.integers(0, truths.size, truths.size)
            truths, preds = truths[idx], preds[:, idx]
        f1, ec = batch_metrics(truths, preds, cfg.num_classes, cfg.absent_convention)
        f1s.append(f1)
        ecs.append(ec)
    return {"f1": np.mean(f1s, axis=0), "ec": np.mean(ecs, axis=0)}


def _iteration_ranks(all_cases: List[_TaskCases], cfg: BootstrapConfig,
                     rng: Optional[np.random.Generator]) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    ranks: Dict[str, np.ndarray] = {}
    values: Dict[str, np.ndarray] = {}
    task_avgs = []
    for cases in all_cases:
        metrics = _task_metrics(cases, cfg, rng)
        metric_ranks = []
        for metric in (m for m in METRIC_NAMES if m in cfg.metrics):
            scope = f"task{cases.task}/{metric}"
            values[scope] = metrics[metric]
            ranks[scope] = rank_values(metrics[metric], METRIC_DIRECTIONS[metric])
            metric_ranks.append(ranks[scope])
        avg = rank_values(np.mean(metric_ranks, axis=0), LOWER_BETTER)
        ranks[f"task{cases.task}/task"] = avg
        task_avgs.append(avg)
    if len(task_avgs) == 2:
        ranks["final"] = rank_values(np.mean(task_avgs, axis=0), LOWER_BETTER)
    return ranks, values


def _run_chunk(all_cases: List[_TaskCases], cfg: BootstrapConfig, start: int, stop: int):
    ranks: Dict[str, List[np.ndarray]] = {}
    values: Dict[str, List[np.ndarray]] = {}
    for b in range(start, stop):
        rng = np.random.default_rng([cfg.seed, b])
        it_ranks, it_values = _iteration_ranks(all_cases, cfg, rng)
        for k, v in it_ranks.items():
            ranks.setdefault(k, []).append(v)
        for k, v in it_values.items():
            values.setdefault(k, []).append(v)
    return ({k: np.stack(v) for k, v in ranks.items()}, {k: np.stack(v) for k, v in values.items()})


def _pairwise_wilcoxon(values: np.ndarray, mode: str) -> np.ndarray:
    n_teams = values.shape[1]
    p = np.full((n_teams, n_teams), np.nan)
    for a in range(n_teams):
        for b in range(a + 1, n_teams):
            try:
                p[a, b] = p[b, a] = wilcoxon_signed_rank(values[:, a], values[:, b], mode)
            except NumericalError:
                # identical bootstrapped series
                p[a, b] = p[b, a] = np.nan
            except ValidationError:
                p[a, b] = p[b, a] = wilcoxon_signed_rank(values[:, a], values[:, b], "normal_approx")
    return p


def _summarize(scope: str, teams: Tuple[str, ...], ranks: np.ndarray, original: np.ndarray,
               cfg: BootstrapConfig, values: Optional[np.ndarray]) -> BootstrapResult:
    n_iter, n_teams = ranks.shape
    freq = np.stack([np.bincount(ranks[:, t] - 1, minlength=n_teams) for t in range(n_teams)]) / n_iter
    alpha = (1.0 - cfg.ci_level) / 2.0
    win = np.zeros((n_teams, n_teams))
    tie = np.zeros((n_teams, n_teams))
    for a in range(n_teams):
        for b in range(n_teams):
            if a == b:
                continue
            win[a, b] = np.count_nonzero(ranks[:, a] < ranks[:, b]) / n_iter
            tie[a, b] = np.count_nonzero(ranks[:, a] == ranks[:, b]) / n_iter
    return BootstrapResult(
        scope=scope,
        teams=teams,
        iterations=n_iter,
        original_rank=original,
        rank_frequency=freq,
        median_rank=np.median(ranks, axis=0),
        ci_low=np.percentile(ranks, 100 * alpha, axis=0, method="lower").astype(np.float64),
        ci_high=np.percentile(ranks, 100 * (1 - alpha), axis=0, method="higher").astype(np.float64),
        retention=(ranks == original[None, :]).mean(axis=0),
        win_prob=win,
        tie_prob=tie,
        wilcoxon_p=_pairwise_wilcoxon(values, cfg.wilcoxon_mode) if values is not None else None,
        value_mean=values.mean(axis=0) if values is not None else None,
        value_std=values.std(axis=0) if values is not None else None,
    )


def bootstrap_ranking(predictions: Predictions, holdout_center: str, cfg: Optional[BootstrapConfig] = None,
                      progress_callback: Optional[ProgressCallback] = None) -> BootstrapReport:
    """
    Bootstrap rank stability of every team

    Each iteration draws case indices with replacement (per center for Task 2
    unless pooled resampling is configured), applies the same draw to every
    team, recomputes f1/ec and re-ranks.

    Args:
        predictions: team -> center -> cases; all teams must share the case sets
        holdout_center: Center forming Task 1; the others form Task 2
        cfg: Bootstrap settings
        progress_callback: Function to call with (percent, message) per finished chunk

    Returns:
        BootstrapReport with one result per scope

    Raises:
        ValidationError: no predictions or unpaired case sets
    """
    cfg = cfg or BootstrapConfig()
    if not predictions:
        raise ValidationError("no predictions to bootstrap")
    teams = tuple(sorted(predictions))
    all_cases = _pair_cases(predictions, split_tasks(predictions, holdout_center))
    if not all_cases:
        raise ValidationError("predictions contain no centers")

    original_ranks, _ = _iteration_ranks(all_cases, cfg, rng=None)
    chunks = [(s, min(s + _CHUNK, cfg.iterations)) for s in range(0, cfg.iterations, _CHUNK)]
    runner = TaskRunner(cfg.workers, label="bootstrap chunks")
    logger.info(f"Bootstrapping {cfg.iterations} iterations for {len(teams)} teams on {cfg.workers} worker(s)")
    parts = runner.map(lambda span: _run_chunk(all_cases, cfg, *span), chunks, progress_callback=progress_callback)

    results = []
    for scope in original_ranks:
        ranks = np.concatenate([p[0][scope] for p in parts])
        values = np.concatenate([p[1][scope] for p in parts]) if scope in parts[0][1] else None
        results.append(_summarize(scope, teams, ranks, original_ranks[scope], cfg, values))
    return BootstrapReport(results=tuple(results), config=cfg)


# ===================================================================
# OUTPUT TABLES
# ===================================================================

def rankfreq_frame(report: BootstrapReport) -> pd.DataFrame:
    records = []
    for res in report.results:
        for t, team in enumerate(res.teams):
            for r in range(len(res.teams)):
                records.append({"scope": res.scope, "team": team, "rank": r + 1,
                                "frequency": float(res.rank_frequency[t, r])})
    return pd.DataFrame.from_records(records, columns=["scope", "team", "rank", "frequency"])


def winprob_frame(report: BootstrapReport) -> pd.DataFrame:
    records = []
    for res in report.results:
        for a, team_a in enumerate(res.teams):
            for b, team_b in enumerate(res.teams):
                if a != b:
                    records.append({"scope": res.scope, "team_a": team_a, "team_b": team_b,
                                    "win_prob": float(res.win_prob[a, b]), "tie_prob": float(res.tie_prob[a, b])})
    return pd.DataFrame.from_records(records, columns=["scope", "team_a", "team_b", "win_prob", "tie_prob"])


def wilcoxon_frame(report: BootstrapReport) -> pd.DataFrame:
    records = []
    for res in report.results:
        if res.wilcoxon_p is None:
            continue
        for a, team_a in enumerate(res.teams):
            for b in range(a + 1, len(res.teams)):
                records.append({"scope": res.scope, "team_a": team_a, "team_b": res.teams[b],
                                "p_value": float(res.wilcoxon_p[a, b])})
    return pd.DataFrame.from_records(records, columns=["scope", "team_a", "team_b", "p_value"])


def plotdata_frame(report: BootstrapReport) -> pd.DataFrame:
    """Rank-stability plot data: one row per (scope, team, rank)"""
    records = []
    for res in report.results:
        for t, team in enumerate(res.teams):
            for r in range(len(res.teams)):
                records.append({
                    "scope": res.scope, "team": team, "rank": r + 1,
                    "frequency": float(res.rank_frequency[t, r]),
                    "median": float(res.median_rank[t]),
                    "ci_lo": float(res.ci_low[t]),
                    "ci_hi": float(res.ci_high[t]),
                })
    return pd.DataFrame.from_records(
        records, columns=["scope", "team", "rank", "frequency", "median", "ci_lo", "ci_hi"]
    )


def summary_frame(report: BootstrapReport) -> pd.DataFrame:
    """Original rank, retention share and bootstrapped value mean/std per scope and team"""
    records = []
    for res in report.results:
        for t, team in enumerate(res.teams):
            records.append({
                "scope": res.scope,
                "team": team,
                "original_rank": int(res.original_rank[t]),
                "retention": float(res.retention[t]),
                "median_rank": float(res.median_rank[t]),
                "ci_lo": float(res.ci_low[t]),
                "ci_hi": float(res.ci_high[t]),
                "value_mean": float(res.value_mean[t]) if res.value_mean is not None else np.nan,
                "value_std": float(res.value_std[t]) if res.value_std is not None else np.nan,
            })
    return pd.DataFrame.from_records(records)
