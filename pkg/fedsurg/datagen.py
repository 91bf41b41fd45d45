#!/usr/bin/env python3
"""
Data Generation - synthetic multi-center video datasets and external result ingestion

Centers differ in class priors (label skew) and in a per-center affine
distortion of the feature space (feature skew). Metric tables and prediction
files from outside the simulator are parsed here as well so that the ranking
can run without any training.
"""

import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from fedsurg.errors import ValidationError
from fedsurg.metrics import DEFAULT_NUM_CLASSES
from fedsurg.models import VideoInstance
from fedsurg.utils.validators import check_keys, require

logger = logging.getLogger(__name__)

DEFAULT_CENTER_SIZES = (50, 42, 102, 29)
DEFAULT_TEST_FRACTIONS = (10 / 50, 9 / 42, 22 / 102, 1.0)

# Synthetic mid-heavy, center-varying grade distributions
DEFAULT_CLASS_PRIORS = (
    (0.05, 0.10, 0.30, 0.35, 0.15, 0.05),
    (0.02, 0.08, 0.40, 0.30, 0.15, 0.05),
    (0.05, 0.15, 0.25, 0.30, 0.20, 0.05),
    (0.03, 0.07, 0.25, 0.40, 0.20, 0.05),
)

METRIC_TABLE_COLUMNS = ["team", "task", "center", "metric", "value"]
PREDICTION_COLUMNS = ["case_id", "center", "true_label", "pred_label"]
METRIC_NAMES = ("f1", "ec")
TASKS = (1, 2)


def _validate_priors(priors: Sequence[float], num_classes: int, where: str) -> Tuple[float, ...]:
    values = tuple(float(p) for p in priors)
    if len(values) != num_classes:
        raise ValidationError(f"{where}: expected {num_classes} class priors, got {len(values)}")
    if any(p < 0 or not math.isfinite(p) for p in values):
        raise ValidationError(f"{where}: class priors must be finite and non-negative")
    if abs(sum(values) - 1.0) > 1e-9:
        raise ValidationError(f"{where}: class priors must sum to 1 (got {sum(values):.12g})")
    return values


@dataclass(frozen=True)
class CenterDataset:
    center_id: str
    train: Tuple[VideoInstance, ...]
    test: Tuple[VideoInstance, ...]
    class_priors: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))
        object.__setattr__(self, "class_priors",
                           _validate_priors(self.class_priors, len(self.class_priors), f"center {self.center_id}"))

    @property
    def num_videos(self) -> int:
        return len(self.train) + len(self.test)


@dataclass(frozen=True)
class GeneratorConfig:
    """
    Synthetic cohort settings

    Attributes:
        num_centers: Number of centers
        center_ids: Center names (default center1..centerN)
        videos_per_center: Videos per center
        test_fractions: Share of each center's videos held out for testing, in (0, 1]
        frames_per_video: Frames per video (L)
        feature_dim: Features per frame (D)
        num_classes: Grades (C)
        class_priors: Per-center class distributions
        feature_skew: Magnitude of the per-center affine distortion
        noise_std: Per-frame gaussian noise
        temporal_drift: Amplitude of the per-video linear ramp across frames. The ramp
            is centered, so a video's frame mean stays on its class code; with
            feature_skew = noise_std = 0 every frame equals the class code only
            when temporal_drift is 0 as well
        class_spacing: Distance scale of the class codebook
        seed: Master seed
    """

    num_centers: int = 4
    center_ids: Optional[Tuple[str, ...]] = None
    videos_per_center: Tuple[int, ...] = DEFAULT_CENTER_SIZES
    test_fractions: Tuple[float, ...] = DEFAULT_TEST_FRACTIONS
    frames_per_video: int = 200
    feature_dim: int = 8
    num_classes: int = DEFAULT_NUM_CLASSES
    class_priors: Optional[Tuple[Tuple[float, ...], ...]] = None
    feature_skew: float = 1.0
    noise_std: float = 0.5
    temporal_drift: float = 0.5
    class_spacing: float = 3.0
    seed: int = 0

    def __post_init__(self):
        n = int(self.num_centers)
        if n < 1:
            raise ValidationError("num_centers must be >= 1")
        ids = tuple(self.center_ids) if self.center_ids else tuple(f"center{i + 1}" for i in range(n))
        if len(ids) != n or len(set(ids)) != n:
            raise ValidationError(f"center_ids must name {n} distinct centers")
        object.__setattr__(self, "center_ids", ids)

        sizes = tuple(int(v) for v in self.videos_per_center)
        fractions = tuple(float(f) for f in self.test_fractions)
        if len(sizes) != n or len(fractions) != n:
            raise ValidationError(f"videos_per_center and test_fractions need one entry per center ({n})")
        if any(s < 1 for s in sizes):
            raise ValidationError("videos_per_center entries must be >= 1")
        if any(not 0.0 < f <= 1.0 for f in fractions):
            raise ValidationError("test_fractions must lie in (0, 1]")
        object.__setattr__(self, "videos_per_center", sizes)
        object.__setattr__(self, "test_fractions", fractions)

        if self.frames_per_video < 1 or self.feature_dim < 1:
            raise ValidationError("frames_per_video and feature_dim must be >= 1")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        for name in ("feature_skew", "noise_std", "temporal_drift", "class_spacing"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")

        if self.class_priors is None:
            if self.num_classes == len(DEFAULT_CLASS_PRIORS[0]):
                priors = tuple(DEFAULT_CLASS_PRIORS[i % len(DEFAULT_CLASS_PRIORS)] for i in range(n))
            else:
                priors = tuple(tuple([1.0 / self.num_classes] * self.num_classes) for _ in range(n))
        else:
            priors = tuple(self.class_priors)
            if len(priors) != n:
                raise ValidationError(f"class_priors needs one distribution per center ({n})")
        priors = tuple(_validate_priors(p, self.num_classes, f"class_priors of {cid}")
                       for p, cid in zip(priors, ids))
        object.__setattr__(self, "class_priors", priors)

    @classmethod
    def iid(cls, num_centers: int = 4, videos_per_center: int = 40, test_fraction: float = 0.25,
            **overrides) -> "GeneratorConfig":
        """Degenerate cohort: equal sizes, uniform priors, no feature skew"""
        num_classes = overrides.pop("num_classes", DEFAULT_NUM_CLASSES)
        uniform = tuple([1.0 / num_classes] * num_classes)
        return cls(
            num_centers=num_centers,
            videos_per_center=tuple([videos_per_center] * num_centers),
            test_fractions=tuple([test_fraction] * num_centers),
            num_classes=num_classes,
            class_priors=tuple(uniform for _ in range(num_centers)),
            feature_skew=0.0,
            **overrides,
        )

    @classmethod
    def from_dict(cls, data: Mapping) -> "GeneratorConfig":
        require(check_keys(data, [f.name for f in cls.__dataclass_fields__.values()], "data.generator"))
        kwargs = dict(data)
        for key in ("center_ids", "videos_per_center", "test_fractions"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        if kwargs.get("class_priors") is not None:
            kwargs["class_priors"] = tuple(tuple(p) for p in kwargs["class_priors"])
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ValidationError(f"data.generator: {e}") from e

    def to_dict(self) -> dict:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = [list(v) if isinstance(v, tuple) else v for v in value]
        return out

def class_codebook(num_classes: int, feature_dim: int, spacing: float) -> np.ndarray:
    """Fixed, equally spaced class means shared by every center"""
    if feature_dim >= num_classes:
        return spacing * np.eye(num_classes, feature_dim)
    # too few dimensions for orthogonal codes: spread the classes on a circle
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    book = np.zeros((num_classes, feature_dim))
    book[:, 0] = spacing * np.cos(angles)
    if feature_dim > 1:
        book[:, 1] = spacing * np.sin(angles)
    return book


def _center_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _generate_center(cfg: GeneratorConfig, index: int, codebook: np.ndarray) -> CenterDataset:
    rng = _center_rng(cfg.seed, index)
    center_id = cfg.center_ids[index]
    dim, length = cfg.feature_dim, cfg.frames_per_video

    gauss = rng.normal(size=(dim, dim))
    shift_dir = rng.normal(size=dim)
    shift_dir /= max(np.linalg.norm(shift_dir), 1e-12)
    affine = np.eye(dim) + cfg.feature_skew * gauss / math.sqrt(dim)
    shift = cfg.feature_skew * cfg.class_spacing * shift_dir

    n_videos = cfg.videos_per_center[index]
    priors = np.asarray(cfg.class_priors[index])
    labels = rng.choice(cfg.num_classes, size=n_videos, p=priors)
    ramp = np.linspace(-0.5, 0.5, length)[:, None]

    videos: List[VideoInstance] = []
    for v, label in enumerate(labels):
        direction = rng.normal(size=dim)
        direction /= max(np.linalg.norm(direction), 1e-12)
        latent = codebook[label] + cfg.temporal_drift * ramp * direction
        noise = cfg.noise_std * rng.normal(size=(length, dim))
        frames = latent @ affine.T + shift + noise
        videos.append(VideoInstance(frames=frames, label=int(label), center_id=center_id,
                                    case_id=f"{center_id}_v{v:03d}"))

    train, test = split_train_test(videos, cfg.test_fractions[index])
    logger.debug(f"Generated {center_id}: {len(train)} train / {len(test)} test videos")
    return CenterDataset(center_id=center_id, train=train, test=test, class_priors=tuple(priors))


def generate_multicenter(cfg: GeneratorConfig) -> List[CenterDataset]:
    """
    Build every center of the synthetic cohort

    Each center draws from its own seed stream (master seed, center index), so
    the output does not depend on generation order.
    """
    codebook = class_codebook(cfg.num_classes, cfg.feature_dim, cfg.class_spacing)
    datasets = [_generate_center(cfg, i, codebook) for i in range(cfg.num_centers)]
    logger.info(
        f"Generated {len(datasets)} centers: "
        + ", ".join(f"{d.center_id}={len(d.train)}/{len(d.test)}" for d in datasets)
    )
    return datasets


def split_train_test(videos: Sequence[VideoInstance], test_fraction: float) -> Tuple[Tuple[VideoInstance, ...], Tuple[VideoInstance, ...]]:
    """Leading videos train, the trailing round(fraction * n) (at least one) test"""
    if not 0.0 < test_fraction <= 1.0:
        raise ValidationError("test fraction must lie in (0, 1]")
    n = len(videos)
    n_test = min(n, max(1, int(round(test_fraction * n))))
    return tuple(videos[:n - n_test]), tuple(videos[n - n_test:])


# ===================================================================
# METRIC TABLES
# ===================================================================

MetricKey = Tuple[str, int, str, str]


@dataclass
class MetricTable:
    """Metric values keyed by (team, task, center, metric); values are fractions"""

    values: Dict[MetricKey, float] = field(default_factory=dict)

    def add(self, team: str, task: int, center: str, metric: str, value: float, where: str = "") -> None:
        key = (str(team), int(task), str(center), str(metric))
        if key in self.values:
            raise ValidationError(f"{where}duplicate entry for team={team} task={task} center={center} metric={metric}")
        self.values[key] = float(value)

    @property
    def teams(self) -> List[str]:
        return sorted({k[0] for k in self.values})

    def centers(self, task: int) -> List[str]:
        return sorted({k[2] for k in self.values if k[1] == task})

    def get(self, team: str, task: int, center: str, metric: str) -> float:
        return self.values[(team, task, center, metric)]

    def missing(self, task: int, teams: Optional[Iterable[str]] = None,
                metrics: Sequence[str] = METRIC_NAMES) -> List[MetricKey]:
        teams = list(teams) if teams is not None else self.teams
        centers = self.centers(task)
        if not centers:
            return [(t, task, "*", m) for t in teams for m in metrics]
        return [(t, task, c, m) for t in teams for c in centers for m in metrics
                if (t, task, c, m) not in self.values]

    def require(self, tasks: Sequence[int] = TASKS, teams: Optional[Iterable[str]] = None) -> None:
        """Raise listing every gap that would block ranking the given tasks"""
        gaps = [key for task in tasks for key in self.missing(task, teams)]
        if gaps:
            listed = "; ".join(f"team={t} task={k} center={c} metric={m}" for t, k, c, m in gaps)
            raise ValidationError(f"metric table is incomplete, missing {len(gaps)} cell(s): {listed}")


def _parse_fraction(raw: str) -> float:
    value = float(raw)
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"value must be finite and >= 0, got {raw}")
    # percent input
    return value / 100.0 if value > 1.0 else value


def load_metric_table(path: str) -> MetricTable:
    """
    Read a `team,task,center,metric,value` CSV

    Values above 1 are read as percentages.

    Raises:
        ValidationError: on bad headers, malformed rows or duplicate keys
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (OSError, pd.errors.ParserError) as e:
        raise ValidationError(f"cannot read metric table {path}: {e}") from e
    except pd.errors.EmptyDataError:
        raise ValidationError(f"{path}: metric table has no header")
    columns = [c.strip().lower() for c in frame.columns]
    if sorted(columns) != sorted(METRIC_TABLE_COLUMNS):
        raise ValidationError(f"{path}: expected header {','.join(METRIC_TABLE_COLUMNS)}, got {','.join(columns)}")
    frame.columns = columns

    table = MetricTable()
    for pos, row in enumerate(frame.itertuples(index=False)):
        line = pos + 2
        where = f"{path}:{line}: "
        try:
            task = int(row.task)
            metric = row.metric.strip().lower()
            if task not in TASKS:
                raise ValueError(f"task must be 1 or 2, got {row.task}")
            if metric not in METRIC_NAMES:
                raise ValueError(f"metric must be one of {METRIC_NAMES}, got '{row.metric}'")
            if not row.team.strip() or not row.center.strip():
                raise ValueError("team and center must be non-empty")
            value = _parse_fraction(row.value)
        except ValueError as e:
            raise ValidationError(f"{where}{e}") from e
        table.add(row.team.strip(), task, row.center.strip(), metric, value, where=where)
    logger.info(f"Loaded metric table {path}: {len(table.values)} values for {len(table.teams)} teams")
    return table


# ===================================================================
# PREDICTION FILES
# ===================================================================

@dataclass(frozen=True)
class CenterPredictions:
    """Per-case truths and predictions of one team at one center, in case-id order"""

    case_ids: Tuple[str, ...]
    truths: np.ndarray
    preds: np.ndarray

    def __len__(self):
        return len(self.case_ids)


Predictions = Dict[str, Dict[str, CenterPredictions]]


def load_predictions(paths, num_classes: int = DEFAULT_NUM_CLASSES) -> Predictions:
    """
    Read one or more `case_id,center,true_label,pred_label` CSVs

    A `team` column assigns rows to teams; without it the file name (minus
    extension) is the team.

    Returns:
        team -> center -> CenterPredictions

    Raises:
        ValidationError: naming file and line of the first malformed row
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    rows: Dict[str, Dict[str, Dict[str, Tuple[int, int]]]] = {}
    for path in paths:
        path = str(path)
        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
        except pd.errors.EmptyDataError:
            raise ValidationError(f"{path}: predictions file has no header")
        except (OSError, pd.errors.ParserError) as e:
            raise ValidationError(f"cannot read predictions {path}: {e}") from e
        columns = [c.strip() for c in frame.columns]
        missing = [c for c in PREDICTION_COLUMNS if c not in columns]
        extra = [c for c in columns if c not in PREDICTION_COLUMNS and c != "team"]
        if missing or extra:
            raise ValidationError(
                f"{path}: expected header [team,]{','.join(PREDICTION_COLUMNS)}, got {','.join(columns)}"
            )
        frame.columns = columns
        default_team = os.path.splitext(os.path.basename(path))[0]

        for pos, row in enumerate(frame.to_dict("records")):
            where = f"{path}:{pos + 2}"
            team = row.get("team", default_team).strip() or default_team
            case_id, center = row["case_id"].strip(), row["center"].strip()
            if not case_id or not center:
                raise ValidationError(f"{where}: case_id and center must be non-empty")
            try:
                truth, pred = int(row["true_label"]), int(row["pred_label"])
            except ValueError:
                raise ValidationError(f"{where}: labels must be integers, got "
                                      f"{row['true_label']!r}/{row['pred_label']!r}")
            for name, label in (("true_label", truth), ("pred_label", pred)):
                if not 0 <= label < num_classes:
                    raise ValidationError(f"{where}: {name} {label} is outside 0..{num_classes - 1}")
            cases = rows.setdefault(team, {}).setdefault(center, {})
            if case_id in cases:
                raise ValidationError(f"{where}: duplicate case {case_id} for team {team} at {center}")
            cases[case_id] = (truth, pred)

    grouped: Predictions = {}
    for team in sorted(rows):
        grouped[team] = {}
        for center in sorted(rows[team]):
            cases = rows[team][center]
            ids = tuple(sorted(cases))
            grouped[team][center] = CenterPredictions(
                case_ids=ids,
                truths=np.array([cases[c][0] for c in ids], dtype=np.int64),
                preds=np.array([cases[c][1] for c in ids], dtype=np.int64),
            )
    logger.info(f"Loaded predictions for {len(grouped)} team(s)")
    return grouped
