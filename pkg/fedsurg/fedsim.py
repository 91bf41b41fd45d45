#!/usr/bin/env python3
"""
Federated Simulation - strategy pipelines, federated rounds and the two challenge tasks

Round loop: broadcast the global parameters, let every training center run
its local epochs and submit its best checkpoint, aggregate on the server.
Task 1 evaluates the global model on the held-out center; Task 2 fine-tunes a
copy per training center and evaluates it locally.
"""

import logging
import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from fedsurg.aggregation import (
    CLIENT_OPTIMIZERS,
    ClientOptimizer,
    ClientUpdate,
    SamConfig,
    ServerOptHyperparams,
    ServerOptState,
    fed_avg,
    fed_median,
    fed_opt_apply,
)
from fedsurg.datagen import CenterDataset, MetricTable
from fedsurg.errors import NumericalError, ValidationError
from fedsurg.metrics import (
    F1_CONVENTIONS,
    F1_ZERO,
    LabelSpace,
    MetricReport,
    average_reports,
    build_confusion_matrix,
    macro_f1,
    metric_report,
)
from fedsurg.models import (
    DEFAULT_EMBED_DIM,
    DEFAULT_SEQ_LEN,
    LOSS_KINDS,
    PROTOTYPE_MODES,
    Batch,
    LossConfig,
    SupportSet,
    VideoInstance,
    embedding_model,
    inverse_frequency_weights,
    majority_vote,
    prototype_classify,
    sample_indices_equidistant,
    sample_indices_hybrid,
    select_frames_by_similarity,
    softmax_head_model,
)
from fedsurg.utils.task_runner import ProgressCallback, TaskRunner
from fedsurg.utils.validators import check_choice, check_keys, require

logger = logging.getLogger(__name__)

STRATEGIES = ("fedavg", "fedmedian", "fedopt")
MODEL_KINDS = ("softmax_head", "embedding")
SAMPLER_KINDS = ("hybrid", "equidistant", "similarity")
INFERENCE_KINDS = ("direct", "majority_vote", "prototype")

# RNG stream tags
TRAIN_STREAM = 1
FINE_TUNE_STREAM = 2


# ===================================================================
# PIPELINE DEFINITION
# ===================================================================

@dataclass(frozen=True)
class ModelSpec:
    kind: str = "softmax_head"
    embed_dim: int = DEFAULT_EMBED_DIM
    init_scale: Optional[float] = None

    def __post_init__(self):
        require(check_choice(self.kind, MODEL_KINDS, "model.kind"))
        if self.embed_dim < 1:
            raise ValidationError("model.embed_dim must be >= 1")

    def build(self, input_dim: int, num_classes: int, seed: int):
        if self.kind == "embedding":
            return embedding_model(input_dim, embed_dim=self.embed_dim, num_classes=num_classes,
                                   init_scale=self.init_scale, seed=seed)
        scale = 0.01 if self.init_scale is None else self.init_scale
        return softmax_head_model(input_dim, num_classes, init_scale=scale, seed=seed)


@dataclass(frozen=True)
class SamplerSpec:
    """
    Frame selection; k and window_halfwidth are given for reference_length
    frames and rescale proportionally to the actual video length
    """

    kind: str = "hybrid"
    k: int = 32
    window_halfwidth: int = 16
    center_bias: float = 0.6
    reference_length: int = DEFAULT_SEQ_LEN

    def __post_init__(self):
        require(check_choice(self.kind, SAMPLER_KINDS, "sampler.kind"))
        if self.k < 1 or self.window_halfwidth < 0 or self.reference_length < 1:
            raise ValidationError("sampler needs k >= 1, window_halfwidth >= 0 and reference_length >= 1")
        if not 0.0 <= self.center_bias <= 1.0:
            raise ValidationError("sampler.center_bias must lie in [0, 1]")

    def resolve(self, seq_len: int) -> Tuple[int, int]:
        """(k, window half-width) for a video of seq_len frames"""
        scale = seq_len / self.reference_length
        # similarity needs a pair of frames to compare
        floor = 2 if self.kind == "similarity" else 1
        k = min(seq_len, max(floor, int(round(self.k * scale))))
        mid = seq_len // 2
        halfwidth = min(max(0, int(round(self.window_halfwidth * scale))), mid, seq_len - 1 - mid)
        return k, halfwidth


@dataclass(frozen=True)
class InferenceSpec:
    kind: str = "direct"
    mode: str = "prototype"
    per_center_mode: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        require(check_choice(self.kind, INFERENCE_KINDS, "inference.kind"))
        require(check_choice(self.mode, PROTOTYPE_MODES, "inference.mode"))
        for center, mode in self.per_center_mode.items():
            require(check_choice(mode, PROTOTYPE_MODES, f"inference.per_center_mode.{center}"))
        object.__setattr__(self, "per_center_mode", dict(self.per_center_mode))

    def mode_for(self, center_id: str) -> str:
        return self.per_center_mode.get(center_id, self.mode)


@dataclass(frozen=True)
class FederatedConfig:
    """
    Federated training schedule of one pipeline

    Attributes:
        strategy: fedavg | fedmedian | fedopt (server optimizer over the FedAvg aggregate)
        client_optimizer: sgd | adam | sam
        sam: SAM settings when client_optimizer is sam
        server: FedOpt settings
        fl_rounds: Communication rounds R
        local_epochs: Local epochs E per round (triplet epochs for embedding pipelines)
        head_epochs: Cross-entropy epochs run before the local epochs (embedding pipelines)
        learning_rate: Client step size
        batch_size: Local minibatch size
        fine_tune_epochs: Task 2 adaptation epochs
        validation_fraction: Share of local training videos used for checkpoint selection
    """

    strategy: str = "fedavg"
    client_optimizer: str = "adam"
    sam: SamConfig = field(default_factory=SamConfig)
    server: ServerOptHyperparams = field(default_factory=ServerOptHyperparams)
    fl_rounds: int = 5
    local_epochs: int = 20
    head_epochs: int = 0
    learning_rate: float = 1e-4
    batch_size: int = 4
    fine_tune_epochs: int = 5
    validation_fraction: float = 0.2

    def __post_init__(self):
        require(check_choice(self.strategy, STRATEGIES, "federated.strategy"))
        require(check_choice(self.client_optimizer, CLIENT_OPTIMIZERS, "federated.client_optimizer"))
        if self.fl_rounds < 1 or self.local_epochs < 1:
            raise ValidationError("federated.fl_rounds and federated.local_epochs must be >= 1")
        if self.head_epochs < 0 or self.fine_tune_epochs < 0:
            raise ValidationError("federated.head_epochs and federated.fine_tune_epochs must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("federated.batch_size must be >= 1")
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise ValidationError("federated.learning_rate must be finite and >= 0")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValidationError("federated.validation_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class StrategyPipeline:
    name: str
    model: ModelSpec = field(default_factory=ModelSpec)
    loss: LossConfig = field(default_factory=LossConfig)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    inference: InferenceSpec = field(default_factory=InferenceSpec)
    federated: FederatedConfig = field(default_factory=FederatedConfig)

    def __post_init__(self):
        if not self.name:
            raise ValidationError("pipeline name must be non-empty")
        embedding = self.model.kind == "embedding"
        if embedding != (self.inference.kind == "prototype"):
            raise ValidationError(
                f"pipeline {self.name}: embedding models go with prototype inference and only with it"
            )
        if self.loss.kind == "triplet_margin" and not embedding:
            raise ValidationError(f"pipeline {self.name}: triplet_margin loss needs an embedding model")
        if self.sampler.kind == "similarity" and not embedding:
            raise ValidationError(f"pipeline {self.name}: similarity frame selection needs an embedding model")

    @property
    def frame_level(self) -> bool:
        """One example per selected frame instead of one pooled example per video"""
        return self.inference.kind == "majority_vote"

    def build_model(self, input_dim: int, num_classes: int, seed: int):
        return self.model.build(input_dim, num_classes, seed)

    @classmethod
    def from_dict(cls, data: Mapping) -> "StrategyPipeline":
        """Parse a pipeline object; unknown keys are rejected at every level"""
        require(check_keys(data, ["name", "model", "loss", "sampler", "inference", "federated"], "pipeline"))
        name = data.get("name")
        where = f"pipeline '{name}'"
        try:
            model = dict(data.get("model", {}))
            require(check_keys(model, ["kind", "embed_dim", "init_scale"], f"{where}.model"))
            loss = dict(data.get("loss", {}))
            require(check_keys(loss, ["kind", "margin"], f"{where}.loss"))
            require(check_choice(loss.get("kind", "cross_entropy"), LOSS_KINDS, f"{where}.loss.kind"))
            sampler = dict(data.get("sampler", {}))
            require(check_keys(sampler, list(SamplerSpec.__dataclass_fields__), f"{where}.sampler"))
            inference = dict(data.get("inference", {}))
            require(check_keys(inference, list(InferenceSpec.__dataclass_fields__), f"{where}.inference"))
            fed = dict(data.get("federated", {}))
            require(check_keys(fed, list(FederatedConfig.__dataclass_fields__), f"{where}.federated"))
            sam = dict(fed.pop("sam", {}))
            require(check_keys(sam, ["rho", "adaptive", "eta"], f"{where}.federated.sam"))
            server = dict(fed.pop("server", {}))
            require(check_keys(server, list(ServerOptHyperparams.__dataclass_fields__), f"{where}.federated.server"))
            return cls(
                name=name,
                model=ModelSpec(**model),
                loss=LossConfig(**loss),
                sampler=SamplerSpec(**sampler),
                inference=InferenceSpec(**inference),
                federated=FederatedConfig(sam=SamConfig(**sam), server=ServerOptHyperparams(**server), **fed),
            )
        except TypeError as e:
            raise ValidationError(f"{where}: {e}") from e


@dataclass(frozen=True)
class ChallengeConfig:
    """Settings shared by every pipeline of a run"""

    holdout_center: str = "center4"
    seed: int = 0
    workers: int = 1
    num_classes: int = 6
    absent_convention: str = F1_ZERO

    def __post_init__(self):
        require(check_choice(self.absent_convention, F1_CONVENTIONS, "evaluation.f1_absent_convention"))
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")

    @property
    def labels(self) -> LabelSpace:
        return LabelSpace(self.num_classes)


# ===================================================================
# RESULTS
# ===================================================================

@dataclass(frozen=True)
class RoundRecord:
    """Telemetry of one federated round"""

    round_index: int
    local_best_scores: Dict[str, float]
    epoch_scores: Dict[str, Tuple[float, ...]]
    global_score: float

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "local_best_scores": dict(self.local_best_scores),
            "epoch_scores": {k: list(v) for k, v in self.epoch_scores.items()},
            "global_score": self.global_score,
        }


@dataclass
class TrainingResult:
    model: object
    rounds: Tuple[RoundRecord, ...]


@dataclass(frozen=True)
class CenterEvaluation:
    center_id: str
    report: MetricReport
    case_ids: Tuple[str, ...]
    truths: Tuple[int, ...]
    preds: Tuple[int, ...]

    def to_dict(self) -> dict:
        return {"center": self.center_id, **self.report.to_dict()}


@dataclass(frozen=True)
class Task2Result:
    per_center: Dict[str, CenterEvaluation]
    average: MetricReport


@dataclass(frozen=True)
class PipelineResult:
    name: str
    task1: CenterEvaluation
    task2: Task2Result
    rounds: Tuple[RoundRecord, ...]

    def prediction_rows(self) -> List[dict]:
        """Per-case rows (holdout center first, then training centers by id)"""
        rows = []
        for ev in [self.task1] + [self.task2.per_center[c] for c in sorted(self.task2.per_center)]:
            for case_id, truth, pred in zip(ev.case_ids, ev.truths, ev.preds):
                rows.append({"team": self.name, "case_id": case_id, "center": ev.center_id,
                             "true_label": int(truth), "pred_label": int(pred)})
        return rows

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "task1": self.task1.to_dict(),
            "task2": {
                "per_center": {c: ev.to_dict() for c, ev in self.task2.per_center.items()},
                "average": self.task2.average.to_dict(),
            },
            "telemetry": [r.to_dict() for r in self.rounds],
        }


@dataclass(frozen=True)
class ChallengeResult:
    pipelines: Tuple[PipelineResult, ...]
    config: ChallengeConfig
    holdout_center: str

    def metric_table(self) -> MetricTable:
        """Task 1 (holdout) and Task 2 (per training center) values for ranking"""
        table = MetricTable()
        for res in self.pipelines:
            table.add(res.name, 1, res.task1.center_id, "f1", res.task1.report.f1_macro)
            table.add(res.name, 1, res.task1.center_id, "ec", res.task1.report.expected_cost)
            for center, ev in res.task2.per_center.items():
                table.add(res.name, 2, center, "f1", ev.report.f1_macro)
                table.add(res.name, 2, center, "ec", ev.report.expected_cost)
        return table

    def to_dict(self) -> dict:
        return {
            "seed": self.config.seed,
            "holdout_center": self.holdout_center,
            "num_classes": self.config.num_classes,
            "f1_absent_convention": self.config.absent_convention,
            "pipelines": [p.to_dict() for p in self.pipelines],
        }


# ===================================================================
# EXAMPLE CONSTRUCTION
# ===================================================================

def _stable_hash(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def client_rng(seed: int, client_id: str, stream: int, round_index: int = 0) -> np.random.Generator:
    """RNG stream of one client; depends only on (seed, client id, stream, round)"""
    return np.random.default_rng(np.random.SeedSequence([int(seed), _stable_hash(client_id), stream, round_index]))


def case_rng(seed: int, case_id: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), _stable_hash(case_id)]))


def frame_indices(pipeline: StrategyPipeline, video: VideoInstance, rng: np.random.Generator, embedder) -> np.ndarray:
    seq_len = video.num_frames
    spec = pipeline.sampler
    k, halfwidth = spec.resolve(seq_len)
    if spec.kind == "hybrid":
        return sample_indices_hybrid(seq_len, k, halfwidth, spec.center_bias, rng)
    if spec.kind == "equidistant":
        return sample_indices_equidistant(seq_len, k)
    return select_frames_by_similarity(video, embedder, k)


def video_examples(pipeline: StrategyPipeline, videos: Sequence[VideoInstance],
                   rng_for: Callable[[VideoInstance], np.random.Generator],
                   embedder) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Turn videos into model inputs

    Returns:
        Tuple (features, labels, video index per row)
    """
    rows, labels, groups = [], [], []
    for g, video in enumerate(videos):
        idx = frame_indices(pipeline, video, rng_for(video), embedder)
        selected = video.frames[idx]
        if pipeline.frame_level:
            rows.append(selected)
            labels.extend([video.label] * len(idx))
            groups.extend([g] * len(idx))
        else:
            rows.append(selected.mean(axis=0, keepdims=True))
            labels.append(video.label)
            groups.append(g)
    return np.vstack(rows), np.asarray(labels, dtype=np.int64), np.asarray(groups, dtype=np.int64)


def build_support(model, pipeline: StrategyPipeline, videos: Sequence[VideoInstance], seed: int) -> SupportSet:
    if not videos:
        raise ValidationError(f"pipeline {pipeline.name}: prototype inference needs support videos")
    feats, labels, _ = video_examples(pipeline, videos, lambda v: case_rng(seed, v.case_id), model)
    return SupportSet.from_labeled(model.embed(feats), labels)


def predict_videos(model, pipeline: StrategyPipeline, videos: Sequence[VideoInstance], seed: int,
                   support: Optional[SupportSet] = None, mode: str = "prototype") -> np.ndarray:
    """Video-level class predictions under the pipeline's inference strategy"""
    if not videos:
        return np.zeros(0, dtype=np.int64)
    feats, _, groups = video_examples(pipeline, videos, lambda v: case_rng(seed, v.case_id), model)
    if pipeline.inference.kind == "prototype":
        if support is None:
            raise ValidationError(f"pipeline {pipeline.name}: prototype inference needs a support set")
        return np.array([prototype_classify(e, support, mode) for e in model.embed(feats)], dtype=np.int64)
    probs = model.predict_proba(feats)
    if pipeline.inference.kind == "majority_vote":
        return np.array([majority_vote(probs[groups == g]) for g in range(len(videos))], dtype=np.int64)
    return probs.argmax(axis=1).astype(np.int64)


def validation_split(videos: Sequence[VideoInstance], fraction: float) -> Tuple[List[VideoInstance], List[VideoInstance]]:
    """
    Stratified systematic split: every round(1/fraction)-th video of each class,
    in case order, is held out for validation

    A fraction of 0 (or a single video) validates on the training videos themselves.
    """
    videos = sorted(videos, key=lambda v: v.case_id)
    if fraction <= 0.0 or len(videos) < 2:
        return list(videos), list(videos)
    step = max(2, int(round(1.0 / fraction)))
    val_ids = set()
    for label in sorted({v.label for v in videos}):
        members = [v for v in videos if v.label == label]
        val_ids.update(v.case_id for j, v in enumerate(members) if (j + 1) % step == 0)
    if not val_ids:
        val_ids.add(videos[-1].case_id)
    fit = [v for v in videos if v.case_id not in val_ids]
    val = [v for v in videos if v.case_id in val_ids]
    return fit, val


def _triplet_batch(features: np.ndarray, labels: np.ndarray, idx: np.ndarray,
                   rng: np.random.Generator) -> Batch:
    """Anchors from the batch; positives and negatives drawn from the local pool"""
    anchors, positives, negatives = [], [], []
    for i in idx:
        same = np.flatnonzero(labels == labels[i])
        other = np.flatnonzero(labels != labels[i])
        if other.size == 0:
            continue
        candidates = same[same != i]
        pos = int(rng.choice(candidates)) if candidates.size else int(i)
        neg = int(rng.choice(other))
        anchors.append(int(i))
        positives.append(pos)
        negatives.append(neg)
    m = len(anchors)
    rows = np.asarray(anchors + positives + negatives, dtype=np.int64)
    if m == 0:
        return Batch(features[idx], labels[idx], triplets=np.zeros((0, 3), dtype=np.int64))
    triplets = np.stack([np.arange(m), np.arange(m) + m, np.arange(m) + 2 * m], axis=1)
    return Batch(features[rows], labels[rows], triplets=triplets)


# ===================================================================
# LOCAL TRAINING
# ===================================================================

def _score(model, pipeline: StrategyPipeline, videos: Sequence[VideoInstance], support_videos: Sequence[VideoInstance],
           cfg: ChallengeConfig, mode: str) -> float:
    support = build_support(model, pipeline, support_videos, cfg.seed) if pipeline.inference.kind == "prototype" else None
    preds = predict_videos(model, pipeline, videos, cfg.seed, support=support, mode=mode)
    cm = build_confusion_matrix([v.label for v in videos], preds, cfg.labels)
    return macro_f1(cm, cfg.absent_convention)


def _phases(pipeline: StrategyPipeline, loss: LossConfig, epochs: int) -> List[Tuple[LossConfig, int]]:
    fed = pipeline.federated
    if loss.kind == "triplet_margin" and fed.head_epochs > 0:
        return [(LossConfig(kind="cross_entropy"), fed.head_epochs), (loss, epochs)]
    return [(loss, epochs)]


def train_local(model, pipeline: StrategyPipeline, videos: Sequence[VideoInstance], loss: LossConfig,
                 epochs: int, rng: np.random.Generator, tag: str,
                 after_epoch: Optional[Callable[[int], None]] = None) -> None:
    """
    Run the pipeline's local schedule on model in place

    Args:
        model: Model to train (owned by the caller)
        pipeline: Strategy pipeline
        videos: Local training videos
        loss: Loss of the main phase (class weights already filled in)
        epochs: Main-phase epochs
        rng: Client RNG stream
        tag: Round/client description for error messages
        after_epoch: Called with the running epoch number after each epoch
    """
    fed = pipeline.federated
    embedder = model.clone()
    epoch_no = 0
    for phase_loss, n_epochs in _phases(pipeline, loss, epochs):
        optimizer = ClientOptimizer(fed.client_optimizer, fed.learning_rate, sam=fed.sam)
        for _ in range(n_epochs):
            feats, labels, _ = video_examples(pipeline, videos, lambda v: rng, embedder)
            order = rng.permutation(len(labels))
            for start in range(0, len(order), fed.batch_size):
                idx = np.sort(order[start:start + fed.batch_size])
                if phase_loss.kind == "triplet_margin":
                    batch = _triplet_batch(feats, labels, idx, rng)
                else:
                    batch = Batch(feats[idx], labels[idx])
                seen = []

                def gradient_fn(w, batch=batch, phase_loss=phase_loss, seen=seen):
                    value, grad = model.loss_and_gradient(batch, phase_loss, params=w)
                    seen.append(value)
                    return grad

                new_params = optimizer.step(model.get_params(), gradient_fn)
                if not math.isfinite(seen[0]) or not np.all(np.isfinite(new_params)):
                    raise NumericalError(f"non-finite loss in {tag} (epoch {epoch_no + 1})")
                model.set_params(new_params)
            epoch_no += 1
            if after_epoch is not None:
                after_epoch(epoch_no)


def _client_loss(pipeline: StrategyPipeline, videos: Sequence[VideoInstance], num_classes: int) -> LossConfig:
    if pipeline.loss.kind == "weighted_cross_entropy":
        weights = inverse_frequency_weights([v.label for v in videos], num_classes)
        return replace(pipeline.loss, class_weights=weights)
    return pipeline.loss


def _train_client(global_params: np.ndarray, template, pipeline: StrategyPipeline, center: CenterDataset,
                  round_index: int, cfg: ChallengeConfig) -> Tuple[ClientUpdate, Tuple[float, ...]]:
    model = template.clone()
    model.set_params(global_params)
    fit, val = validation_split(center.train, pipeline.federated.validation_fraction)
    mode = pipeline.inference.mode_for(center.center_id)
    rng = client_rng(cfg.seed, center.center_id, TRAIN_STREAM, round_index)
    loss = _client_loss(pipeline, fit, cfg.num_classes)
    tag = f"round {round_index} at client {center.center_id}"

    scores: List[float] = []
    best = {"score": -math.inf, "params": model.get_params()}

    def checkpoint(epoch_no: int) -> None:
        score = _score(model, pipeline, val, fit, cfg, mode)
        scores.append(score)
        logger.debug(f"{pipeline.name} {tag} epoch {epoch_no}: validation macro-F1 {score:.4f}")
        if score > best["score"]:
            best["score"], best["params"] = score, model.get_params()

    train_local(model, pipeline, fit, loss, pipeline.federated.local_epochs, rng, tag, after_epoch=checkpoint)
    update = ClientUpdate(client_id=center.center_id, params=best["params"],
                          num_examples=len(fit), local_best_score=best["score"])
    return update, tuple(scores)


def training_centers(datasets: Sequence[CenterDataset], holdout_center: str) -> List[CenterDataset]:
    return sorted((d for d in datasets if d.center_id != holdout_center and d.train), key=lambda d: d.center_id)


def run_federated_training(pipeline: StrategyPipeline, datasets: Sequence[CenterDataset], cfg: ChallengeConfig,
                           progress_callback: Optional[ProgressCallback] = None) -> TrainingResult:
    """
    Train the pipeline's global model over all non-holdout centers

    Args:
        pipeline: Strategy pipeline
        datasets: All centers (the holdout center, if present, is skipped)
        cfg: Run settings (seed, holdout center, worker count)
        progress_callback: Function to call with (percent, message) after each round

    Returns:
        TrainingResult with the final global model and per-round telemetry

    Raises:
        ValidationError: no training center
        NumericalError: non-finite loss, naming round and client
    """
    clients = training_centers(datasets, cfg.holdout_center)
    if not clients:
        raise ValidationError("federated training needs at least one center with training data")
    fed = pipeline.federated
    input_dim = clients[0].train[0].feature_dim
    global_model = pipeline.build_model(input_dim, cfg.num_classes, cfg.seed)
    server_state = ServerOptState.fresh(global_model.num_params, fed.server)
    runner = TaskRunner(cfg.workers, label=f"{pipeline.name} clients")
    all_val = {c.center_id: validation_split(c.train, fed.validation_fraction) for c in clients}

    rounds: List[RoundRecord] = []
    for r in range(1, fed.fl_rounds + 1):
        params = global_model.get_params()
        outcomes = runner.map(
            lambda center: _train_client(params, global_model, pipeline, center, r, cfg), clients
        )
        updates = [u for u, _ in outcomes]
        if fed.strategy == "fedmedian":
            new_params = fed_median(updates)
        elif fed.strategy == "fedopt":
            new_params, server_state = fed_opt_apply(server_state, params, fed_avg(updates))
        else:
            new_params = fed_avg(updates)
        global_model.set_params(new_params)

        global_scores = [
            _score(global_model, pipeline, val, fit, cfg, pipeline.inference.mode_for(cid))
            for cid, (fit, val) in all_val.items()
        ]
        record = RoundRecord(
            round_index=r,
            local_best_scores={u.client_id: u.local_best_score for u in updates},
            epoch_scores={u.client_id: s for u, s in outcomes},
            global_score=float(np.mean(global_scores)),
        )
        rounds.append(record)
        logger.info(
            f"{pipeline.name} round {r}/{fed.fl_rounds}: global validation macro-F1 {record.global_score:.4f}, "
            + ", ".join(f"{cid}={s:.4f}" for cid, s in record.local_best_scores.items())
        )
        if progress_callback:
            progress_callback(int(100 * r / fed.fl_rounds), f"{pipeline.name}: round {r}/{fed.fl_rounds}")
    return TrainingResult(model=global_model, rounds=tuple(rounds))


# ===================================================================
# CHALLENGE TASKS
# ===================================================================

def _evaluate(model, pipeline: StrategyPipeline, center: CenterDataset, support_videos: Sequence[VideoInstance],
              cfg: ChallengeConfig) -> CenterEvaluation:
    if not center.test:
        raise ValidationError(f"center {center.center_id} has no test videos")
    support = None
    if pipeline.inference.kind == "prototype":
        support = build_support(model, pipeline, support_videos, cfg.seed)
    preds = predict_videos(model, pipeline, center.test, cfg.seed, support=support,
                           mode=pipeline.inference.mode_for(center.center_id))
    truths = [v.label for v in center.test]
    report = metric_report(build_confusion_matrix(truths, preds, cfg.labels), cfg.absent_convention)
    return CenterEvaluation(
        center_id=center.center_id,
        report=report,
        case_ids=tuple(v.case_id for v in center.test),
        truths=tuple(int(t) for t in truths),
        preds=tuple(int(p) for p in preds),
    )


def evaluate_task1(model, pipeline: StrategyPipeline, holdout: CenterDataset, cfg: ChallengeConfig,
                   support_videos: Sequence[VideoInstance] = ()) -> CenterEvaluation:
    """
    Generalization: evaluate the global model on the held-out center's test set

    Prototype pipelines compare against support_videos (the training centers' videos).
    """
    evaluation = _evaluate(model, pipeline, holdout, support_videos, cfg)
    logger.info(
        f"{pipeline.name} task 1 on {holdout.center_id}: macro-F1 {evaluation.report.f1_macro:.4f}, "
        f"EC {evaluation.report.expected_cost:.4f}"
    )
    return evaluation


def run_task2_adaptation(model, pipeline: StrategyPipeline, centers: Sequence[CenterDataset],
                         cfg: ChallengeConfig) -> Task2Result:
    """
    Adaptation: fine-tune a copy of the global model on each center and evaluate it there

    Returns:
        Per-center evaluations and their arithmetic mean report

    Raises:
        ValidationError: a center without training or test videos
    """
    if not centers:
        raise ValidationError("task 2 needs at least one training center")
    per_center: Dict[str, CenterEvaluation] = {}
    for center in sorted(centers, key=lambda c: c.center_id):
        if not center.train or not center.test:
            raise ValidationError(f"center {center.center_id} needs both training and test videos for task 2")
        local = model.clone()
        epochs = pipeline.federated.fine_tune_epochs
        if epochs > 0:
            rng = client_rng(cfg.seed, center.center_id, FINE_TUNE_STREAM)
            loss = _client_loss(pipeline, center.train, cfg.num_classes)
            train_local(local, pipeline, center.train, loss, epochs, rng, f"fine-tuning at {center.center_id}")
        per_center[center.center_id] = _evaluate(local, pipeline, center, center.train, cfg)
    average = average_reports([per_center[c].report for c in per_center])
    logger.info(
        f"{pipeline.name} task 2 average: macro-F1 {average.f1_macro:.4f}, EC {average.expected_cost:.4f}"
    )
    return Task2Result(per_center=per_center, average=average)


def run_challenge(pipelines: Sequence[StrategyPipeline], datasets: Sequence[CenterDataset], cfg: ChallengeConfig,
                  progress_callback: Optional[ProgressCallback] = None) -> ChallengeResult:
    """
    Train and evaluate every pipeline on both tasks

    Raises:
        ValidationError: empty pipeline list, duplicate names or an unknown holdout center
    """
    if not pipelines:
        raise ValidationError("no pipelines to run")
    names = [p.name for p in pipelines]
    if len(set(names)) != len(names):
        raise ValidationError(f"pipeline names must be unique, got {names}")
    by_id = {d.center_id: d for d in datasets}
    if cfg.holdout_center not in by_id:
        raise ValidationError(
            f"holdout center '{cfg.holdout_center}' not in datasets ({', '.join(sorted(by_id))})"
        )
    holdout = by_id[cfg.holdout_center]
    clients = training_centers(datasets, cfg.holdout_center)
    support_videos = [v for c in clients for v in c.train]

    results = []
    for i, pipeline in enumerate(pipelines):
        logger.info(f"Running pipeline {pipeline.name} ({i + 1}/{len(pipelines)})")
        trained = run_federated_training(pipeline, datasets, cfg)
        task1 = evaluate_task1(trained.model, pipeline, holdout, cfg, support_videos)
        task2 = run_task2_adaptation(trained.model, pipeline, clients, cfg)
        results.append(PipelineResult(name=pipeline.name, task1=task1, task2=task2, rounds=trained.rounds))
        if progress_callback:
            progress_callback(int(100 * (i + 1) / len(pipelines)), f"pipeline {pipeline.name} done")
    return ChallengeResult(pipelines=tuple(results), config=cfg, holdout_center=cfg.holdout_center)
