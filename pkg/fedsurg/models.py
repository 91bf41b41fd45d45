#!/usr/bin/env python3
"""
Toy Models - linear heads, embedding model, losses, frame samplers and video-level inference

The frozen backbones of the submissions are replaced by raw synthetic frame
features; every trainable model exposes the same small contract (get/set
params, analytic loss gradient, probabilities, embeddings) so the federated
loop does not care which one it trains.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np

from fedsurg.errors import ValidationError

logger = logging.getLogger(__name__)

LOSS_KINDS = ("cross_entropy", "weighted_cross_entropy", "triplet_margin")
PROTOTYPE_MODES = ("prototype", "per_sample")

DEFAULT_SEQ_LEN = 200
DEFAULT_EMBED_DIM = 16
_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class VideoInstance:
    """One video: L frames of D features with a single grade label"""

    frames: np.ndarray
    label: int
    center_id: str
    case_id: str

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ValidationError(f"case {self.case_id}: frames must be a non-empty (L, D) array, got {frames.shape}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "label", int(self.label))

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class LossConfig:
    """
    Loss selection

    Attributes:
        kind: cross_entropy | weighted_cross_entropy | triplet_margin
        class_weights: Per-class weights (weighted cross-entropy only)
        margin: Triplet margin on cosine distances
    """

    kind: str = "cross_entropy"
    class_weights: Optional[Tuple[float, ...]] = None
    margin: float = 0.5

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValidationError(f"loss kind must be one of {LOSS_KINDS}, got '{self.kind}'")
        if self.class_weights is not None:
            weights = tuple(float(w) for w in self.class_weights)
            if any(w <= 0 or not math.isfinite(w) for w in weights):
                raise ValidationError("class weights must be positive and finite")
            object.__setattr__(self, "class_weights", weights)
        if self.margin < 0:
            raise ValidationError("triplet margin must be >= 0")


@dataclass
class Batch:
    """
    Training batch

    Attributes:
        features: (n, D) example features
        labels: (n,) class indices
        triplets: Optional (m, 3) row indices (anchor, positive, negative) into features
    """

    features: np.ndarray
    labels: np.ndarray
    triplets: Optional[np.ndarray] = None

    def __len__(self):
        return self.features.shape[0]


@runtime_checkable
class ModelContract(Protocol):
    num_classes: int

    def get_params(self) -> np.ndarray: ...

    def set_params(self, params: np.ndarray) -> None: ...

    def clone(self) -> "ModelContract": ...

    def loss_and_gradient(self, batch: Batch, loss: LossConfig,
                          params: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]: ...

    def predict_proba(self, x: np.ndarray) -> np.ndarray: ...


def inverse_frequency_weights(labels: Sequence[int], num_classes: int) -> Tuple[float, ...]:
    """
    Class weights w_c = N / (C * N_c) from local labels

    Classes absent from the labels get the largest observed weight.
    """
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes).astype(np.float64)
    total = counts.sum()
    if total == 0:
        return tuple(1.0 for _ in range(num_classes))
    weights = np.zeros(num_classes)
    present = counts > 0
    weights[present] = total / (num_classes * counts[present])
    weights[~present] = weights[present].max()
    return tuple(float(w) for w in weights)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _cross_entropy(logits: np.ndarray, labels: np.ndarray, loss: LossConfig,
                   num_classes: int) -> Tuple[float, np.ndarray]:
    """Mean (optionally weighted) cross-entropy and its gradient w.r.t. the logits"""
    n = logits.shape[0]
    probs = softmax(logits)
    if loss.kind == "weighted_cross_entropy" and loss.class_weights is not None:
        if len(loss.class_weights) != num_classes:
            raise ValidationError(f"expected {num_classes} class weights, got {len(loss.class_weights)}")
        sample_w = np.asarray(loss.class_weights)[labels]
    else:
        sample_w = np.ones(n)
    picked = probs[np.arange(n), labels]
    value = float(np.sum(sample_w * -np.log(np.maximum(picked, 1e-300))) / n)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad *= (sample_w / n)[:, None]
    return value, grad


def _normalize_rows(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.maximum(np.linalg.norm(z, axis=-1, keepdims=True), _NORM_FLOOR)
    return z / norms, norms


def triplet_margin_loss(anchor: np.ndarray, positive: np.ndarray, negative: np.ndarray, margin: float = 0.5) -> float:
    """
    max(0, d(a, p) - d(a, n) + margin) with cosine distance d(x, y) = 1 - cos(x, y)
    """
    d_ap = 1.0 - float(np.dot(anchor, positive))
    d_an = 1.0 - float(np.dot(anchor, negative))
    return max(0.0, d_ap - d_an + margin)


class SoftmaxHeadModel:
    """
    Linear classification head with softmax output

    Inputs are pooled frame features (mean over the selected frames) or single
    frames; parameters are W (C x D) followed by b (C).
    """

    def __init__(self, input_dim: int, num_classes: int, init_scale: float = 0.01,
                 seed: int = 0, pooling: str = "mean"):
        if input_dim < 1 or num_classes < 2:
            raise ValidationError("softmax head needs input_dim >= 1 and num_classes >= 2")
        self.input_dim = int(input_dim)
        self.num_classes = int(num_classes)
        self.pooling = pooling
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, init_scale, size=(self.num_classes, self.input_dim)) if init_scale > 0 \
            else np.zeros((self.num_classes, self.input_dim))
        self._params = np.concatenate([w.reshape(-1), np.zeros(self.num_classes)])

    @property
    def num_params(self) -> int:
        return self._params.shape[0]

    def get_params(self) -> np.ndarray:
        return self._params.copy()

    def set_params(self, params: np.ndarray) -> None:
        params = np.asarray(params, dtype=np.float64).reshape(-1)
        if params.shape[0] != self.num_params:
            raise ValidationError(f"expected {self.num_params} parameters, got {params.shape[0]}")
        self._params = params.copy()

    def clone(self) -> "SoftmaxHeadModel":
        twin = SoftmaxHeadModel.__new__(SoftmaxHeadModel)
        twin.input_dim = self.input_dim
        twin.num_classes = self.num_classes
        twin.pooling = self.pooling
        twin._params = self._params.copy()
        return twin

    def _unpack(self, params: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        p = self._params if params is None else np.asarray(params, dtype=np.float64)
        cut = self.num_classes * self.input_dim
        return p[:cut].reshape(self.num_classes, self.input_dim), p[cut:]

    def pool(self, frames: np.ndarray, indices: Sequence[int]) -> np.ndarray:
        return np.asarray(frames)[np.asarray(indices)].mean(axis=0)

    def logits(self, x: np.ndarray, params: Optional[np.ndarray] = None) -> np.ndarray:
        w, b = self._unpack(params)
        return np.asarray(x, dtype=np.float64) @ w.T + b

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x))

    def loss_and_gradient(self, batch: Batch, loss: LossConfig,
                          params: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
        if loss.kind == "triplet_margin":
            raise ValidationError("the softmax head does not support the triplet margin loss")
        x = np.asarray(batch.features, dtype=np.float64)
        labels = np.asarray(batch.labels, dtype=np.int64)
        value, g_logits = _cross_entropy(self.logits(x, params), labels, loss, self.num_classes)
        g_w = g_logits.T @ x
        g_b = g_logits.sum(axis=0)
        return value, np.concatenate([g_w.reshape(-1), g_b])


class EmbeddingModel:
    """
    Linear projection followed by L2 normalization, plus an auxiliary linear head

    Parameters are P (E x D), head H (C x E) and head bias h (C). Triplet
    training only touches P; cross-entropy trains P, H and h through the
    normalized embedding.
    """

    def __init__(self, input_dim: int, embed_dim: int = DEFAULT_EMBED_DIM, num_classes: int = 6,
                 init_scale: Optional[float] = None, seed: int = 0):
        if input_dim < 1 or embed_dim < 1:
            raise ValidationError("embedding model needs input_dim >= 1 and embed_dim >= 1")
        self.input_dim = int(input_dim)
        self.embed_dim = int(embed_dim)
        self.num_classes = int(num_classes)
        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(self.input_dim) if init_scale is None else init_scale
        proj = rng.normal(0.0, scale, size=(self.embed_dim, self.input_dim))
        head = rng.normal(0.0, 0.01, size=(self.num_classes, self.embed_dim))
        self._params = np.concatenate([proj.reshape(-1), head.reshape(-1), np.zeros(self.num_classes)])

    @property
    def num_params(self) -> int:
        return self._params.shape[0]

    def get_params(self) -> np.ndarray:
        return self._params.copy()

    def set_params(self, params: np.ndarray) -> None:
        params = np.asarray(params, dtype=np.float64).reshape(-1)
        if params.shape[0] != self.num_params:
            raise ValidationError(f"expected {self.num_params} parameters, got {params.shape[0]}")
        self._params = params.copy()

    def clone(self) -> "EmbeddingModel":
        twin = EmbeddingModel.__new__(EmbeddingModel)
        twin.input_dim = self.input_dim
        twin.embed_dim = self.embed_dim
        twin.num_classes = self.num_classes
        twin._params = self._params.copy()
        return twin

    def _unpack(self, params: Optional[np.ndarray]):
        p = self._params if params is None else np.asarray(params, dtype=np.float64)
        e, d, c = self.embed_dim, self.input_dim, self.num_classes
        proj = p[:e * d].reshape(e, d)
        head = p[e * d:e * d + c * e].reshape(c, e)
        bias = p[e * d + c * e:]
        return proj, head, bias

    def pool(self, frames: np.ndarray, indices: Sequence[int]) -> np.ndarray:
        return np.asarray(frames)[np.asarray(indices)].mean(axis=0)

    def embed(self, x: np.ndarray, params: Optional[np.ndarray] = None) -> np.ndarray:
        """Unit-norm embedding of one feature vector (D,) or of each row of (n, D)"""
        proj, _, _ = self._unpack(params)
        emb, _ = _normalize_rows(np.asarray(x, dtype=np.float64) @ proj.T)
        return emb

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        _, head, bias = self._unpack(None)
        return softmax(self.embed(x) @ head.T + bias)

    def loss_and_gradient(self, batch: Batch, loss: LossConfig,
                          params: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
        proj, head, bias = self._unpack(params)
        x = np.asarray(batch.features, dtype=np.float64)
        z = x @ proj.T
        emb, norms = _normalize_rows(z)
        g_head = np.zeros_like(head)
        g_bias = np.zeros_like(bias)

        if loss.kind == "triplet_margin":
            value, g_emb = self._triplet_terms(emb, batch.triplets, loss.margin)
        else:
            labels = np.asarray(batch.labels, dtype=np.int64)
            value, g_logits = _cross_entropy(emb @ head.T + bias, labels, loss, self.num_classes)
            g_head = g_logits.T @ emb
            g_bias = g_logits.sum(axis=0)
            g_emb = g_logits @ head

        # back through e = z / |z|
        radial = np.sum(g_emb * emb, axis=1, keepdims=True)
        g_z = (g_emb - emb * radial) / norms
        g_proj = g_z.T @ x
        return value, np.concatenate([g_proj.reshape(-1), g_head.reshape(-1), g_bias])

    @staticmethod
    def _triplet_terms(emb: np.ndarray, triplets: Optional[np.ndarray], margin: float) -> Tuple[float, np.ndarray]:
        g_emb = np.zeros_like(emb)
        if triplets is None or len(triplets) == 0:
            return 0.0, g_emb
        trip = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
        a, p, n = emb[trip[:, 0]], emb[trip[:, 1]], emb[trip[:, 2]]
        d_ap = 1.0 - np.sum(a * p, axis=1)
        d_an = 1.0 - np.sum(a * n, axis=1)
        hinge = d_ap - d_an + margin
        active = hinge > 0
        m = trip.shape[0]
        value = float(np.sum(hinge[active]) / m)
        if active.any():
            ta = trip[active]
            np.add.at(g_emb, ta[:, 0], (n[active] - p[active]) / m)
            np.add.at(g_emb, ta[:, 1], -a[active] / m)
            np.add.at(g_emb, ta[:, 2], a[active] / m)
        return value, g_emb


def softmax_head_model(input_dim: int, num_classes: int, pooling: str = "mean",
                       init_scale: float = 0.01, seed: int = 0) -> SoftmaxHeadModel:
    """Build a linear softmax head over pooled frame features"""
    return SoftmaxHeadModel(input_dim, num_classes, init_scale=init_scale, seed=seed, pooling=pooling)


def embedding_model(input_dim: int, embed_dim: int = DEFAULT_EMBED_DIM, num_classes: int = 6,
                    init_scale: Optional[float] = None, seed: int = 0) -> EmbeddingModel:
    """Build an L2-normalized linear embedding model"""
    return EmbeddingModel(input_dim, embed_dim=embed_dim, num_classes=num_classes,
                          init_scale=init_scale, seed=seed)


# ===================================================================
# VIDEO-LEVEL INFERENCE
# ===================================================================

def majority_vote(frame_probs: Sequence[np.ndarray]) -> int:
    """
    Video label from per-frame probability vectors

    The class with most per-frame argmax votes wins. A count tie goes to the
    tied class whose supporting frames have the higher mean max-probability;
    a remaining tie goes to the lower class index.
    """
    probs = np.asarray(frame_probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValidationError("majority vote needs at least one frame probability vector")
    votes = probs.argmax(axis=1)
    confidence = probs.max(axis=1)
    counts = np.bincount(votes, minlength=probs.shape[1])
    tied = np.flatnonzero(counts == counts.max())
    if tied.size == 1:
        return int(tied[0])
    # tied classes share the vote count, so exact sums order them like means
    best_class, best_sum = int(tied[0]), -1.0
    for c in tied:
        total = math.fsum(confidence[votes == c])
        if total > best_sum:
            best_class, best_sum = int(c), total
    return best_class


@dataclass(frozen=True)
class SupportSet:
    """Per-class unit-norm reference embeddings"""

    embeddings: Mapping[int, np.ndarray]

    def __post_init__(self):
        cleaned: Dict[int, np.ndarray] = {}
        for cls, emb in self.embeddings.items():
            arr = np.asarray(emb, dtype=np.float64)
            if arr.size == 0:
                continue
            arr = arr.reshape(-1, arr.shape[-1])
            norms = np.linalg.norm(arr, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise ValidationError(f"support embeddings of class {cls} must be unit-norm")
            cleaned[int(cls)] = arr
        if not cleaned:
            raise ValidationError("support set has no non-empty class")
        object.__setattr__(self, "embeddings", dict(sorted(cleaned.items())))

    @classmethod
    def from_labeled(cls, embeddings: np.ndarray, labels: Sequence[int]) -> "SupportSet":
        embeddings = np.asarray(embeddings, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        return cls({int(c): embeddings[labels == c] for c in np.unique(labels)})


def prototype_classify(query: np.ndarray, support: SupportSet, mode: str = "prototype") -> int:
    """
    Assign the query embedding to a support class

    Args:
        query: Unit-norm query embedding
        support: Reference embeddings per class (empty classes are skipped)
        mode: "prototype" compares with each class's re-normalized mean embedding;
            "per_sample" picks the class with the lowest mean cosine distance

    Returns:
        Class index; ties go to the lower index
    """
    if mode not in PROTOTYPE_MODES:
        raise ValidationError(f"prototype mode must be one of {PROTOTYPE_MODES}, got '{mode}'")
    q = np.asarray(query, dtype=np.float64)
    best_class, best_score = None, -math.inf
    for cls, members in support.embeddings.items():
        if mode == "prototype":
            proto = members.mean(axis=0)
            norm = np.linalg.norm(proto)
            score = float(proto @ q / norm) if norm > _NORM_FLOOR else 0.0
        else:
            # highest mean similarity is lowest mean cosine distance
            score = float(np.mean(members @ q))
        if score > best_score:
            best_class, best_score = cls, score
    return int(best_class)


# ===================================================================
# FRAME SAMPLERS
# ===================================================================

def sample_indices_hybrid(seq_len: int = DEFAULT_SEQ_LEN, k: int = 32, window_halfwidth: int = 16,
                          center_bias: float = 0.6, rng: Optional[np.random.Generator] = None,
                          center: Optional[int] = None) -> np.ndarray:
    """
    Center-weighted frame sample

    ceil(2k/3) indices are drawn uniformly without replacement from the window
    [center - w, center + w] (all of it when the window is smaller); the rest
    come from the whole sequence with probability mass center_bias spread over
    the window and 1 - center_bias over the other frames, never repeating an
    index.

    Returns:
        Sorted, distinct frame indices
    """
    if k < 1 or k > seq_len:
        raise ValidationError(f"cannot sample {k} frames from a sequence of {seq_len}")
    if not 0.0 <= center_bias <= 1.0:
        raise ValidationError("center_bias must lie in [0, 1]")
    rng = rng if rng is not None else np.random.default_rng()
    mid = seq_len // 2 if center is None else int(center)
    lo, hi = mid - window_halfwidth, mid + window_halfwidth
    if window_halfwidth < 0 or lo < 0 or hi > seq_len - 1:
        raise ValidationError(
            f"window [{lo}, {hi}] does not fit a sequence of {seq_len} frames"
        )
    window = np.arange(lo, hi + 1)
    n_window = min(math.ceil(2 * k / 3), window.size)
    chosen = rng.choice(window, size=n_window, replace=False)

    remaining = k - n_window
    if remaining > 0:
        in_window = np.zeros(seq_len, dtype=bool)
        in_window[window] = True
        outside = seq_len - window.size
        weights = np.where(in_window, center_bias / window.size,
                           (1.0 - center_bias) / outside if outside else 0.0)
        weights[chosen] = 0.0
        if np.count_nonzero(weights) < remaining:
            # bias of 0 or 1 can starve one region; fall back to uniform over what is left
            weights = np.ones(seq_len)
            weights[chosen] = 0.0
        weights /= weights.sum()
        extra = rng.choice(seq_len, size=remaining, replace=False, p=weights)
        chosen = np.concatenate([chosen, extra])
    return np.sort(chosen.astype(np.int64))


def sample_indices_equidistant(seq_len: int = DEFAULT_SEQ_LEN, k: int = 100) -> np.ndarray:
    """Indices floor(i * seq_len / k) for i = 0..k-1"""
    if k < 1 or k > seq_len:
        raise ValidationError(f"equidistant sampling needs 1 <= k <= {seq_len}, got {k}")
    return (np.arange(k, dtype=np.int64) * seq_len) // k


def select_frames_by_similarity(instance: VideoInstance, embedder, k: int) -> np.ndarray:
    """
    Keyframe (frame L // 2) plus the k-1 frames most cosine-similar to it

    Similarity is measured between embedder outputs; ties go to the lower index.

    Returns:
        Sorted frame indices
    """
    n_frames = instance.num_frames
    if k < 1 or k > n_frames:
        raise ValidationError(f"cannot select {k} frames from a video of {n_frames}")
    key = n_frames // 2
    if k == 1:
        return np.array([key], dtype=np.int64)
    emb = np.asarray(embedder.embed(instance.frames))
    sims = emb @ emb[key]
    others = np.delete(np.arange(n_frames), key)
    # lexsort: last key is primary -> descending similarity, then ascending index
    order = np.lexsort((others, -sims[others]))
    picked = others[order[:k - 1]]
    return np.sort(np.concatenate([[key], picked]).astype(np.int64))
