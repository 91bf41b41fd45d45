import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given

from fedsurg.errors import ValidationError
from fedsurg.models import (
    Batch,
    LossConfig,
    ModelContract,
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
    triplet_margin_loss,
)


def numeric_gradient(model, batch, loss, params, h=1e-6):
    grad = np.zeros_like(params)
    for i in range(params.shape[0]):
        up, down = params.copy(), params.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (model.loss_and_gradient(batch, loss, up)[0] - model.loss_and_gradient(batch, loss, down)[0]) / (2 * h)
    return grad


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


@pytest.fixture
def batch(rng):
    return Batch(features=rng.normal(size=(7, 4)), labels=np.array([0, 1, 2, 0, 1, 2, 2]))


@pytest.mark.parametrize("loss", [
    LossConfig("cross_entropy"),
    LossConfig("weighted_cross_entropy", class_weights=(1.0, 2.0, 0.5)),
])
def test_softmax_head_gradient(batch, loss):
    model = softmax_head_model(4, 3, init_scale=0.3, seed=1)
    params = model.get_params()
    _, grad = model.loss_and_gradient(batch, loss)
    assert np.allclose(grad, numeric_gradient(model, batch, loss, params), atol=1e-5)


def test_embedding_cross_entropy_gradient(batch):
    model = embedding_model(4, embed_dim=3, num_classes=3, seed=2)
    model.set_params(model.get_params() + np.random.default_rng(0).normal(0, 0.3, model.num_params))
    loss = LossConfig("cross_entropy")
    _, grad = model.loss_and_gradient(batch, loss)
    assert np.allclose(grad, numeric_gradient(model, batch, loss, model.get_params()), atol=1e-5)


def test_embedding_triplet_gradient(rng):
    model = embedding_model(4, embed_dim=3, num_classes=3, seed=3)
    features = rng.normal(size=(6, 4))
    trip_batch = Batch(features=features, labels=np.array([0, 0, 1, 1, 2, 2]),
                       triplets=np.array([[0, 1, 2], [2, 3, 4], [4, 5, 0]]))
    loss = LossConfig("triplet_margin", margin=2.5)
    value, grad = model.loss_and_gradient(trip_batch, loss)
    # a margin above the largest possible distance gap keeps every hinge active
    assert value > 0
    assert np.allclose(grad, numeric_gradient(model, trip_batch, loss, model.get_params()), atol=1e-5)
    head_part = grad[model.embed_dim * model.input_dim:]
    assert np.all(head_part == 0)


def test_softmax_head_rejects_triplet(batch):
    model = softmax_head_model(4, 3)
    with pytest.raises(ValidationError):
        model.loss_and_gradient(batch, LossConfig("triplet_margin"))


def test_models_follow_contract():
    assert isinstance(softmax_head_model(3, 6), ModelContract)
    assert isinstance(embedding_model(3), ModelContract)


def test_clone_is_independent():
    model = softmax_head_model(3, 6, seed=4)
    twin = model.clone()
    twin.set_params(np.zeros(model.num_params))
    assert not np.array_equal(model.get_params(), twin.get_params())


def test_embeddings_are_unit_norm(rng):
    model = embedding_model(5, embed_dim=4)
    emb = model.embed(rng.normal(size=(10, 5)))
    assert np.allclose(np.linalg.norm(emb, axis=1), 1.0)


def test_triplet_margin_loss_values():
    a = unit([1, 0])
    assert triplet_margin_loss(a, a, unit([-1, 0]), margin=0.5) == 0.0
    assert triplet_margin_loss(a, unit([0, 1]), unit([0, 1]), margin=0.5) == pytest.approx(0.5)


def test_inverse_frequency_weights():
    weights = inverse_frequency_weights([0, 0, 0, 1], 3)
    assert weights[0] == pytest.approx(4 / 9)
    assert weights[1] == pytest.approx(4 / 3)
    assert weights[2] == pytest.approx(4 / 3)


def test_video_instance_is_read_only():
    video = VideoInstance(np.zeros((4, 2)), 3, "center1", "center1_v000")
    assert video.num_frames == 4 and video.feature_dim == 2
    with pytest.raises(ValueError):
        video.frames[0, 0] = 1.0
    with pytest.raises(ValidationError):
        VideoInstance(np.zeros(4), 0, "center1", "bad")


# -------------------------------------------------------------------
# inference
# -------------------------------------------------------------------

def test_majority_vote_plain_majority():
    probs = [[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]
    assert majority_vote(probs) == 0


def test_majority_vote_tie_breaks_on_confidence():
    probs = [[0.55, 0.45, 0.0], [0.1, 0.9, 0.0]]
    assert majority_vote(probs) == 1


def test_majority_vote_full_tie_takes_lower_class():
    probs = [[0.0, 0.7, 0.3], [0.0, 0.3, 0.7]]
    assert majority_vote(probs) == 1


def test_majority_vote_needs_frames():
    with pytest.raises(ValidationError):
        majority_vote(np.zeros((0, 3)))


def test_prototype_classify_modes():
    support = SupportSet({
        0: np.array([unit([1, 0]), unit([1, 1])]),
        1: np.array([unit([0, 1])]),
    })
    assert prototype_classify(unit([1, 0.1]), support, "prototype") == 0
    assert prototype_classify(unit([0.1, 1]), support, "per_sample") == 1


def test_prototype_tie_goes_to_lower_class():
    support = SupportSet({3: np.array([unit([1, 1])]), 1: np.array([unit([1, -1])])})
    assert prototype_classify(unit([1, 0]), support) == 1


def test_support_set_validation():
    with pytest.raises(ValidationError, match="unit-norm"):
        SupportSet({0: np.array([[2.0, 0.0]])})
    with pytest.raises(ValidationError):
        SupportSet({0: np.zeros((0, 2))})
    with pytest.raises(ValidationError):
        prototype_classify(unit([1, 0]), SupportSet({0: np.array([unit([1, 0])])}), "nearest")


def test_support_from_labeled():
    emb = np.array([unit([1, 0]), unit([0, 1]), unit([1, 1])])
    support = SupportSet.from_labeled(emb, [2, 0, 2])
    assert list(support.embeddings) == [0, 2]
    assert support.embeddings[2].shape == (2, 2)


# -------------------------------------------------------------------
# frame samplers
# -------------------------------------------------------------------

@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 60), st.floats(0.0, 1.0))
def test_hybrid_sampler_properties(seed, k, bias):
    idx = sample_indices_hybrid(200, k, 16, bias, rng=np.random.default_rng(seed))
    assert idx.shape == (k,)
    assert np.all(np.diff(idx) > 0)
    assert idx.min() >= 0 and idx.max() < 200
    in_window = np.count_nonzero((idx >= 84) & (idx <= 116))
    assert in_window >= min(-(-2 * k // 3), 33)


def test_hybrid_sampler_is_seeded():
    a = sample_indices_hybrid(rng=np.random.default_rng(7))
    b = sample_indices_hybrid(rng=np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_hybrid_sampler_extra_draw_mass():
    # k=3: two indices from the 33-frame window, one weighted draw over the rest
    rng = np.random.default_rng(11)
    draws = 10_000
    extra_inside = 0
    for _ in range(draws):
        idx = sample_indices_hybrid(200, 3, 16, 0.6, rng=rng)
        extra_inside += np.count_nonzero((idx >= 84) & (idx <= 116)) - 2
    inside_mass = 0.6 * 31 / 33
    expected = inside_mass / (inside_mass + 0.4)
    assert extra_inside / draws == pytest.approx(expected, abs=0.02)


def test_hybrid_sampler_rejects_bad_window():
    with pytest.raises(ValidationError):
        sample_indices_hybrid(20, 4, 16)
    with pytest.raises(ValidationError):
        sample_indices_hybrid(200, 201, 16)


def test_equidistant_sampler():
    assert sample_indices_equidistant(200, 100).tolist() == list(range(0, 200, 2))
    assert sample_indices_equidistant(10, 3).tolist() == [0, 3, 6]
    with pytest.raises(ValidationError):
        sample_indices_equidistant(10, 11)


class _IdentityEmbedder:
    def embed(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_similarity_selection_includes_keyframe_and_nearest():
    frames = np.array([[1, 0], [0, 1], [1, 0.1], [1, 0.05], [0, 1]], dtype=float)
    video = VideoInstance(frames, 0, "center1", "c")
    # keyframe is index 2; frame 3 is closest, then frame 0
    assert select_frames_by_similarity(video, _IdentityEmbedder(), 3).tolist() == [0, 2, 3]
    assert select_frames_by_similarity(video, _IdentityEmbedder(), 1).tolist() == [2]


def test_similarity_selection_ties_prefer_lower_index():
    frames = np.array([[0, 1], [0, 1], [1, 0], [0, 1]], dtype=float)
    video = VideoInstance(frames, 0, "center1", "c")
    assert select_frames_by_similarity(video, _IdentityEmbedder(), 3).tolist() == [0, 1, 2]


@given(st.integers(0, 2 ** 32 - 1))
def test_probabilities_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=5.0, size=(5, 4))
    for model in (softmax_head_model(4, 6, init_scale=1.0, seed=seed % 97),
                  embedding_model(4, embed_dim=3, num_classes=6, seed=seed % 97)):
        probs = model.predict_proba(x)
        assert np.all(probs >= 0)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)


@given(st.integers(0, 2 ** 32 - 1))
def test_random_gradient_checks(seed):
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(5, 3))
    labels = rng.integers(0, 4, 5)
    head = softmax_head_model(3, 4, init_scale=0.5, seed=seed % 101)
    emb = embedding_model(3, embed_dim=2, num_classes=4, seed=seed % 101)
    batch = Batch(features, labels)
    for model in (head, emb):
        loss = LossConfig("cross_entropy")
        _, grad = model.loss_and_gradient(batch, loss)
        numeric = numeric_gradient(model, batch, loss, model.get_params(), h=1e-5)
        scale = max(np.linalg.norm(numeric), 1e-8)
        assert np.linalg.norm(grad - numeric) / scale < 1e-4


@given(st.lists(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3), min_size=1, max_size=8),
       st.randoms())
def test_majority_vote_permutation_invariant(rows, random):
    probs = np.asarray(rows)
    probs = probs / probs.sum(axis=1, keepdims=True)
    shuffled = list(probs)
    random.shuffle(shuffled)
    assert majority_vote(probs) == majority_vote(np.asarray(shuffled))


def test_prototype_unchanged_by_duplicating_a_class():
    members = np.array([unit([1, 0.2]), unit([0.5, 1])])
    base = SupportSet({0: members, 1: np.array([unit([-1, 0.3])])})
    doubled = SupportSet({0: np.vstack([members, members]), 1: np.array([unit([-1, 0.3])])})
    for q in (unit([1, 1]), unit([-1, 0]), unit([0.2, -1])):
        assert prototype_classify(q, base) == prototype_classify(q, doubled)


@given(st.lists(st.floats(-1, 1), min_size=9, max_size=9), st.floats(0.0, 2.0))
def test_triplet_loss_non_negative_and_zero_when_separated(coords, margin):
    vecs = np.asarray(coords).reshape(3, 3)
    if np.any(np.linalg.norm(vecs, axis=1) < 1e-3):
        return
    a, p, n = (unit(v) for v in vecs)
    value = triplet_margin_loss(a, p, n, margin)
    assert value >= 0.0
    if (1 - a @ p) + margin < (1 - a @ n) - 1e-9:
        assert value == 0.0


def test_similarity_selection_picks_keyframe_duplicate(rng):
    frames = rng.normal(size=(9, 4))
    frames[7] = frames[4]
    video = VideoInstance(frames, 0, "center1", "c")
    assert select_frames_by_similarity(video, _IdentityEmbedder(), 2).tolist() == [4, 7]
