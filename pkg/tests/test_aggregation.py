import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given

from fedsurg.aggregation import (
    ClientOptimizer,
    ClientUpdate,
    SamConfig,
    ServerOptHyperparams,
    ServerOptState,
    fed_avg,
    fed_median,
    fed_opt_apply,
    sam_perturbation,
    sam_step,
)
from fedsurg.errors import NumericalError, ValidationError

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


@st.composite
def client_updates(draw, dim=None):
    d = dim or draw(st.integers(1, 6))
    n = draw(st.integers(1, 5))
    updates = []
    for i in range(n):
        params = draw(st.lists(finite, min_size=d, max_size=d))
        weight = draw(st.integers(1, 50))
        updates.append(ClientUpdate(f"center{i + 1}", params, weight))
    return updates


def test_fed_avg_weighted_mean():
    a = ClientUpdate("center1", [0.0, 2.0], 1)
    b = ClientUpdate("center2", [3.0, 5.0], 2)
    assert fed_avg([a, b]).tolist() == pytest.approx([2.0, 4.0])


def test_fed_avg_single_client_is_identity():
    u = ClientUpdate("center1", [1.5, -2.0, 0.25], 7)
    assert np.array_equal(fed_avg([u]), u.params)


@given(client_updates())
def test_fed_avg_stays_in_hull(updates):
    out = fed_avg(updates)
    stack = np.stack([u.params for u in updates])
    assert np.all(out >= stack.min(axis=0))
    assert np.all(out <= stack.max(axis=0))


@given(client_updates(), st.randoms())
def test_fed_avg_order_invariant(updates, random):
    shuffled = list(updates)
    random.shuffle(shuffled)
    assert np.array_equal(fed_avg(updates), fed_avg(shuffled))


@given(client_updates())
def test_fed_median_within_range(updates):
    out = fed_median(updates)
    stack = np.stack([u.params for u in updates])
    assert np.all(out >= stack.min(axis=0))
    assert np.all(out <= stack.max(axis=0))


def test_fed_median_even_count_averages_middle():
    ups = [ClientUpdate(f"c{i}", [v], 1) for i, v in enumerate([1.0, 10.0, 3.0, 4.0])]
    assert fed_median(ups).tolist() == [3.5]


def test_fed_median_ignores_weights():
    ups = [ClientUpdate("a", [0.0], 100), ClientUpdate("b", [1.0], 1), ClientUpdate("c", [2.0], 1)]
    assert fed_median(ups).tolist() == [1.0]


def test_aggregation_rejects_bad_input():
    with pytest.raises(ValidationError):
        fed_avg([])
    with pytest.raises(ValidationError, match="mismatched"):
        fed_avg([ClientUpdate("a", [0.0], 1), ClientUpdate("b", [0.0, 1.0], 1)])
    with pytest.raises(NumericalError):
        ClientUpdate("a", [np.nan], 1)
    with pytest.raises(ValidationError):
        ClientUpdate("a", [0.0], 0)


def test_fed_opt_sgd_unit_lr_returns_aggregate():
    state = ServerOptState.fresh(3, ServerOptHyperparams(mode="sgd", server_lr=1.0))
    g = np.array([1.0, 2.0, 3.0])
    a = np.array([0.5, 2.5, -1.0])
    new, new_state = fed_opt_apply(state, g, a)
    assert np.array_equal(new, a)
    assert new_state.step_count == 1
    assert state.step_count == 0


@pytest.mark.parametrize("mode", ["sgd", "adam"])
def test_fed_opt_zero_delta_is_fixed_point(mode):
    state = ServerOptState.fresh(2, ServerOptHyperparams(mode=mode))
    g = np.array([0.3, -0.7])
    new, _ = fed_opt_apply(state, g, g.copy())
    assert np.allclose(new, g)


def test_fed_opt_adam_first_step_moves_toward_aggregate():
    hp = ServerOptHyperparams(mode="adam", server_lr=0.1)
    state = ServerOptState.fresh(2, hp)
    g = np.array([1.0, -1.0])
    a = np.array([0.0, 0.0])
    new, state2 = fed_opt_apply(state, g, a)
    # bias-corrected first step has magnitude lr in every coordinate
    assert np.allclose(new, g - 0.1 * np.sign(g - a), atol=1e-6)
    assert state2.step_count == 1
    assert np.allclose(state2.first_moment, 0.1 * (g - a))


def test_fed_opt_dimension_mismatch():
    state = ServerOptState.fresh(2)
    with pytest.raises(ValidationError):
        fed_opt_apply(state, np.zeros(3), np.zeros(3))


def quadratic_grad(w):
    return 2.0 * w


def test_sam_step_matches_two_point_formula():
    cfg = SamConfig(rho=0.5, base_lr=0.1)
    w = np.array([3.0, 4.0])
    eps = 0.5 * w / 5.0
    expected = w - 0.1 * quadratic_grad(w + eps)
    assert np.allclose(sam_step(quadratic_grad, w, cfg), expected)


def test_adaptive_sam_scales_by_weight_magnitude():
    cfg = SamConfig(rho=0.5, adaptive=True)
    w = np.array([1.0, -2.0])
    g = np.array([1.0, 1.0])
    scaled = np.abs(w) * g
    expected = 0.5 * np.abs(w) * scaled / np.linalg.norm(scaled)
    assert np.allclose(sam_perturbation(w, g, cfg), expected)


def test_sam_zero_gradient_and_zero_lr():
    cfg = SamConfig()
    w = np.array([1.0, 2.0])
    assert np.array_equal(sam_step(lambda x: np.zeros_like(x), w, cfg), w)
    assert np.array_equal(sam_step(quadratic_grad, w, cfg, lr=0.0), w)


def test_sam_config_validation():
    with pytest.raises(ValidationError):
        SamConfig(rho=0.0)
    with pytest.raises(ValidationError):
        SamConfig(base_lr=-1.0)


@pytest.mark.parametrize("mode", ["sgd", "adam", "sam"])
def test_client_optimizer_descends_on_quadratic(mode):
    opt = ClientOptimizer(mode, learning_rate=0.05, sam=SamConfig(rho=0.01))
    w = np.array([2.0, -1.0])
    for _ in range(50):
        w = opt.step(w, quadratic_grad)
    assert np.linalg.norm(w) < np.linalg.norm([2.0, -1.0])


@pytest.mark.parametrize("mode", ["sgd", "adam", "sam"])
def test_client_optimizer_zero_lr_is_identity(mode):
    opt = ClientOptimizer(mode, learning_rate=0.0)
    w = np.array([0.5, 1.5])
    assert np.array_equal(opt.step(w, quadratic_grad), w)


def test_client_optimizer_unknown_mode():
    with pytest.raises(ValidationError):
        ClientOptimizer("rmsprop", 0.1)


@given(client_updates(dim=3), st.sampled_from([1e9, -1e9]))
def test_fed_median_contains_single_adversary(honest, magnitude):
    if len(honest) < 2:
        return
    adversary = ClientUpdate("zz-adversary", [magnitude] * 3, 1)
    out = fed_median(honest + [adversary])
    stack = np.stack([u.params for u in honest])
    assert np.all(out >= stack.min(axis=0))
    assert np.all(out <= stack.max(axis=0))


def test_sam_scalar_quadratic_example():
    cfg = SamConfig(rho=0.5, base_lr=0.1)
    # L = w^2 / 2: g = 2, eps = 0.5, g' = 2.5
    assert sam_step(lambda w: w, np.array([2.0]), cfg).tolist() == pytest.approx([1.75])


@given(st.integers(0, 2 ** 32 - 1))
def test_sam_matches_two_point_formula_on_random_quadratics(seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(4, 4))
    a = m @ m.T + np.eye(4)
    w = rng.normal(size=4)
    cfg = SamConfig(rho=0.3, base_lr=0.05)
    g = a @ w
    eps = 0.3 * g / np.linalg.norm(g)
    expected = w - 0.05 * (a @ (w + eps))
    assert np.allclose(sam_step(lambda x: a @ x, w, cfg), expected, atol=1e-8, rtol=0)


def test_sam_small_rho_limit_is_gradient_step():
    def grad(w):
        return np.array([np.cos(w[0]) + w[1], w[0] + 3 * w[1] ** 2])

    w = np.array([0.4, -0.8])
    cfg = SamConfig(rho=1e-9, base_lr=0.1)
    assert np.allclose(sam_step(grad, w, cfg), w - 0.1 * grad(w), atol=1e-6)
