#!/usr/bin/env python3
"""
Federated Optimization - server aggregation and client-side update rules
FedAvg, coordinate-wise FedMedian, server-side FedOpt and (adaptive) SAM.

Parameter vectors are flat float64 numpy arrays. Every function here returns new
arrays/states and never modifies its inputs.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from fedsurg.errors import NumericalError, ValidationError

logger = logging.getLogger(__name__)

ParameterVector = np.ndarray
GradientFn = Callable[[np.ndarray], np.ndarray]

SERVER_MODES = ("sgd", "adam")
CLIENT_OPTIMIZERS = ("sgd", "adam", "sam")


def as_parameter_vector(values, name: str = "params") -> ParameterVector:
    """Copy values into a read-only, finite, 1-D float64 vector"""
    vec = np.array(values, dtype=np.float64).reshape(-1)
    if vec.size == 0:
        raise ValidationError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(vec)):
        raise NumericalError(f"{name} contains non-finite values")
    vec.setflags(write=False)
    return vec


@dataclass(frozen=True)
class ClientUpdate:
    """
    Message a client sends to the server at the end of a round

    Attributes:
        client_id: Identifier of the sending center
        params: Best local checkpoint of the round
        num_examples: Local training examples (FedAvg weight)
        local_best_score: Validation macro-F1 of that checkpoint
    """

    client_id: str
    params: ParameterVector
    num_examples: int
    local_best_score: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "params", as_parameter_vector(self.params, f"params of client {self.client_id}"))
        if int(self.num_examples) < 1:
            raise ValidationError(f"client {self.client_id}: num_examples must be >= 1, got {self.num_examples}")


def _stack(updates: Sequence[ClientUpdate]) -> Tuple[list, np.ndarray]:
    if not updates:
        raise ValidationError("cannot aggregate an empty list of client updates")
    ordered = sorted(updates, key=lambda u: str(u.client_id))
    dims = {u.params.shape[0] for u in ordered}
    if len(dims) != 1:
        raise ValidationError(f"client updates have mismatched dimensions: {sorted(dims)}")
    return ordered, np.stack([u.params for u in ordered], axis=0)


def fed_avg(updates: Sequence[ClientUpdate]) -> ParameterVector:
    """
    Example-count weighted coordinate-wise mean of client parameters

    Updates are combined in client-id order so the result does not depend on
    arrival order.
    """
    ordered, stack = _stack(updates)
    weights = np.array([u.num_examples for u in ordered], dtype=np.float64)
    weights /= weights.sum()
    out = weights @ stack
    # rounding must not leave the coordinate-wise hull of the inputs
    out = np.clip(out, stack.min(axis=0), stack.max(axis=0))
    return as_parameter_vector(out)


def fed_median(updates: Sequence[ClientUpdate]) -> ParameterVector:
    """
    Coordinate-wise median; an even count takes the mean of the two middle values

    num_examples is ignored.
    """
    _, stack = _stack(updates)
    return as_parameter_vector(np.median(stack, axis=0))


@dataclass(frozen=True)
class ServerOptHyperparams:
    mode: str = "adam"
    server_lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.mode not in SERVER_MODES:
            raise ValidationError(f"server optimizer mode must be one of {SERVER_MODES}, got '{self.mode}'")
        if self.server_lr < 0:
            raise ValidationError("server_lr must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be > 0")


@dataclass(frozen=True)
class ServerOptState:
    """FedOpt server state; a value passed in and returned by fed_opt_apply"""

    step_count: int
    first_moment: ParameterVector
    second_moment: ParameterVector
    hyperparams: ServerOptHyperparams = field(default_factory=ServerOptHyperparams)

    @classmethod
    def fresh(cls, dimension: int, hyperparams: Optional[ServerOptHyperparams] = None) -> "ServerOptState":
        zeros = np.zeros(dimension)
        return cls(
            step_count=0,
            first_moment=as_parameter_vector(zeros, "first_moment"),
            second_moment=as_parameter_vector(zeros, "second_moment"),
            hyperparams=hyperparams or ServerOptHyperparams(),
        )


def fed_opt_apply(
    state: ServerOptState, global_params: ParameterVector, aggregated: ParameterVector
) -> Tuple[ParameterVector, ServerOptState]:
    """
    Apply the server optimizer to the pseudo-gradient global - aggregated

    Args:
        state: Current server state
        global_params: Global model broadcast at the start of the round
        aggregated: Aggregate of the client updates (usually fed_avg output)

    Returns:
        Tuple (new global parameters, new server state)
    """
    g = np.asarray(global_params, dtype=np.float64)
    a = np.asarray(aggregated, dtype=np.float64)
    if g.shape != a.shape or g.shape != state.first_moment.shape:
        raise ValidationError(
            f"dimension mismatch: global {g.shape}, aggregated {a.shape}, state {state.first_moment.shape}"
        )
    hp = state.hyperparams
    delta = g - a

    if hp.mode == "sgd":
        # equals g - lr * delta; exact for lr = 1 and for delta = 0
        new_global = a + (1.0 - hp.server_lr) * delta
        new_state = replace(state, step_count=state.step_count + 1)
        return as_parameter_vector(new_global), new_state

    m = hp.beta1 * state.first_moment + (1.0 - hp.beta1) * delta
    v = hp.beta2 * state.second_moment + (1.0 - hp.beta2) * delta * delta
    t = state.step_count + 1
    m_hat = m / (1.0 - hp.beta1 ** t)
    v_hat = v / (1.0 - hp.beta2 ** t)
    new_global = g - hp.server_lr * m_hat / (np.sqrt(v_hat) + hp.epsilon)
    new_state = ServerOptState(
        step_count=t,
        first_moment=as_parameter_vector(m, "first_moment"),
        second_moment=as_parameter_vector(v, "second_moment"),
        hyperparams=hp,
    )
    return as_parameter_vector(new_global), new_state


@dataclass(frozen=True)
class SamConfig:
    """
    Sharpness-aware minimization settings

    Attributes:
        rho: Perturbation radius
        adaptive: Scale the perturbation element-wise by |w| (adaptive SAM)
        base_lr: Step size of the descent step at the perturbed point
        eta: Offset added to |w| in adaptive mode (0 keeps the plain |w| scaling)
    """

    rho: float = 0.05
    adaptive: bool = False
    base_lr: float = 1e-3
    eta: float = 0.0

    def __post_init__(self):
        if self.rho <= 0:
            raise ValidationError(f"SAM rho must be > 0, got {self.rho}")
        if self.base_lr <= 0:
            raise ValidationError(f"SAM base_lr must be > 0, got {self.base_lr}")
        if self.eta < 0:
            raise ValidationError("SAM eta must be >= 0")


def sam_perturbation(w: np.ndarray, g: np.ndarray, cfg: SamConfig) -> np.ndarray:
    """Ascent direction epsilon; the zero vector when the scaled gradient vanishes"""
    if cfg.adaptive:
        scale = np.abs(w) + cfg.eta
        scaled = scale * g
        norm = np.linalg.norm(scaled)
        if norm == 0.0:
            return np.zeros_like(w)
        return cfg.rho * scale * scaled / norm
    norm = np.linalg.norm(g)
    if norm == 0.0:
        return np.zeros_like(w)
    return cfg.rho * g / norm


def sam_step(gradient_fn: GradientFn, w: ParameterVector, cfg: SamConfig, lr: Optional[float] = None) -> ParameterVector:
    """
    One sharpness-aware update: w - lr * grad(w + epsilon(w))

    Args:
        gradient_fn: Maps a parameter vector to the loss gradient there
        w: Current parameters
        cfg: SAM settings
        lr: Optional step size overriding cfg.base_lr (lr = 0 leaves w unchanged)

    Returns:
        Updated parameter vector
    """
    w = np.asarray(w, dtype=np.float64)
    step = cfg.base_lr if lr is None else lr
    g = np.asarray(gradient_fn(w), dtype=np.float64)
    eps = sam_perturbation(w, g, cfg)
    if not eps.any():
        g_adv = g
    else:
        g_adv = np.asarray(gradient_fn(w + eps), dtype=np.float64)
    return w - step * g_adv


class ClientOptimizer:
    """
    Local optimizer of one client for one round (state is reset every round)

    Modes:
        sgd:  w <- w - lr * g
        adam: bias-corrected Adam with default betas
        sam:  sam_step with the configured SamConfig, lr as the descent step
    """

    def __init__(self, mode: str, learning_rate: float, sam: Optional[SamConfig] = None,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        if mode not in CLIENT_OPTIMIZERS:
            raise ValidationError(f"client optimizer must be one of {CLIENT_OPTIMIZERS}, got '{mode}'")
        if learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        self.mode = mode
        self.learning_rate = learning_rate
        self.sam = sam or SamConfig()
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self._m = None
        self._v = None
        self._t = 0

    def step(self, w: np.ndarray, gradient_fn: GradientFn) -> np.ndarray:
        """
        Take one step; gradient_fn is always evaluated at w first

        Returns:
            New parameter vector
        """
        if self.mode == "sam":
            return sam_step(gradient_fn, w, self.sam, lr=self.learning_rate)

        g = gradient_fn(w)
        if self.mode == "sgd":
            return w - self.learning_rate * g

        if self._m is None:
            self._m = np.zeros_like(w)
            self._v = np.zeros_like(w)
        self._t += 1
        self._m = self.beta1 * self._m + (1.0 - self.beta1) * g
        self._v = self.beta2 * self._v + (1.0 - self.beta2) * g * g
        m_hat = self._m / (1.0 - self.beta1 ** self._t)
        v_hat = self._v / (1.0 - self.beta2 ** self._t)
        return w - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
