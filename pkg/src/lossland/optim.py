"""Adam and the patience-based train-to-convergence loop.

The annealing driver re-trains a warm-started model at every regularization
step, so this loop is the hot path of the whole package.  It is deliberately
plain: deterministic epoch shuffling, full-dataset loss at each epoch end,
best-so-far parameter tracking, stop after ``patience_epochs`` epochs without
improvement.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, NumericsError


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    @classmethod
    def fresh(cls, dim: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps_adam: float = 1e-8) -> "AdamState":
        if lr <= 0:
            raise ConfigError(f"lr must be positive, got {lr}")
        return cls(np.zeros(dim), np.zeros(dim), 0, lr, beta1, beta2, eps_adam)


def adam_step(state: AdamState, params: np.ndarray,
              grad: np.ndarray) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new params and advanced state."""
    if grad.shape != params.shape or state.first_moment.shape != params.shape:
        raise ConfigError("adam_step: shape mismatch between params, grad and state")
    if np.isnan(grad).any():
        raise NumericsError("adam_step: NaN in gradient")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps_adam)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)


@dataclass(frozen=True)
class ConvergencePolicy:
    patience_epochs: int = 5
    min_improvement: float = 1e-6
    max_epochs: int = 500

    def __post_init__(self):
        if self.patience_epochs < 1 or self.max_epochs < 1:
            raise ConfigError("patience_epochs and max_epochs must be positive")
        if self.patience_epochs > self.max_epochs:
            raise ConfigError("patience_epochs must not exceed max_epochs")
        if self.min_improvement < 0:
            raise ConfigError("min_improvement must be non-negative")


@dataclass
class TrainResult:
    params: np.ndarray
    epochs: int
    loss: float
    diverged: bool = False


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Deterministic shuffle: a pure function of (seed, epoch index)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def train_to_convergence(objective, params0: np.ndarray, policy: ConvergencePolicy,
                         lr: float, seed: int, batch_size: int = 64,
                         beta1: float = 0.9, beta2: float = 0.999,
                         eps_adam: float = 1e-8) -> TrainResult:
    """Adam epochs until the full-dataset loss stops improving.

    ``objective`` supplies the data and the loss definition:
      n_samples           size of the training set
      batch_grad(p, idx)  flat gradient of the loss on the given sample indices
      full_loss(p)        loss over the whole set (the patience metric)

    Returns the best parameters seen, which are never worse than ``params0``
    because the initial point is scored before the first epoch.  If the loss
    or a gradient goes non-finite the loop aborts and flags divergence,
    returning the last finite best.
    """
    n = objective.n_samples
    if n < 1:
        raise ConfigError("training data is empty")
    params = np.array(params0, dtype=np.float64)
    state = AdamState.fresh(params.size, lr, beta1, beta2, eps_adam)

    # score the starting point so a fruitless run still returns params0
    best_loss = objective.full_loss(params)
    best_params = params.copy()
    if not np.isfinite(best_loss):
        return TrainResult(best_params, 0, best_loss, diverged=True)

    # the first epoch establishes the patience baseline; stalls count after it
    metric_best = np.inf
    stall = 0
    epochs_run = 0
    for epoch in range(1, policy.max_epochs + 1):
        order = epoch_order(n, seed, epoch)
        try:
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                grad = objective.batch_grad(params, idx)
                params, state = adam_step(state, params, grad)
        except NumericsError:
            return TrainResult(best_params, epoch, best_loss, diverged=True)
        epochs_run = epoch

        loss = objective.full_loss(params)
        if not np.isfinite(loss):
            return TrainResult(best_params, epoch, best_loss, diverged=True)
        if loss < best_loss:
            best_loss = loss
            best_params = params.copy()
        if loss < metric_best - policy.min_improvement:
            metric_best = loss
            stall = 0
        else:
            stall += 1
            if stall >= policy.patience_epochs:
                break

    return TrainResult(best_params, epochs_run, best_loss)
