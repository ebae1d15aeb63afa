"""Closed-form 1-D landscape exhibiting the annealing jump mechanism.

The default error curve is a smooth well, E(t) = 1 - exp(-(t-2)^2) on
[-1, 5]: zero error at t = 2, a nearly flat high-error tail toward the
origin.  Adding a quadratic pull b*(t - ref)^2 deforms the loss until a
second low-norm minimum appears; at the critical strength the two minima
trade places and the global minimizer jumps across the stretch where the
loss curve is concave.  Everything here has closed-form derivatives, so the
module doubles as the brute-force oracle for the transition logic: the grid
minimizer is exhaustive and the equal-loss strength comes from bisection,
independent of any gradient-based path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ToyLandscape:
    """1-D error curve with closed-form first and second derivatives.

    ``error_fn(t)`` returns ``(E, dE, d2E)`` and must accept numpy arrays.
    ``concave_segment`` is the stretch the transition jumps across: an
    interval with E'' < 0 throughout, lying between the two competing minima
    of the critical loss (the barrier between them lives inside it).
    """

    error_fn: Callable
    domain: tuple[float, float]
    concave_segment: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.domain
        s_lo, s_hi = self.concave_segment
        if not lo < hi:
            raise ConfigError("domain must be a nonempty interval")
        if not (lo <= s_lo < s_hi <= hi):
            raise ConfigError("concave_segment must be a nonempty interval inside the domain")


def _gauss_well(t):
    t = np.asarray(t, dtype=np.float64)
    u = t - 2.0
    g = np.exp(-u * u)
    return 1.0 - g, 2.0 * u * g, (2.0 - 4.0 * u * u) * g


def toy_error(landscape: ToyLandscape, theta):
    """(E, E', E'') at theta; raises if theta leaves the domain."""
    lo, hi = landscape.domain
    t = np.asarray(theta, dtype=np.float64)
    if np.any(t < lo) or np.any(t > hi):
        raise ConfigError(f"theta {theta} outside domain [{lo}, {hi}]")
    return landscape.error_fn(t)


def _golden_refine(f, a, b, tol):
    while b - a > tol:
        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        if f(c) < f(d):
            b = d
        else:
            a = c
    return 0.5 * (a + b)


def toy_global_minimizer(landscape: ToyLandscape, beta: float, theta_ref: float = 0.0,
                         grid_n: int = 100_000, refine_tol: float = 1e-10):
    """Brute-force global minimizer of E(t) + beta*(t-ref)^2: grid scan + golden refine."""
    if grid_n < 1000:
        raise ConfigError("grid_n must be at least 1000")
    lo, hi = landscape.domain

    def loss(t):
        e = landscape.error_fn(t)[0]
        return e + beta * (t - theta_ref) ** 2

    grid = np.linspace(lo, hi, grid_n)
    values = loss(grid)
    i = int(np.argmin(values))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid_n - 1)]
    t_star = _golden_refine(loss, a, b, refine_tol)
    e_star = float(landscape.error_fn(t_star)[0])
    return float(t_star), float(e_star + beta * (t_star - theta_ref) ** 2), e_star


def local_minimizer_near(landscape: ToyLandscape, beta: float, theta_ref: float,
                         x0: float, step: float = 1e-3, refine_tol: float = 1e-10):
    """Nearest local minimizer of the loss, found by walking downhill from x0."""
    lo, hi = landscape.domain

    def loss(t):
        return float(landscape.error_fn(t)[0]) + beta * (t - theta_ref) ** 2

    x = float(np.clip(x0, lo, hi))
    f_x = loss(x)
    # pick the downhill direction, then march until the value turns back up
    direction = 0.0
    for cand in (-step, step):
        x_c = float(np.clip(x + cand, lo, hi))
        if loss(x_c) < f_x:
            direction = cand
            break
    if direction == 0.0:
        return _golden_refine(loss, max(lo, x - step), min(hi, x + step), refine_tol)
    prev = x
    while True:
        nxt = float(np.clip(x + direction, lo, hi))
        if loss(nxt) >= loss(x) or nxt == x:
            break
        prev, x = x, nxt
    a, b = sorted((prev, float(np.clip(x + direction, lo, hi))))
    return _golden_refine(loss, a, b, refine_tol)


def equal_loss_beta(landscape: ToyLandscape, theta_ref: float = 0.0,
                    beta_hi: float = 2.0, tol: float = 1e-13):
    """Bisect for the strength where the two competing loss minima tie.

    Returns (beta_c, theta_high, theta_low): the critical strength and the
    global minimizers immediately below/above it.  Bisection acts on the
    identity of the global minimizer, so the result is independent of any
    descent path.
    """
    t0 = toy_global_minimizer(landscape, 0.0, theta_ref)[0]

    def branch(beta):
        return toy_global_minimizer(landscape, beta, theta_ref)[0]

    t_hi_end = branch(beta_hi)
    if abs(t_hi_end - t0) < 1e-3:
        raise ConfigError("no transition below beta_hi; increase beta_hi")
    split = 0.5 * (t0 + t_hi_end)

    lo, hi = 0.0, beta_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if branch(mid) > split:
            lo = mid
        else:
            hi = mid
    beta_c = 0.5 * (lo + hi)
    theta_high = branch(lo)
    theta_low = branch(hi)
    return float(beta_c), float(theta_high), float(theta_low)


def loss_concave_band(landscape: ToyLandscape, beta: float, between: tuple[float, float],
                      grid_n: int = 200_001):
    """Interval where the loss curvature E'' + 2*beta is negative, inside ``between``."""
    a, b = between
    grid = np.linspace(a, b, grid_n)
    curv = landscape.error_fn(grid)[2] + 2.0 * beta
    neg = np.flatnonzero(curv < 0.0)
    if len(neg) == 0:
        raise ConfigError("no concave stretch of the loss inside the given interval")
    return float(grid[neg[0]]), float(grid[neg[-1]])


def default_landscape() -> ToyLandscape:
    """Gaussian well on [-1, 5] with the jump band computed from the oracle."""
    proto = ToyLandscape(error_fn=_gauss_well, domain=(-1.0, 5.0),
                         concave_segment=(0.5, 1.0))   # placeholder, replaced below
    beta_c, t_high, t_low = equal_loss_beta(proto, theta_ref=0.0)
    band = loss_concave_band(proto, beta_c, (t_low, t_high))
    return ToyLandscape(error_fn=_gauss_well, domain=(-1.0, 5.0), concave_segment=band)


@dataclass
class ToyAnnealResult:
    betas: np.ndarray
    minimizers: np.ndarray
    losses: np.ndarray
    errors: np.ndarray
    jump_beta: float
    jump_index: int   # jump happened between betas[jump_index] and betas[jump_index+1]


def toy_anneal(landscape: ToyLandscape, schedule, theta_ref: float = 0.0,
               grid_n: int = 100_000, refine_tol: float = 1e-10) -> ToyAnnealResult:
    """Exact (oracle) minimizer per beta; locates the largest minimizer jump."""
    betas = np.asarray(schedule, dtype=np.float64)
    if len(betas) < 2 or np.any(np.diff(betas) <= 0):
        raise ConfigError("schedule must be an increasing sequence of betas")
    ts, ls, es = [], [], []
    for b in betas:
        t, l, e = toy_global_minimizer(landscape, float(b), theta_ref, grid_n, refine_tol)
        ts.append(t)
        ls.append(l)
        es.append(e)
    ts = np.array(ts)
    jumps = np.abs(np.diff(ts))
    j = int(np.argmax(jumps))
    return ToyAnnealResult(betas=betas, minimizers=ts, losses=np.array(ls),
                           errors=np.array(es), jump_beta=float(betas[j + 1]),
                           jump_index=j)


def toy_anneal_descent(landscape: ToyLandscape, schedule, theta_ref: float = 0.0,
                       lr: float = 0.05, steps_per_beta: int = 100_000,
                       grad_tol: float = 1e-12) -> ToyAnnealResult:
    """Warm-started gradient descent per beta, the 1-D analogue of the annealing driver.

    Descent stays on the minimum it is sitting in until that minimum ceases
    to exist, so its jump strength is at or above the oracle's equal-loss
    value (hysteresis).
    """
    betas = np.asarray(schedule, dtype=np.float64)
    if len(betas) < 2 or np.any(np.diff(betas) <= 0):
        raise ConfigError("schedule must be an increasing sequence of betas")
    lo, hi = landscape.domain
    t, _, _ = toy_global_minimizer(landscape, float(betas[0]), theta_ref)
    ts, ls, es = [], [], []
    for b in betas:
        for _ in range(steps_per_beta):
            e, de, _ = landscape.error_fn(t)
            g = float(de) + 2.0 * b * (t - theta_ref)
            if abs(g) < grad_tol:
                break
            t = float(np.clip(t - lr * g, lo, hi))
        e = float(landscape.error_fn(t)[0])
        ts.append(t)
        es.append(e)
        ls.append(e + float(b) * (t - theta_ref) ** 2)
    ts = np.array(ts)
    jumps = np.abs(np.diff(ts))
    j = int(np.argmax(jumps))
    return ToyAnnealResult(betas=betas, minimizers=ts, losses=np.array(ls),
                           errors=np.array(es), jump_beta=float(betas[j + 1]),
                           jump_index=j)


def critical_beta_1d(landscape: ToyLandscape, theta: float, theta_ref: float = 0.0) -> float:
    """Equal-loss strength estimate from the local slope at theta."""
    de = float(landscape.error_fn(theta)[1])
    diff = theta - theta_ref
    if diff == 0.0:
        raise ConfigError("theta equals theta_ref; estimate undefined")
    return -de * diff / (2.0 * diff * diff)


def mechanism_rows(landscape: ToyLandscape, betas, theta_ref: float = 0.0,
                   samples: int = 601):
    """Long-format rows (beta, theta, error, loss) sampling the curves per beta."""
    lo, hi = landscape.domain
    grid = np.linspace(lo, hi, samples)
    e = landscape.error_fn(grid)[0]
    rows = []
    for b in betas:
        loss = e + float(b) * (grid - theta_ref) ** 2
        for t, ev, lv in zip(grid, e, loss):
            rows.append([float(b), float(t), float(ev), float(lv)])
    return rows
