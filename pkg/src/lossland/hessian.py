"""Hessian-vector products and a Lanczos eigensolver for extreme eigenvalues.

The exact product propagates a tangent through the forward pass and through
backprop (forward-over-reverse), so no Hessian is ever materialized; cost is
a small constant times one gradient evaluation.  The finite-difference mode
is the independent cross-check.  Adding the quadratic pull
``beta * ||theta - ref||^2`` shifts the whole operator by ``2 * beta * I``
(that penalty's Hessian is exactly ``2 * beta * I``), which Lanczos sees as a
uniform shift of every Ritz value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConfigError
from .net import NetworkSpec, _forward_pass, _gradient_arrays, _log_softmax, unpack

BREAKDOWN_TOL = 1e-12


@dataclass(frozen=True)
class HvpConfig:
    mode: str = "exact"            # "exact" or "finite_difference"
    fd_step: float = 1e-5
    subset_size: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exact", "finite_difference"):
            raise ConfigError(f"unknown hvp mode {self.mode!r}")
        if self.mode == "finite_difference" and not 0.0 < self.fd_step < 1e-2:
            raise ConfigError("fd_step must lie in (0, 1e-2)")


@dataclass
class SpectrumReport:
    point_id: str
    ritz_values: np.ndarray     # descending
    residual_norms: np.ndarray
    most_negative: float | None
    data_subset_seed: int | None
    k: int


def _hvp_exact(spec: NetworkSpec, params, v, inputs, labels):
    """Directional derivative of the backprop gradient along v (exact).

    Forward pass carries the tangent of every activation and pre-activation;
    the backward pass then differentiates each backprop quantity along the
    same direction.  sigma'(z) = a(1-a) and sigma''(z) = a(1-a)(1-2a) with
    a = sigma(z), so everything is expressible in stored activations.
    """
    params = np.asarray(params, dtype=np.float64)
    layers = unpack(spec, params)
    v_layers = unpack(spec, np.asarray(v, dtype=np.float64))
    slices = spec.layer_slices()
    n = inputs.shape[0]
    depth = len(layers)

    acts, logits = _forward_pass(spec, params, inputs)
    r_acts = [np.zeros_like(inputs)]   # tangent of each activation
    r_pre = [None]                     # tangent of each hidden pre-activation
    ra = r_acts[0]
    for l in range(depth - 1):
        W, _ = layers[l]
        V, c = v_layers[l]
        rz = ra @ W + acts[l] @ V + c
        a = acts[l + 1]
        ra = a * (1.0 - a) * rz
        r_pre.append(rz)
        r_acts.append(ra)
    W, _ = layers[-1]
    V, c = v_layers[-1]
    r_logits = ra @ W + acts[-1] @ V + c

    probs = np.exp(_log_softmax(logits))
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    # softmax JVP: dp = p * (dz - sum(p * dz))
    r_delta = probs * (r_logits - (probs * r_logits).sum(axis=1, keepdims=True)) / n

    hv = np.empty_like(params)
    for l in range(depth - 1, -1, -1):
        w_sl, b_sl, _ = slices[l]
        hv[w_sl] = (r_acts[l].T @ delta + acts[l].T @ r_delta).reshape(-1)
        hv[b_sl] = r_delta.sum(axis=0)
        if l > 0:
            W, _ = layers[l]
            V, _ = v_layers[l]
            a = acts[l]
            sig1 = a * (1.0 - a)
            back = delta @ W.T
            r_back = r_delta @ W.T + delta @ V.T
            r_sig1 = sig1 * (1.0 - 2.0 * a) * r_pre[l]
            delta = back * sig1
            r_delta = r_back * sig1 + back * r_sig1
    return hv


def fd_hvp(grad_fn, theta: np.ndarray, v: np.ndarray, fd_step: float) -> np.ndarray:
    """Central finite difference of any gradient function along direction v."""
    norm_v = float(np.linalg.norm(v))
    if norm_v == 0.0:
        raise ConfigError("hvp direction must be nonzero")
    u = v / norm_v
    h = fd_step * (1.0 + float(np.linalg.norm(theta)))
    return (grad_fn(theta + h * u) - grad_fn(theta - h * u)) / (2.0 * h) * norm_v


def hvp(spec: NetworkSpec, params: np.ndarray, v: np.ndarray, data,
        cfg: HvpConfig = HvpConfig()) -> np.ndarray:
    """H(E) . v on the given dataset, exact or finite-difference per cfg."""
    if float(np.linalg.norm(v)) == 0.0:
        raise ConfigError("hvp direction must be nonzero")
    inputs, labels = data.images, data.labels
    if cfg.mode == "exact":
        return _hvp_exact(spec, params, v, inputs, labels)

    def grad_fn(theta):
        return _gradient_arrays(spec, theta, inputs, labels)

    return fd_hvp(grad_fn, np.asarray(params, dtype=np.float64),
                  np.asarray(v, dtype=np.float64), cfg.fd_step)


def hvp_regularized(spec: NetworkSpec, params, v, data, theta_ref, beta: float,
                    cfg: HvpConfig = HvpConfig()) -> np.ndarray:
    """H(E + beta*||theta - ref||^2) . v = H(E) . v + 2 * beta * v."""
    base = hvp(spec, params, v, data, cfg)
    if beta == 0.0:
        return base
    return base + 2.0 * beta * np.asarray(v, dtype=np.float64)


def _top_k_converged(alphas, betas, b, k, tol):
    T_alphas = np.array(alphas)
    T_betas = np.array(betas)
    ritz, vecs = eigh_tridiagonal(T_alphas, T_betas)
    order = np.argsort(ritz)[::-1][:k]
    return bool(np.all(np.abs(b * vecs[-1, order]) <= tol))


def _lanczos_tridiag(matvec, dim: int, max_iters: int, rng, tol: float, k_conv: int = 0):
    """Full-reorthogonalization Lanczos.

    Returns (alphas, betas, final_beta, restarts): the tridiagonal
    coefficients plus the norm of the last residual vector, which bounds the
    Ritz-pair residuals.  Every 10 iterations the top ``k_conv`` Ritz
    residuals are checked against ``tol`` for early exit.  On breakdown
    (residual below 1e-12, an invariant subspace) the iteration restarts in
    the orthogonal complement with a fresh seeded vector, at most 3 times.
    """
    alphas, betas = [], []
    basis = np.zeros((max_iters, dim))
    q = rng.standard_normal(dim)
    q /= np.linalg.norm(q)
    restarts = 0
    final_beta = 0.0
    i = 0
    while i < max_iters:
        basis[i] = q
        w = matvec(q)
        alpha = float(q @ w)
        alphas.append(alpha)
        w = w - alpha * q
        if i > 0:
            w = w - betas[-1] * basis[i - 1]
        # full reorthogonalization against everything kept so far
        w -= basis[: i + 1].T @ (basis[: i + 1] @ w)
        b = float(np.linalg.norm(w))
        if i + 1 == max_iters:
            final_beta = b
            break
        if (k_conv and i + 1 >= k_conv + 2 and (i + 1) % 10 == 0
                and _top_k_converged(alphas, betas, b, k_conv, tol)):
            final_beta = b
            break
        if b < BREAKDOWN_TOL:
            if restarts >= 3:
                final_beta = b
                break
            restarts += 1
            w = rng.standard_normal(dim)
            w -= basis[: i + 1].T @ (basis[: i + 1] @ w)
            b = float(np.linalg.norm(w))
            if b < BREAKDOWN_TOL:
                final_beta = b
                break
            betas.append(0.0)
        else:
            betas.append(b)
        q = w / b
        i += 1
    m = len(alphas)
    return np.array(alphas), np.array(betas[: m - 1]), final_beta, restarts


def lanczos_extreme(hvp_source, dim: int, k: int = 50, max_iters: int | None = None,
                    seed: int = 0, tol: float = 1e-8, point_id: str = "",
                    data_subset_seed: int | None = None,
                    with_negative: bool = True) -> SpectrumReport:
    """Top-k Ritz values (descending) of a symmetric operator given as a matvec.

    ``most_negative`` comes from running the identical procedure on the
    negated operator and flipping the sign of its top value.
    """
    if max_iters is None:
        max_iters = min(dim, max(2 * k, k + 20))
    if not 1 <= k <= max_iters <= dim:
        raise ConfigError(f"need 1 <= k <= max_iters <= dim, got k={k}, "
                          f"max_iters={max_iters}, dim={dim}")
    rng = np.random.default_rng(seed)
    alphas, offdiag, final_beta, _ = _lanczos_tridiag(hvp_source, dim, max_iters, rng,
                                                      tol, k_conv=k)
    if len(alphas) == 1:
        ritz = alphas.copy()
        vecs = np.ones((1, 1))
    else:
        ritz, vecs = eigh_tridiagonal(alphas, offdiag)
    order = np.argsort(ritz)[::-1][: min(k, len(ritz))]
    top = ritz[order]
    # residual ||H y - theta y|| = |beta_m * (last component of s)| per Ritz pair
    residuals = np.abs(final_beta * vecs[-1, order])

    most_negative = None
    if with_negative:
        neg_rng = np.random.default_rng(seed)
        n_alphas, n_off, _, _ = _lanczos_tridiag(lambda x: -hvp_source(x), dim,
                                                 max_iters, neg_rng, tol, k_conv=1)
        if len(n_alphas) == 1:
            neg_ritz = n_alphas
        else:
            neg_ritz = eigh_tridiagonal(n_alphas, n_off, eigvals_only=True)
        most_negative = float(-np.max(neg_ritz))

    return SpectrumReport(point_id=point_id, ritz_values=np.asarray(top, dtype=np.float64),
                          residual_norms=np.asarray(residuals, dtype=np.float64),
                          most_negative=most_negative, data_subset_seed=data_subset_seed,
                          k=int(k))


def spectrum_header(k: int) -> list[str]:
    return ["point_id", "r_ref"] + [f"ritz_{i + 1}" for i in range(k)] + [
        "most_negative", "residual_max"]


def write_spectrum_csv(path, reports: list[tuple[float, SpectrumReport]]) -> None:
    """Rows of (distance to reference, spectrum) pairs, one per probed point."""
    from . import tables

    if not reports:
        raise ConfigError("no spectra to write")
    k = reports[0][1].k
    rows = []
    for r_ref, rep in reports:
        ritz = list(rep.ritz_values) + [float("nan")] * (k - len(rep.ritz_values))
        most_neg = rep.most_negative if rep.most_negative is not None else float("nan")
        res_max = float(np.max(rep.residual_norms)) if len(rep.residual_norms) else 0.0
        rows.append([rep.point_id, float(r_ref)] + [float(x) for x in ritz[:k]]
                    + [most_neg, res_max])
    tables.write_csv(path, spectrum_header(k), rows)


def read_spectrum_csv(path) -> list[dict]:
    from . import tables

    header, rows = tables.read_csv(path)
    if header[:2] != ["point_id", "r_ref"] or header[-2:] != ["most_negative",
                                                              "residual_max"]:
        raise ConfigError(f"unexpected spectrum header in {path}")
    out = []
    for row in rows:
        d = dict(zip(header, row))
        for key in header[1:]:
            d[key] = float(d[key])
        out.append(d)
    return out
