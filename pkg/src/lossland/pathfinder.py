"""Off-center L2 annealing: the landscape-probing driver.

The driver re-trains a warm-started model under the loss

    L(theta) = E(theta) + beta * ||theta - theta_ref||^2

while beta climbs a schedule.  The converged model at each step is one
record of a trajectory through parameter space; discontinuities in that
trajectory are the first-order transitions this package exists to find.
Setting ``theta_ref`` to the origin anneals a model away toward the trivial
all-zero network; setting it to another trained model walks the flat valley
between minima; setting it near a suspected boundary steers the model into
otherwise unreachable terrain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import tables
from .errors import ConfigError
from .mnist import Dataset, PerClassAccuracy, per_class_accuracy
from .net import NetworkSpec, check_params, error_on, _gradient_arrays, radial_distance
from .optim import ConvergencePolicy, TrainResult, train_to_convergence
from .store import Checkpoint, checkpoint_id, save_checkpoint


@dataclass(frozen=True)
class GeometricSchedule:
    """beta grid growing by a fixed factor; ``first`` seeds the climb from zero."""

    first: float = 1e-6
    factor: float = 1.15

    def __post_init__(self):
        if self.first <= 0 or self.factor <= 1:
            raise ConfigError("geometric schedule needs first > 0 and factor > 1")

    def next(self, beta: float) -> float:
        return self.first if beta < self.first else beta * self.factor


@dataclass(frozen=True)
class LinearSchedule:
    delta_beta: float

    def __post_init__(self):
        if self.delta_beta <= 0:
            raise ConfigError("linear schedule needs delta_beta > 0")

    def next(self, beta: float) -> float:
        return beta + self.delta_beta


@dataclass
class AnnealConfig:
    """Knobs for one annealing run; ``theta_ref=None`` means the origin."""

    theta_ref: np.ndarray | None = None
    beta0: float = 0.0
    beta_max: float = 1.0
    schedule: GeometricSchedule | LinearSchedule = field(default_factory=GeometricSchedule)
    refine_near_transitions: bool = False
    epsilon_dist: float | None = None   # None: 1e-2 * ||params0|| at launch
    policy: ConvergencePolicy = field(default_factory=ConvergencePolicy)
    lr: float = 0.0015
    seed: int = 0
    batch_size: int = 64

    def __post_init__(self):
        if self.beta0 < 0 or self.beta0 > self.beta_max:
            raise ConfigError("need 0 <= beta0 <= beta_max")
        if self.epsilon_dist is not None and self.epsilon_dist <= 0:
            raise ConfigError("epsilon_dist must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")


@dataclass
class TrajectoryRecord:
    beta: float
    error_train: float
    error_test: float
    loss: float
    r0: float
    r_ref: float
    accuracy: PerClassAccuracy | None
    epochs_used: int
    checkpoint_id: str
    diverged: bool = False


@dataclass
class Trajectory:
    records: list[TrajectoryRecord]
    config: AnnealConfig

    def __post_init__(self):
        betas = [r.beta for r in self.records]
        if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
            raise ConfigError("trajectory betas must be strictly increasing")


@dataclass
class Transition:
    beta_before: float
    beta_after: float
    delta_error: float
    delta_r0: float
    affected_classes: list[int]


class RegularizedObjective:
    """Loss/gradient source for the training loop: E plus the off-center pull."""

    def __init__(self, spec: NetworkSpec, data: Dataset,
                 theta_ref: np.ndarray | None, beta: float):
        self.spec = spec
        self.data = data
        self.theta_ref = None if theta_ref is None else np.asarray(theta_ref, dtype=np.float64)
        self.beta = float(beta)

    @property
    def n_samples(self) -> int:
        return len(self.data)

    def _diff(self, params):
        return params if self.theta_ref is None else params - self.theta_ref

    def batch_grad(self, params, idx):
        g = _gradient_arrays(self.spec, params, self.data.images[idx],
                             self.data.labels[idx])
        if self.beta != 0.0:
            g = g + 2.0 * self.beta * self._diff(params)
        return g

    def full_loss(self, params) -> float:
        loss, _, _ = regularized_loss(self.spec, params, self.data,
                                      self.theta_ref, self.beta)
        return loss


def regularized_loss(spec: NetworkSpec, params: np.ndarray, data,
                     theta_ref: np.ndarray | None, beta: float):
    """(loss, error, penalty) of the off-center objective on the given samples."""
    if beta < 0:
        raise ConfigError("beta must be non-negative")
    params = np.asarray(params, dtype=np.float64)
    error = error_on(spec, params, data.images, data.labels)
    diff = params if theta_ref is None else params - np.asarray(theta_ref, dtype=np.float64)
    penalty = beta * float(diff @ diff)
    return error + penalty, error, penalty


def _train_step(objective, params, config) -> TrainResult:
    """One inner convergence run; module-level so tests can intercept it."""
    return train_to_convergence(objective, params, config.policy, config.lr,
                                config.seed, config.batch_size)


def _make_record(spec, params, beta, data, test_data, epochs, config, store_dir,
                 diverged=False, parent_id=None) -> TrajectoryRecord:
    ref = config.theta_ref
    r0 = radial_distance(params, np.zeros_like(params))
    r_ref = r0 if ref is None else radial_distance(params, ref)
    error_train = error_on(spec, params, data.images, data.labels)
    loss = error_train + beta * r_ref * r_ref
    if test_data is not None:
        error_test = error_on(spec, params, test_data.images, test_data.labels)
        acc = per_class_accuracy(spec, params, test_data)
    else:
        error_test = float("nan")
        acc = per_class_accuracy(spec, params, data)
    if store_dir is not None:
        cid = save_checkpoint(Checkpoint(spec=spec, params=params, meta={
            "beta": beta, "seed": config.seed, "lr": config.lr,
            "parent_id": parent_id,
        }), store_dir)
    else:
        cid = checkpoint_id(spec, params)
    return TrajectoryRecord(beta=float(beta), error_train=error_train,
                            error_test=error_test, loss=loss, r0=r0, r_ref=r_ref,
                            accuracy=acc, epochs_used=int(epochs), checkpoint_id=cid,
                            diverged=diverged)


def anneal(spec: NetworkSpec, params0: np.ndarray, data: Dataset,
           config: AnnealConfig, test_data: Dataset | None = None,
           store_dir=None) -> Trajectory:
    """Warm-started annealing climb; one record per converged beta.

    Stops once the distance to the reference drops under ``epsilon_dist`` or
    the schedule passes ``beta_max``.  A diverged step is recorded with its
    flag set and the climb resumes from the last good parameters.
    """
    params0 = check_params(spec, params0)
    ref = config.theta_ref
    if ref is not None and len(ref) != len(params0):
        raise ConfigError("theta_ref length does not match the parameter vector")
    eps = config.epsilon_dist
    if eps is None:
        eps = 1e-2 * float(np.linalg.norm(params0))
        if eps == 0.0:
            eps = 1e-8
    records: list[TrajectoryRecord] = []

    def r_ref_of(p):
        return radial_distance(p, np.zeros_like(p) if ref is None else ref)

    params = params0.copy()
    if r_ref_of(params) < eps:
        records.append(_make_record(spec, params, config.beta0, data, test_data, 0,
                                    config, store_dir))
        return Trajectory(records=records, config=config)

    if config.refine_near_transitions and store_dir is None:
        raise ConfigError("refine_near_transitions needs a checkpoint store")

    beta = float(config.beta0)
    parent = None
    while beta <= config.beta_max:
        objective = RegularizedObjective(spec, data, ref, beta)
        result = _train_step(objective, params, config)
        if not result.diverged:
            params = result.params
        rec = _make_record(spec, params, beta, data, test_data, result.epochs,
                           config, store_dir, diverged=result.diverged,
                           parent_id=parent)
        records.append(rec)
        parent = rec.checkpoint_id
        if r_ref_of(params) < eps:
            break
        beta = config.schedule.next(beta)

    traj = Trajectory(records=records, config=config)
    if config.refine_near_transitions:
        traj = _refine(spec, traj, data, test_data, config, store_dir)
    return traj


def _refine(spec, traj, data, test_data, config, store_dir, substeps: int = 10):
    """Linear sub-schedule across each detected jump, warm-started at the bracket."""
    from .store import load_checkpoint

    rough = detect_transitions(traj)
    extra: list[TrajectoryRecord] = []
    for tr in rough:
        before = next(r for r in traj.records if r.beta == tr.beta_before)
        params = load_checkpoint(store_dir, before.checkpoint_id).params
        parent = before.checkpoint_id
        width = (tr.beta_after - tr.beta_before) / substeps
        for i in range(1, substeps):
            beta = tr.beta_before + i * width
            objective = RegularizedObjective(spec, data, config.theta_ref, beta)
            result = _train_step(objective, params, config)
            if not result.diverged:
                params = result.params
            rec = _make_record(spec, params, beta, data, test_data, result.epochs,
                               config, store_dir, diverged=result.diverged,
                               parent_id=parent)
            extra.append(rec)
            parent = rec.checkpoint_id
    merged = {r.beta: r for r in traj.records}
    for r in extra:
        merged.setdefault(r.beta, r)
    records = [merged[b] for b in sorted(merged)]
    return Trajectory(records=records, config=config)


def detect_transitions(traj: Trajectory, error_jump_min: float = 0.05,
                       r_jump_min: float | None = None,
                       class_jump_min: float = 0.2) -> list[Transition]:
    """Mark consecutive-record jumps that are large in both error and radius.

    ``r_jump_min=None`` uses 5% of the current distance to the origin, which
    scales sensibly across the whole climb; pass an absolute value to pin it.
    """
    if len(traj.records) < 2:
        raise ConfigError("need at least two records to detect transitions")
    out: list[Transition] = []
    for a, b in zip(traj.records, traj.records[1:]):
        d_err = b.error_train - a.error_train
        d_r0 = abs(b.r0 - a.r0)
        thr_r = 0.05 * a.r0 if r_jump_min is None else r_jump_min
        if d_err > error_jump_min and d_r0 > thr_r:
            affected = []
            if a.accuracy is not None and b.accuracy is not None:
                delta = np.abs(b.accuracy.per_class - a.accuracy.per_class)
                affected = [int(c) for c in np.flatnonzero(delta > class_jump_min)]
            out.append(Transition(beta_before=a.beta, beta_after=b.beta,
                                  delta_error=d_err, delta_r0=d_r0,
                                  affected_classes=affected))
    return out


def critical_beta(grad_e: np.ndarray, params: np.ndarray,
                  theta_ref: np.ndarray | None = None) -> float:
    """Equal-loss strength estimate from the local gradient.

    The two competing minima of ``E + beta * ||theta - ref||^2`` tie when
    beta reaches ``-grad_E . (theta - ref) / (2 ||theta - ref||^2)``; the
    observed jump happens at or above this value.
    """
    params = np.asarray(params, dtype=np.float64)
    grad_e = np.asarray(grad_e, dtype=np.float64)
    diff = params if theta_ref is None else params - np.asarray(theta_ref, dtype=np.float64)
    denom = float(diff @ diff)
    if denom == 0.0:
        raise ConfigError("params equal theta_ref; critical beta undefined")
    return float(-(grad_e @ diff) / (2.0 * denom))


def connect(spec: NetworkSpec, params_start: np.ndarray, params_target: np.ndarray,
            data: Dataset, fine_config: AnnealConfig | None = None,
            test_data: Dataset | None = None, store_dir=None) -> Trajectory:
    """Walk from one minimum toward another along the flat valley floor.

    The reference point is pinned to ``params_target``; the default schedule
    raises beta linearly in 2e-7 steps up to 1e-5, tiny enough that the walk
    only succeeds where a low-error path exists.
    """
    params_start = check_params(spec, params_start)
    params_target = check_params(spec, params_target)
    if fine_config is None:
        fine_config = AnnealConfig(theta_ref=params_target, beta_max=1e-5,
                                   schedule=LinearSchedule(delta_beta=2e-7))
    else:
        fine_config = replace(fine_config, theta_ref=params_target)
    return anneal(spec, params_start, data, fine_config, test_data=test_data,
                  store_dir=store_dir)


TRAJECTORY_COLUMNS = (
    ["beta", "error_train", "error_test", "loss", "r0", "r_ref", "acc_overall"]
    + [f"acc_{c}" for c in range(10)]
    + ["epochs_used", "checkpoint_id"]
)


def write_trajectory_csv(path, traj: Trajectory) -> None:
    rows = []
    for r in traj.records:
        acc = r.accuracy
        per_class = [float("nan")] * 10
        if acc is not None:
            for c, value in enumerate(acc.per_class[:10]):
                per_class[c] = float(value)
        overall = acc.overall if acc is not None else float("nan")
        rows.append([r.beta, r.error_train, r.error_test, r.loss, r.r0, r.r_ref,
                     overall] + per_class + [r.epochs_used, r.checkpoint_id])
    tables.write_csv(path, TRAJECTORY_COLUMNS, rows)


def read_trajectory_csv(path) -> list[dict]:
    """Rows of the trajectory CSV as dicts with floats restored."""
    header, rows = tables.read_csv(path)
    if header != TRAJECTORY_COLUMNS:
        raise ConfigError(f"unexpected trajectory header in {path}")
    out = []
    for row in rows:
        d = dict(zip(header, row))
        for key in header:
            if key == "checkpoint_id":
                continue
            d[key] = int(d[key]) if key == "epochs_used" else float(d[key])
        out.append(d)
    return out


def trajectory_from_rows(rows: list[dict], config: AnnealConfig | None = None) -> Trajectory:
    """Rebuild a Trajectory (accuracy included) from CSV rows, for re-detection."""
    records = []
    for d in rows:
        per_class = np.array([d[f"acc_{c}"] for c in range(10)])
        acc = PerClassAccuracy(per_class=per_class, overall=d["acc_overall"],
                               support=np.zeros(10, dtype=np.int64))
        records.append(TrajectoryRecord(
            beta=d["beta"], error_train=d["error_train"], error_test=d["error_test"],
            loss=d["loss"], r0=d["r0"], r_ref=d["r_ref"], accuracy=acc,
            epochs_used=d["epochs_used"], checkpoint_id=d["checkpoint_id"]))
    return Trajectory(records=records, config=config or AnnealConfig())


def write_transitions_json(path, transitions: list[Transition]) -> None:
    payload = [
        {"beta_before": t.beta_before, "beta_after": t.beta_after,
         "delta_error": t.delta_error, "delta_r0": t.delta_r0,
         "affected_classes": t.affected_classes}
        for t in transitions
    ]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_transitions_json(path) -> list[Transition]:
    payload = json.loads(Path(path).read_text())
    return [Transition(beta_before=d["beta_before"], beta_after=d["beta_after"],
                       delta_error=d["delta_error"], delta_r0=d["delta_r0"],
                       affected_classes=list(d["affected_classes"]))
            for d in payload]
