"""Command-line entry point wiring the library into experiment recipes.

Subcommands: train, anneal, hessian, connect, toy, detect.  Every command
reads a plain ``key=value`` experiment config (see README for the key list),
with a handful of flags overriding the file.  Exit codes: 0 success,
1 numeric failure, 2 configuration or ingestion problem.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError, NumericsError
from . import hessian as hs
from . import pathfinder as pf
from . import toyland as toy
from .mnist import load_idx, per_class_accuracy, subset
from .net import NetworkSpec, init_params, radial_distance
from .optim import ConvergencePolicy
from .store import Checkpoint, load_checkpoint, save_checkpoint
from . import tables

STORE_ENV = "LOSSLAND_STORE"

KNOWN_KEYS = {
    "train_images", "train_labels", "test_images", "test_labels",
    "out", "store",
    "layers", "lr", "batch_size", "patience", "min_improvement", "max_epochs",
    "seed", "subset", "threads",
    "schedule", "beta0", "beta_max", "geometric_first", "geometric_factor",
    "linear_delta", "refine", "epsilon_dist",
    "theta_ref", "start", "target",
    "error_jump_min", "r_jump_min", "class_jump_min",
    "k", "lanczos_iters", "lanczos_tol", "hvp_mode", "fd_step",
    "hessian_subset", "hessian_seed", "probe_window", "transition_index",
    "trajectory", "transitions",
    "toy_beta_max", "toy_steps", "toy_ref",
}

DEFAULTS = {
    "layers": "784,128,128,10",
    "lr": "0.0015",
    "batch_size": "64",
    "patience": "5",
    "min_improvement": "1e-6",
    "max_epochs": "500",
    "seed": "0",
    "schedule": "geometric",
    "beta0": "0",
    "beta_max": "1",
    "geometric_first": "1e-6",
    "geometric_factor": "1.15",
    "linear_delta": "2e-7",
    "refine": "0",
    "theta_ref": "origin",
    "error_jump_min": "0.05",
    "class_jump_min": "0.2",
    "k": "50",
    "lanczos_tol": "1e-8",
    "hvp_mode": "exact",
    "fd_step": "1e-5",
    "probe_window": "6",
    "toy_beta_max": "0.6",
    "toy_steps": "300",
    "toy_ref": "0",
    "out": "out",
}


def parse_config(path) -> dict:
    """key=value lines, '#' comments; unknown keys are rejected.

    Keys assigned by the file (rather than defaulted) are tracked under the
    internal "_explicit" entry so commands can tell the difference.
    """
    cfg = dict(DEFAULTS)
    explicit = set()
    if path is not None:
        text = Path(path).read_text()
        for ln, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in KNOWN_KEYS:
                raise ConfigError(f"{path}:{ln}: unknown config key {key!r}")
            cfg[key] = value
            explicit.add(key)
    cfg["_explicit"] = explicit
    return cfg


def _require_file(cfg, key) -> Path:
    if key not in cfg:
        raise ConfigError(f"config key {key!r} is required for this command")
    p = Path(cfg[key])
    if not p.exists():
        raise DataFormatError(f"{key} path does not exist: {p}")
    return p


def _store_dir(cfg) -> Path:
    store = cfg.get("store") or os.environ.get(STORE_ENV) or str(Path(cfg["out"]) / "store")
    return Path(store)


def _load_data(cfg, want_test=True):
    train = load_idx(_require_file(cfg, "train_images"),
                     _require_file(cfg, "train_labels"), split="train")
    if "subset" in cfg and cfg["subset"]:
        train = subset(train, int(cfg["subset"]), int(cfg["seed"]))
    test = None
    if want_test and "test_images" in cfg:
        test = load_idx(_require_file(cfg, "test_images"),
                        _require_file(cfg, "test_labels"), split="test")
    return train, test


def _policy(cfg) -> ConvergencePolicy:
    return ConvergencePolicy(patience_epochs=int(cfg["patience"]),
                             min_improvement=float(cfg["min_improvement"]),
                             max_epochs=int(cfg["max_epochs"]))


def _schedule(cfg):
    if cfg["schedule"] == "geometric":
        return pf.GeometricSchedule(first=float(cfg["geometric_first"]),
                                    factor=float(cfg["geometric_factor"]))
    if cfg["schedule"] == "linear":
        return pf.LinearSchedule(delta_beta=float(cfg["linear_delta"]))
    raise ConfigError(f"unknown schedule {cfg['schedule']!r}")


def _resolve_theta_ref(cfg, store):
    src = cfg["theta_ref"]
    if src == "origin":
        return None
    if src.startswith("checkpoint:"):
        return load_checkpoint(store, src.split(":", 1)[1]).params
    if src.startswith("midpoint:"):
        ids = src.split(":", 1)[1].split(",")
        if len(ids) != 2:
            raise ConfigError("midpoint needs exactly two checkpoint ids")
        a = load_checkpoint(store, ids[0].strip()).params
        b = load_checkpoint(store, ids[1].strip()).params
        return 0.5 * (a + b)
    raise ConfigError(f"theta_ref must be origin, checkpoint:<id> or "
                      f"midpoint:<id>,<id>, got {src!r}")


def _anneal_config(cfg, store) -> pf.AnnealConfig:
    eps = float(cfg["epsilon_dist"]) if "epsilon_dist" in cfg else None
    return pf.AnnealConfig(
        theta_ref=_resolve_theta_ref(cfg, store),
        beta0=float(cfg["beta0"]),
        beta_max=float(cfg["beta_max"]),
        schedule=_schedule(cfg),
        refine_near_transitions=cfg["refine"] not in ("0", "false", "no", ""),
        epsilon_dist=eps,
        policy=_policy(cfg),
        lr=float(cfg["lr"]),
        seed=int(cfg["seed"]),
        batch_size=int(cfg["batch_size"]),
    )


def _spec(cfg) -> NetworkSpec:
    return NetworkSpec(tuple(int(s) for s in cfg["layers"].split(",")))


def cmd_train(cfg) -> int:
    spec = _spec(cfg)
    train, test = _load_data(cfg)
    store = _store_dir(cfg)
    params0 = init_params(spec, int(cfg["seed"]))
    objective = pf.RegularizedObjective(spec, train, None, 0.0)
    from .optim import train_to_convergence

    result = train_to_convergence(objective, params0, _policy(cfg),
                                  float(cfg["lr"]), int(cfg["seed"]),
                                  int(cfg["batch_size"]))
    if result.diverged:
        print("training diverged", file=sys.stderr)
        return 1
    cid = save_checkpoint(Checkpoint(spec=spec, params=result.params, meta={
        "beta": 0.0, "seed": int(cfg["seed"]), "lr": float(cfg["lr"]),
        "parent_id": None}), store)
    eval_data = test if test is not None else train
    acc = per_class_accuracy(spec, result.params, eval_data)
    print(f"epochs={result.epochs} loss={result.loss:.6f} "
          f"test_accuracy={acc.overall:.4f}")
    print(f"checkpoint_id={cid}")
    return 0


def cmd_anneal(cfg) -> int:
    spec = _spec(cfg)
    train, test = _load_data(cfg)
    store = _store_dir(cfg)
    if "start" not in cfg:
        raise ConfigError("config key 'start' (checkpoint id) is required for anneal")
    start = load_checkpoint(store, cfg["start"])
    if start.spec != spec:
        raise ConfigError("start checkpoint architecture does not match 'layers'")
    config = _anneal_config(cfg, store)
    traj = pf.anneal(spec, start.params, train, config, test_data=test,
                     store_dir=store)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    pf.write_trajectory_csv(out / "trajectory.csv", traj)
    transitions = pf.detect_transitions(
        traj, error_jump_min=float(cfg["error_jump_min"]),
        r_jump_min=float(cfg["r_jump_min"]) if "r_jump_min" in cfg else None,
        class_jump_min=float(cfg["class_jump_min"]))
    pf.write_transitions_json(out / "transitions.json", transitions)
    last = traj.records[-1]
    print(f"records={len(traj.records)} transitions={len(transitions)} "
          f"final_beta={last.beta:.6g} final_error={last.error_train:.6f} "
          f"final_r_ref={last.r_ref:.6g}")
    for i, t in enumerate(transitions):
        print(f"T{i + 1}: beta {t.beta_before:.6g} -> {t.beta_after:.6g} "
              f"delta_error={t.delta_error:.4f} delta_r0={t.delta_r0:.4f} "
              f"classes={t.affected_classes}")
    return 0


def cmd_detect(cfg) -> int:
    rows = pf.read_trajectory_csv(_require_file(cfg, "trajectory"))
    traj = pf.trajectory_from_rows(rows)
    transitions = pf.detect_transitions(
        traj, error_jump_min=float(cfg["error_jump_min"]),
        r_jump_min=float(cfg["r_jump_min"]) if "r_jump_min" in cfg else None,
        class_jump_min=float(cfg["class_jump_min"]))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    pf.write_transitions_json(out / "transitions.json", transitions)
    print(f"transitions={len(transitions)}")
    return 0


def _hvp_cfg(cfg) -> hs.HvpConfig:
    return hs.HvpConfig(mode=cfg["hvp_mode"], fd_step=float(cfg["fd_step"]),
                        subset_size=int(cfg["hessian_subset"]) if "hessian_subset" in cfg else None,
                        seed=int(cfg.get("hessian_seed", cfg["seed"])))


def cmd_hessian(cfg) -> int:
    spec = _spec(cfg)
    train, _ = _load_data(cfg, want_test=False)
    store = _store_dir(cfg)
    rows = pf.read_trajectory_csv(_require_file(cfg, "trajectory"))
    transitions = pf.read_transitions_json(_require_file(cfg, "transitions"))
    if not transitions:
        raise ConfigError("no transitions in the report; run the anneal command "
                          "first to produce a trajectory with a detected transition")
    idx = int(cfg["transition_index"]) if "transition_index" in cfg else int(
        np.argmax([t.delta_error for t in transitions]))
    tr = transitions[idx]
    betas = [r["beta"] for r in rows]
    if tr.beta_before not in betas or tr.beta_after not in betas:
        raise ConfigError("transition betas not found in trajectory; run the "
                          "anneal command first with the same output directory")
    j = betas.index(tr.beta_before)
    cp_before = load_checkpoint(store, rows[j]["checkpoint_id"])
    cp_after = load_checkpoint(store, rows[j + 1]["checkpoint_id"])
    midpoint = 0.5 * (cp_before.params + cp_after.params)

    # spectra of the plain error at the checkpoints approaching the jump,
    # with distances measured to the bracket midpoint
    window = int(cfg["probe_window"])
    picks = list(range(max(0, j - window), min(len(rows), j + 2)))

    hcfg = _hvp_cfg(cfg)
    hess_data = train
    if hcfg.subset_size and hcfg.subset_size < len(train):
        hess_data = subset(train, hcfg.subset_size, hcfg.seed)
    reports = []
    for i in picks:
        params = load_checkpoint(store, rows[i]["checkpoint_id"]).params
        r_ref = radial_distance(params, midpoint)
        op = lambda v: hs.hvp(spec, params, v, hess_data, hcfg)
        rep = hs.lanczos_extreme(op, dim=spec.parameter_count, k=int(cfg["k"]),
                                 max_iters=int(cfg["lanczos_iters"]) if "lanczos_iters" in cfg else None,
                                 seed=hcfg.seed, tol=float(cfg["lanczos_tol"]),
                                 point_id=rows[i]["checkpoint_id"],
                                 data_subset_seed=hcfg.seed)
        reports.append((r_ref, rep))
        print(f"step={i} beta={rows[i]['beta']:.6g} r_ref={r_ref:.6g} "
              f"most_negative={rep.most_negative:.6g} top={rep.ritz_values[0]:.6g}")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    hs.write_spectrum_csv(out / "spectrum.csv", reports)
    return 0


def cmd_connect(cfg) -> int:
    spec = _spec(cfg)
    train, test = _load_data(cfg)
    store = _store_dir(cfg)
    for key in ("start", "target"):
        if key not in cfg:
            raise ConfigError(f"config key {key!r} (checkpoint id) is required "
                              f"for connect")
    start = load_checkpoint(store, cfg["start"])
    target = load_checkpoint(store, cfg["target"])
    fine = pf.AnnealConfig(
        theta_ref=target.params, beta0=float(cfg["beta0"]),
        beta_max=float(cfg["beta_max"]) if "beta_max" in cfg["_explicit"] else 1e-5,
        schedule=pf.LinearSchedule(delta_beta=float(cfg["linear_delta"])),
        policy=_policy(cfg), lr=float(cfg["lr"]), seed=int(cfg["seed"]),
        batch_size=int(cfg["batch_size"]),
        epsilon_dist=float(cfg["epsilon_dist"]) if "epsilon_dist" in cfg else None)
    traj = pf.connect(spec, start.params, target.params, train, fine,
                      test_data=test, store_dir=store)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    pf.write_trajectory_csv(out / "connect.csv", traj)
    max_err = max(r.error_train for r in traj.records)
    last = traj.records[-1]
    print(f"records={len(traj.records)} max_path_error={max_err:.6f} "
          f"final_r_ref={last.r_ref:.6g} final_beta={last.beta:.6g}")
    return 0


def cmd_toy(cfg) -> int:
    land = toy.default_landscape()
    ref = float(cfg["toy_ref"])
    bmax = float(cfg["toy_beta_max"])
    steps = int(cfg["toy_steps"])
    sched = np.linspace(0.0, bmax, steps + 1)
    res = toy.toy_anneal(land, sched, theta_ref=ref)
    desc = toy.toy_anneal_descent(land, sched, theta_ref=ref)
    beta_c, t_high, _ = toy.equal_loss_beta(land, theta_ref=ref)
    pre_min = float(res.minimizers[res.jump_index])
    beta_tilde = toy.critical_beta_1d(land, pre_min, theta_ref=ref)

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    rows = [[float(b), float(t), float(e), float(l)]
            for b, t, e, l in zip(res.betas, res.minimizers, res.errors, res.losses)]
    tables.write_csv(out / "toy_anneal.csv", ["beta", "theta_star", "error", "loss"],
                     rows)
    mech_betas = [0.0, 0.6 * beta_c, 0.95 * beta_c, 1.15 * beta_c]
    tables.write_csv(out / "toy_mechanism.csv", ["beta", "theta", "error", "loss"],
                     toy.mechanism_rows(land, mech_betas, theta_ref=ref))
    print(f"jump_beta={res.jump_beta:.6g} "
          f"jump {res.minimizers[res.jump_index]:.6g} -> "
          f"{res.minimizers[res.jump_index + 1]:.6g}")
    print(f"beta_c={beta_c:.6g} beta_tilde={beta_tilde:.6g} "
          f"descent_jump_beta={desc.jump_beta:.6g} "
          f"concave_segment=({land.concave_segment[0]:.6g},"
          f"{land.concave_segment[1]:.6g})")
    return 0


COMMANDS = {
    "train": cmd_train,
    "anneal": cmd_anneal,
    "hessian": cmd_hessian,
    "connect": cmd_connect,
    "toy": cmd_toy,
    "detect": cmd_detect,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lossland",
        description="Probe error-landscape geometry with off-center L2 annealing")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="key=value experiment file")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--subset", type=int, help="train on a seeded subset of n samples")
    parser.add_argument("--threads", type=int, help="cap BLAS threads (1 = reproducible)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--store", help="checkpoint store directory")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
        for key in ("seed", "subset", "threads", "out", "store"):
            value = getattr(args, key)
            if value is not None:
                cfg[key] = str(value)
                cfg["_explicit"].add(key)
        if "threads" in cfg and cfg["threads"]:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=int(cfg["threads"])):
                return COMMANDS[args.command](cfg)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DataFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
