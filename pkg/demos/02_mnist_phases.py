"""Train an MNIST classifier, then anneal it toward the origin.

As the pull strength climbs, the converged model steps down through a
hierarchy of accuracy basins: the error rises in sharp jumps, each jump
parks at a reproducible distance from the origin, and the per-digit accuracy
shows which digits each jump forgets.  The run ends at the trivial model
(all parameters near zero, error = ln 10).

Uses a 10k-sample subset to stay desk-sized; expect about twenty minutes.

Run:  MNIST_DIR=/root/data/mnist python demos/02_mnist_phases.py
"""

import os
import time
from pathlib import Path

import numpy as np

from lossland.mnist import load_idx, per_class_accuracy, subset
from lossland.net import NetworkSpec, init_params
from lossland.optim import ConvergencePolicy, train_to_convergence
from lossland.pathfinder import (AnnealConfig, GeometricSchedule,
                                 RegularizedObjective, anneal,
                                 detect_transitions, write_trajectory_csv,
                                 write_transitions_json)

MNIST = Path(os.environ.get("MNIST_DIR", "/root/data/mnist"))
OUT = Path(os.environ.get("OUT_DIR", "demo_out"))
OUT.mkdir(parents=True, exist_ok=True)

train = load_idx(MNIST / "train-images-idx3-ubyte", MNIST / "train-labels-idx1-ubyte")
test = load_idx(MNIST / "t10k-images-idx3-ubyte", MNIST / "t10k-labels-idx1-ubyte",
                split="test")
train = subset(train, 10_000, seed=1)

spec = NetworkSpec((784, 128, 128, 10))
policy = ConvergencePolicy(patience_epochs=5, max_epochs=500)

print("training the starting model (beta = 0) ...")
t0 = time.time()
result = train_to_convergence(RegularizedObjective(spec, train, None, 0.0),
                              init_params(spec, seed=1), policy,
                              lr=0.0015, seed=1, batch_size=64)
acc = per_class_accuracy(spec, result.params, test)
print(f"  {result.epochs} epochs, {time.time() - t0:.0f}s, "
      f"test accuracy {acc.overall:.4f}")

config = AnnealConfig(theta_ref=None, beta0=0.0, beta_max=1.0,
                      schedule=GeometricSchedule(first=1e-6, factor=1.15),
                      policy=policy, lr=0.0015, seed=1, batch_size=64)
print("annealing toward the origin ...")
t0 = time.time()
traj = anneal(spec, result.params, train, config, test_data=test,
              store_dir=OUT / "store")
print(f"  {len(traj.records)} converged steps in {(time.time() - t0) / 60:.1f} min")

write_trajectory_csv(OUT / "trajectory.csv", traj)
transitions = detect_transitions(traj)
write_transitions_json(OUT / "transitions.json", transitions)

print(f"\nfinal error {traj.records[-1].error_train:.4f} "
      f"(ln 10 = {np.log(10):.4f}), final |theta| {traj.records[-1].r0:.3f}")
print(f"{len(transitions)} detected transitions:")
for i, t in enumerate(transitions, start=1):
    print(f"  T{i}: beta {t.beta_before:.3e} -> {t.beta_after:.3e}, "
          f"error +{t.delta_error:.3f}, digits affected {t.affected_classes}")
