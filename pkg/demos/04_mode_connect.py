"""Connect two independently trained minima along the valley floor.

Two models trained from different seeds land in different places in
parameter space.  Pointing the off-center pull of one model at the other and
raising beta only to a few millionths walks the first model all the way to
the second while the error stays within noise of its minimum value: the two
minima are connected by a flat path, and the walk follows it instead of
cutting through the high-error interior.

Uses a 10k subset; expect about ten minutes.

Run:  MNIST_DIR=/root/data/mnist python demos/04_mode_connect.py
"""

import os
import time
from pathlib import Path

import numpy as np

from lossland.mnist import load_idx, subset
from lossland.net import NetworkSpec, init_params, radial_distance
from lossland.optim import ConvergencePolicy, train_to_convergence
from lossland.pathfinder import (AnnealConfig, LinearSchedule,
                                 RegularizedObjective, connect,
                                 write_trajectory_csv)

MNIST = Path(os.environ.get("MNIST_DIR", "/root/data/mnist"))
OUT = Path(os.environ.get("OUT_DIR", "demo_out"))
OUT.mkdir(parents=True, exist_ok=True)

train = load_idx(MNIST / "train-images-idx3-ubyte", MNIST / "train-labels-idx1-ubyte")
train = subset(train, 10_000, seed=1)
spec = NetworkSpec((784, 128, 128, 10))
policy = ConvergencePolicy(patience_epochs=5, max_epochs=500)

minima = []
for seed in (1, 2):
    print(f"training minimum from seed {seed} ...")
    t0 = time.time()
    res = train_to_convergence(RegularizedObjective(spec, train, None, 0.0),
                               init_params(spec, seed), policy,
                               lr=0.0015, seed=seed, batch_size=64)
    print(f"  {res.epochs} epochs, {time.time() - t0:.0f}s, loss {res.loss:.5f}")
    minima.append(res.params)

gap = radial_distance(minima[0], minima[1])
print(f"\ndistance between the minima: {gap:.2f}")

fine = AnnealConfig(theta_ref=minima[1], beta0=0.0, beta_max=1e-5,
                    schedule=LinearSchedule(delta_beta=2e-7),
                    policy=policy, lr=0.0015, seed=1, batch_size=64)
t0 = time.time()
traj = connect(spec, minima[0], minima[1], train, fine)
print(f"walk finished in {(time.time() - t0) / 60:.1f} min, "
      f"{len(traj.records)} steps")

errors = [r.error_train for r in traj.records]
print(f"max error along the path: {max(errors):.4f} (ln 10 = {np.log(10):.3f})")
print(f"final distance to target: {traj.records[-1].r_ref:.3f} "
      f"at beta = {traj.records[-1].beta:.2e}")
write_trajectory_csv(OUT / "connect.csv", traj)
print(f"wrote {OUT / 'connect.csv'}")
