"""Probe the error Hessian at the checkpoints straddling a transition.

Takes the trajectory produced by demos/02_mnist_phases.py, picks its most
pronounced transition, and computes Lanczos spectra of the *unregularized*
error at the converged checkpoints approaching the jump.  Distances are
measured to the midpoint of the two bracketing checkpoints, the natural
stand-in for the boundary point the model jumps across.  Far from the jump
the spectrum floor sits at zero; at the checkpoint pressed against the
boundary the most negative eigenvalue dives below zero.  That negative
direction is what the quadratic pull turns into a saddle of the loss, and
it is the mechanism behind every first-order jump in the trajectory.

Run after demo 02:  python demos/03_saddle_spectrum.py
"""

import os
from pathlib import Path

from lossland.hessian import HvpConfig, hvp, lanczos_extreme, write_spectrum_csv
from lossland.mnist import load_idx, subset
from lossland.net import NetworkSpec, radial_distance
from lossland.pathfinder import read_trajectory_csv, read_transitions_json
from lossland.store import load_checkpoint

MNIST = Path(os.environ.get("MNIST_DIR", "/root/data/mnist"))
OUT = Path(os.environ.get("OUT_DIR", "demo_out"))
STORE = OUT / "store"

train = load_idx(MNIST / "train-images-idx3-ubyte", MNIST / "train-labels-idx1-ubyte")
train = subset(train, 10_000, seed=1)
spec = NetworkSpec((784, 128, 128, 10))

rows = read_trajectory_csv(OUT / "trajectory.csv")
transitions = read_transitions_json(OUT / "transitions.json")
tr = max(transitions, key=lambda t: t.delta_error)
print(f"probing the transition at beta {tr.beta_before:.3e} -> {tr.beta_after:.3e}")

betas = [r["beta"] for r in rows]
j = betas.index(tr.beta_before)
before = load_checkpoint(STORE, rows[j]["checkpoint_id"])
after = load_checkpoint(STORE, rows[j + 1]["checkpoint_id"])
midpoint = 0.5 * (before.params + after.params)

hcfg = HvpConfig(mode="exact", seed=1)
reports = []
for i in (max(0, j - 10), max(0, j - 3), j):
    params = load_checkpoint(STORE, rows[i]["checkpoint_id"]).params
    r_ref = radial_distance(params, midpoint)
    rep = lanczos_extreme(lambda v: hvp(spec, params, v, train, hcfg),
                          dim=spec.parameter_count, k=50, seed=1,
                          point_id=rows[i]["checkpoint_id"])
    reports.append((r_ref, rep))
    print(f"  step {i}: r_ref={r_ref:8.3f}  top={rep.ritz_values[0]:9.4f}  "
          f"most_negative={rep.most_negative:.6f}")

write_spectrum_csv(OUT / "spectrum.csv", reports)
print(f"wrote {OUT / 'spectrum.csv'}")
