"""Walk through the 1-D jump mechanism with the closed-form landscape.

The error curve is a smooth well at theta = 2.  Adding beta * theta^2 bends
the loss: for small beta the minimum drifts gently toward the origin, but at
a critical strength a second, low-norm minimum takes over and the minimizer
jumps across the band where the loss curve is concave.  Everything below is
exact (grid oracle plus bisection), so the numbers here are the ground truth
the network-scale experiments are compared against.

Run:  python demos/01_toy_mechanism.py
"""

import numpy as np

from lossland.toyland import (critical_beta_1d, default_landscape, equal_loss_beta,
                              toy_anneal, toy_anneal_descent)

land = default_landscape()
print(f"domain: {land.domain}")
print(f"concave segment the jump crosses: ({land.concave_segment[0]:.4f}, "
      f"{land.concave_segment[1]:.4f})")

# exact annealing: global minimizer per beta
schedule = np.linspace(0.0, 0.6, 301)
oracle = toy_anneal(land, schedule)
j = oracle.jump_index
print(f"\noracle sweep: minimizer jumps at beta = {oracle.jump_beta:.4f}")
print(f"  {oracle.minimizers[j]:.4f} -> {oracle.minimizers[j + 1]:.4f} "
      f"(error {oracle.errors[j]:.4f} -> {oracle.errors[j + 1]:.4f})")
print(f"  loss is continuous there: {oracle.losses[j]:.6f} -> "
      f"{oracle.losses[j + 1]:.6f}")

# the equal-loss strength, located by bisection to machine precision
beta_c, t_high, t_low = equal_loss_beta(land)
print(f"\nequal-loss beta_c = {beta_c:.6f} (minima at {t_high:.4f} and {t_low:.4f})")

# the slope-based estimate evaluated at the pre-jump minimizer
beta_tilde = critical_beta_1d(land, float(oracle.minimizers[j]))
print(f"slope estimate beta_tilde = {beta_tilde:.6f} (<= beta_c as predicted)")

# warm-started gradient descent lags behind: it clings to the old minimum
descent = toy_anneal_descent(land, schedule)
print(f"warm-started descent jumps later, at beta = {descent.jump_beta:.4f} "
      f"(hysteresis)")
