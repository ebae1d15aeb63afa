"""Loss-landscape exploration toolkit for small fully connected networks.

Train a sigmoid MLP, then drag it through parameter space with an off-center
L2 pull: annealing the pull strength traces trajectories whose
discontinuities are first-order transitions between accuracy basins.
Hessian-vector products plus Lanczos expose the saddle points behind those
transitions, and a closed-form 1-D landscape provides the brute-force oracle
for the whole mechanism.
"""

from .errors import ConfigError, DataFormatError, NumericsError
from .net import (Activation, Batch, NetworkSpec, cross_entropy, forward,
                  gradient, init_params, radial_distance)
from .optim import AdamState, ConvergencePolicy, TrainResult, adam_step, train_to_convergence
from .mnist import Dataset, PerClassAccuracy, load_idx, per_class_accuracy, subset
from .pathfinder import (AnnealConfig, GeometricSchedule, LinearSchedule,
                         RegularizedObjective, Trajectory, TrajectoryRecord,
                         Transition, anneal, connect, critical_beta,
                         detect_transitions, read_trajectory_csv,
                         regularized_loss, write_trajectory_csv,
                         write_transitions_json)
from .hessian import HvpConfig, SpectrumReport, fd_hvp, hvp, hvp_regularized, lanczos_extreme
from .toyland import (ToyAnnealResult, ToyLandscape, default_landscape,
                      equal_loss_beta, toy_anneal, toy_anneal_descent,
                      toy_error, toy_global_minimizer)
from .store import Checkpoint, checkpoint_id, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
