"""Time-dependent PDE solving on sinusoidal implicit neural spatial fields.

The solution field of a PDE is stored as the weights of a small sine-MLP;
every time step advances those weights by minimizing the objective of a
classical time integrator over stochastic collocation batches.  Matching
deterministic grid solvers are included for memory-matched comparisons.
"""

from .autodiff import Jet, Tape, backward, jet_linear, jet_sine
from .field import RecordedField, SirenField, init_siren, load_checkpoint, save_checkpoint
from .optim import AdamState, PlateauSchedule, SolverAbort, adam_step, solve
from .sampling import Box, Circle, HalfPlane, SampleBatch, derive_rng, eval_grid

__version__ = "0.1.0"
