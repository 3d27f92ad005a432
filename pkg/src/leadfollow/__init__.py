"""Leader-follower swarms: finite agents, mean-field and kinetic limits, optimal control."""

from .errors import ConfigError, DomainError, InputError, LeadFollowError, NumericalError
from .kernels import KernelSpec, Kernels, certify_growth, eval_g, eval_h, load_table
from .measures import WeightedMeasure, chi_distance, convolve, empirical_from_followers, wasserstein1
from .microdynamics import ControlSignal, SwarmState, Trajectory, integrate, project_ball
from .meanfield import box_sampler, convergence_study, solve_meanfield, stability_experiment
from .optcontrol import CostSpec, evaluate_cost, optimize, solve_adjoint, control_gradient

__version__ = "0.1.0"
