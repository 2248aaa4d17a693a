"""Multi-frequency antenna placement: exact, annealing and adiabatic solvers."""

from .instance import (GeometryParams, Instance, QubitLayout, assignment_to_bits, bits_to_assignment, cost,
                       cost_many, feasible_space_size, generate_instance, is_feasible, is_feasible_bits,
                       load_instance, optimal_k, save_instance)
from .metrics import Metrics, delta_alpha
from .qubo import QuboModel, default_penalty, max_norm, normalized, qubo_value, to_qubo
from .exact import FeasibleBasis, SolveResult, solve_branch_and_bound, solve_brute_force
from .qsim import (FeasibleStateVector, QaaSchedule, SampleCounts, StateVector, prepare_feasible_superposition,
                   run_qaa_app, run_qaa_basic, sample_counts)
from .anneal import AnnealConfig, AnnealResult, custom_sa_run, sa_run
from .split import ClusterPartition, spectral_cluster, split_solve

__version__ = "0.1.0"
