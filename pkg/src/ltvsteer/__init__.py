"""Finite-horizon steering of transition matrices and covariances for linear
time-varying systems via Riccati-equation feedback."""
from .errors import *  # noqa: F401,F403
from .factorization import FiveFactor, ballantine5, interleaved5
from .gramian import Partition, ctrl_gramian, find_partition, reach_gramian, stm
from .harness import SteeringReport, Trajectory, simulate, verify
from .riccati import (RdeSolution, exists_norm, exists_symmetric, exists_sympart, solve_rde,
                      stm_closed_form)
from .synthesis import (GainSchedule, PhiTarget, SigmaTarget, membership_phi, membership_sigma,
                        steer_phi, synth_phi_five_segment, synth_phi_single_rde, synth_sigma,
                        synth_sigma_controllable)
from .system import LtvSystem

__version__ = "0.1.0"
