"""Named numerical tolerances shared by every module and test."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    structural: float = 1e-10
    spectral: float = 1e-8
    iterative: float = 1e-6
    pinv_cutoff: float = 1e-12
    rank_cutoff: float = 1e-12
    max_condition: float = 1e12
    divergence_loss: float = 1e12


TOL = Tolerances()

DEFAULT_GAMMA = 0.9
SYNTHETIC_STEP_SIZE = 0.08
FOUR_ROOM_STEP_SIZE = 5e-3
FOUR_ROOM_EPSILON = 0.8
