"""Blind interference alignment with reconfigurable antennas.

Schemes for broadcast with groupcast messages, unicast with side
information over distributed transmitters, and a MapReduce shuffle built on
the latter. The package also has exact DoF formulas, noiseless
verification and a Monte Carlo rate estimator.
"""

from .bcgm import SchemeParams, build_scheme, rank_diagnostics, verify_alignment
from .errors import BiaError
from .mapreduce import build_job, map_phase, oracle_check, reduce_phase, shuffle_phase
from .metrics import dof_bcgm, dof_mapreduce, dof_usi, estimate_rate_curve
from .simulation import simulate_bcgm, simulate_usi
from .usi import build_usi_scheme

__version__ = "0.1.0"

__all__ = [
    "BiaError",
    "SchemeParams",
    "build_scheme",
    "build_usi_scheme",
    "build_job",
    "dof_bcgm",
    "dof_mapreduce",
    "dof_usi",
    "estimate_rate_curve",
    "map_phase",
    "oracle_check",
    "rank_diagnostics",
    "reduce_phase",
    "shuffle_phase",
    "simulate_bcgm",
    "simulate_usi",
    "verify_alignment",
]
