"""Nonequilibrium dynamics of the SYK model on a two-time Keldysh lattice."""

import os as _os

# SYKQUENCH_THREADS caps the BLAS thread pool; it must be read before numpy
# loads its BLAS.
if _os.environ.get("SYKQUENCH_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["SYKQUENCH_THREADS"])

from .grid import (ContourGreen, DomainError, InsufficientWindowError,
                   KeldyshSlice, TimeLattice, corner_slice, derive_components,
                   read_snapshot, wigner_slice, write_snapshot)
from .equilibrium import (EquilibriumParams, EquilibriumState,
                          NonConvergenceError, lay_initial_condition,
                          solve_equilibrium)
from .kb import DivergenceError
from .quench import (BathSpec, QuenchConfig, assemble_self_energy,
                     evolve_quench, kb_residual)

__version__ = "0.1.0"
