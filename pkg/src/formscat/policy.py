"""Central numeric policy.

Every tolerance used anywhere in the package lives in this one record so
that numerical decisions are auditable and overridable in a single place.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class NumericPolicy:
    # Linear solves
    pivot_rtol: float = 1e-14          # pivot below pivot_rtol * max|A| counts as singular
    solve_residual_rtol: float = 1e-10  # ||Ax-b|| <= rtol * (||A||_1 ||x|| + ||b||)

    # Rayleigh-quotient extremes (power / inverse iteration)
    rayleigh_rtol: float = 1e-8
    rayleigh_max_iters: int = 10_000

    # Dense cross-checks are only attempted up to this dimension
    dense_cap: int = 500

    # Structural checks
    hermitian_atol: float = 1e-14
    mesh_measure_rtol: float = 1e-12

    # Nondegeneracy: inf-sup constant below this fraction of the form norm
    # is treated as a failure of the lower bound
    nondegeneracy_rtol: float = 1e-12


DEFAULT_POLICY = NumericPolicy()
