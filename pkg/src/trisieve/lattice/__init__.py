"""Lattice side: bases, reduction, the exact SVP oracle, and the 3-tuple sieve."""

from .basis import (
    BasisParseError,
    LatticeBasis,
    LatticeVector,
    RankDeficientError,
    bareiss_det,
    format_basis,
    is_lattice_vector,
    load_basis,
    parse_basis,
    random_basis,
    save_basis,
)
from .enum import enumerate_lambda1
from .lll import gso, is_lll_reduced, lll_reduce
from .sieve import (
    LatticeSieveConfig,
    SamplingError,
    SieveState,
    SvpResult,
    sample_annulus_vectors,
    sieve_iteration,
    solve_svp,
)
