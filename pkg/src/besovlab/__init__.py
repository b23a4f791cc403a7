"""Desk-scale laboratory for dyadic spectral analysis of Dirichlet
Schrodinger operators -Delta + V on masked uniform lattices.

The package builds grids on arbitrary open subsets of R^n (n <= 3),
assembles the stencil operator, decomposes functions into smooth dyadic
spectral shells, and measures Besov / Sobolev / Lorentz norms together
with a battery of quantitative checks (Bernstein bounds, heat kernel
Gaussian bounds, duality and norm-equivalence constants) that are meant
to stay stable under grid refinement.
"""

from .errors import (
    AssumptionViolated,
    BesovLabError,
    BudgetExceeded,
    CheckFailed,
    ChebyshevToleranceUnmet,
    ComplexPotential,
    ConfigInvalid,
    DenseCapExceeded,
    EmptyDomain,
    GridMismatch,
    IncompatibleSpacing,
    IndexConstraintViolated,
    InvalidExponent,
    InvalidSpectrumBounds,
    MissingEigendata,
    NegativeShiftedEigenvalue,
    NegativeSpectrumComponent,
    SolverFailure,
    UnsupportedDimension,
    ZeroEigenvaluePresent,
)
from .geometry import (
    Ball,
    Box,
    Complement,
    DomainSpec,
    Grid,
    GridFunction,
    HalfSpace,
    Intersection,
    Predicate,
    Union,
    ball,
    box,
    build_grid,
    interval,
    lp_norm,
    pairing,
    zero_extend,
)
from .dyadic import DyadicSystem, build_system, bump_primitive, chi, second_system
from .operators import (
    SpectralOperator,
    assemble_laplacian,
    assemble_schrodinger,
    dirichlet_energy,
    eigendecompose,
    load_operator,
    quadratic_form,
    save_operator,
    single_eigenvector,
)
from .potential import (
    KatoReport,
    check_smallness,
    decompose,
    form_bound,
    hardy_certificate,
    kato_norm,
    potential_from_expression,
)
from .calculus import (
    KernelMatrix,
    OperatorFunction,
    apply_symbol,
    chebyshev_coefficients,
    dyadic_block,
    fat_block,
    heat,
    heat_kernel,
    kernel,
    mixed_opnorm,
    opnorm,
    power,
    psi_block,
    suite_symbols,
)
from .norms import (
    RearrangementProfile,
    besov_norm,
    block_lp_norms,
    lorentz_norm,
    psi_lp_norms,
    rearrangement_profile,
    sobolev_norm,
    test_seminorms,
)
from .config import RunConfig, load_config, make_config
from .verify import (
    CHECKS,
    FunctionFamily,
    Stage,
    VerifyReport,
    build_stage,
    build_stages,
    check_bernstein,
    check_duality,
    check_embeddings,
    check_equivalence_AV_A0,
    check_heat_gaussian,
    check_lifting,
    check_lorentz_bernstein,
    check_partition_independence,
    check_resolution_identity,
    check_subspace_characterization,
)

__version__ = "0.1.0"
