"""Fast k-means seeding via norm-proposal rejection sampling.

The library side exposes dataset handling, the weighted sampler tree, the
ANN index, the seeding algorithms, and the scaling-analysis toolkit; the
`qkmeans` console script drives them end to end.
"""

from .analysis import (
    GeomParams,
    PowerLawFit,
    assign,
    beta_curve,
    cost,
    fit_power_law,
    geom_params,
    lloyd,
    max_renyi,
    mle_id,
)
from .ann import AnnIndex
from .dataset import (
    Dataset,
    JlOptions,
    SyntheticSpec,
    gen_manifold,
    inject_noise,
    load,
    preprocess,
    save,
)
from .sampler_tree import SamplerTree
from .seeding import (
    ArrayProposal,
    MixtureProposal,
    RejectionConfig,
    SeedingResult,
    iteration_cap,
    kappa_masses,
    kmeanspp_exact,
    oversampling_tau,
    qkmeans,
    reject_sample,
    rho_delta_reference,
    sample_proposal,
    uniform_seeding,
)

__version__ = "0.1.0"

__all__ = [
    "AnnIndex",
    "ArrayProposal",
    "Dataset",
    "GeomParams",
    "JlOptions",
    "MixtureProposal",
    "PowerLawFit",
    "RejectionConfig",
    "SamplerTree",
    "SeedingResult",
    "SyntheticSpec",
    "assign",
    "beta_curve",
    "cost",
    "fit_power_law",
    "gen_manifold",
    "geom_params",
    "inject_noise",
    "iteration_cap",
    "kappa_masses",
    "kmeanspp_exact",
    "lloyd",
    "load",
    "max_renyi",
    "mle_id",
    "oversampling_tau",
    "preprocess",
    "qkmeans",
    "reject_sample",
    "rho_delta_reference",
    "sample_proposal",
    "save",
    "uniform_seeding",
]
