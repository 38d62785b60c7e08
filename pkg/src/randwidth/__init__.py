"""Mean width of randomly perturbed random polytopes, estimated by simulation."""

__version__ = "0.1.0"

from .randsrc import (  # noqa: E402
    IsotropicModel,
    Perturbation,
    PerturbationLaw,
    PointCloud,
    RngState,
    make_rng,
    sample_isotropic,
    sample_perturbation,
)
from .polytope import (  # noqa: E402
    WidthEstimate,
    centroid_mean_width,
    centroid_support,
    f_estimate,
    mean_width_mc,
    support,
)
from .orlicz import OrliczFn, empirical_orlicz, equivalence_check, luxemburg_norm, orlicz_eval  # noqa: E402

__all__ = [
    "IsotropicModel", "Perturbation", "PerturbationLaw", "PointCloud", "RngState", "make_rng",
    "sample_isotropic", "sample_perturbation", "WidthEstimate", "centroid_mean_width", "centroid_support",
    "f_estimate", "mean_width_mc", "support", "OrliczFn", "empirical_orlicz", "equivalence_check",
    "luxemburg_norm", "orlicz_eval",
]
