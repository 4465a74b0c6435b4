"""Probability metrics, law-invariant risk functionals and their
quantitative robustness checks on the real line."""

from .distributions import (
    Dirac,
    Distribution,
    EmpiricalDistribution,
    GaugeFunction,
    Mixture,
    Normal,
    Pareto,
    Uniform,
    contaminate,
    empirical_from,
    is_admissible,
    moment,
)
from .errors import BracketError, DomainError, InfeasibleError
from .metrics import (
    MetricValue,
    bl_bracket,
    d_phi,
    fortet_mourier,
    kantorovich,
    kolmogorov,
    levy,
    prokhorov,
    weighted_kolmogorov,
)
from .numerics import RngStream
from .risk import LipschitzCertificate, Loss, RiskFunctionalSpec, Utility, certificate, evaluate
from .robustness import (
    estimator_law,
    iqr_scan,
    lipschitz_suite,
    paired_lipschitz_check,
    robustness_gap,
)

__version__ = "0.1.0"
