"""Selection-bias diagnostics for nonprobability samples.

Data-defect correlation, effective sample size and required z; replicated
sampling experiments showing large biased samples miss the truth; and
propensity weighting to undo the bias.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DegenerateStatisticError,
    InfeasibleTargetError,
    PopulationError,
    SampleDefectError,
)
from .metrics import (  # noqa: E402
    DefectDiagnostics,
    defect_correlation,
    diagnose,
    effective_sample_size,
    error_decomposition,
    relative_reduction,
    required_z,
)
from .population import (  # noqa: E402
    Population,
    SampleMembership,
    Unit,
    load_population,
    population_stats,
    sample_stats,
)

__all__ = [
    "ConfigError",
    "DefectDiagnostics",
    "DegenerateStatisticError",
    "InfeasibleTargetError",
    "Population",
    "PopulationError",
    "SampleDefectError",
    "SampleMembership",
    "Unit",
    "defect_correlation",
    "diagnose",
    "effective_sample_size",
    "error_decomposition",
    "load_population",
    "population_stats",
    "relative_reduction",
    "required_z",
    "sample_stats",
]
