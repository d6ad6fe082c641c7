"""Exception types raised across the package.

The CLI maps these onto exit codes, so keep the hierarchy flat.
"""


class SampleDefectError(Exception):
    """Base class for every error raised by sampledefect."""


class PopulationError(SampleDefectError, ValueError):
    """Malformed population or membership input."""


class DegenerateStatisticError(SampleDefectError, ValueError):
    """A statistic is undefined for the given input (e.g. constant R or Y)."""


class InfeasibleTargetError(SampleDefectError, ValueError):
    """The requested defect correlation cannot be attained at this n."""


class ConfigError(SampleDefectError, ValueError):
    """Invalid experiment or sampler configuration."""
