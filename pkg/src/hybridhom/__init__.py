"""Desk-scale simulator and analyzer for heralded-photon / quantum-dot
two-photon interference experiments.

The package generates picosecond time tags from models of a warm-atom
photon-pair source and a quantum-dot single-photon source, mixes them on a
beamsplitter, applies detector effects, builds coincidence histograms and
fits correlation models to them. An analytic multiphoton model of the
heralded three-fold coincidence is provided for cross-checks.
"""

from hybridhom.errors import (
    ConfigError,
    ContractError,
    FitError,
    ParameterError,
    RangeError,
    RankDeficiencyError,
    TagFileError,
    UndefinedRatioError,
)
from hybridhom.tags import Origin, TagStream

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "FitError",
    "Origin",
    "ParameterError",
    "RangeError",
    "RankDeficiencyError",
    "TagFileError",
    "TagStream",
    "UndefinedRatioError",
]
