"""Haar wavelet estimation of expected persistence diagrams under optimal partial transport."""

from .geometry import CellIndex, DomainGeometry, from_unit_square, strip_index, to_unit_square
from .homology import VietorisRipsPersistence, rips_persistence
from .measures import (
    DiagramFormatError,
    EmpiricalMean,
    PersistenceMeasure,
    empirical_mean,
    read_diagram,
    read_diagrams,
    total_persistence,
    write_diagram,
)
from .samplers import SamplerSpec, sample_cloud, sample_clouds
from .transport import TransportPlan, brute_force_ot, multiscale_upper_bound, ot_distance
from .wavelet import HaarDensityEstimator, HaarIndex, ThresholdRule, bin_measure, binning_cost

__version__ = "0.1.0"

__all__ = [
    "CellIndex", "DomainGeometry", "from_unit_square", "strip_index", "to_unit_square",
    "VietorisRipsPersistence", "rips_persistence",
    "DiagramFormatError", "EmpiricalMean", "PersistenceMeasure", "empirical_mean",
    "read_diagram", "read_diagrams", "total_persistence", "write_diagram",
    "SamplerSpec", "sample_cloud", "sample_clouds",
    "TransportPlan", "brute_force_ot", "multiscale_upper_bound", "ot_distance",
    "HaarDensityEstimator", "HaarIndex", "ThresholdRule", "bin_measure", "binning_cost",
]
