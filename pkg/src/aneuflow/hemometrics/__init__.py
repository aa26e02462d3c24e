"""Hemodynamic summaries, region field tables and corpus distributions."""

from .distributions import QUANTITIES, distribution_summary, flow_means, histogram_csv, write_histogram_svg, write_histograms
from .quantities import (
    CaseSummary,
    MetricError,
    mass_flux,
    max_velocity,
    normalized_dp,
    normalized_pressure,
    reynolds,
    speed,
    summarize,
)
from .regions import COLUMNS, REGIONS, RegionFields, extract_region_fields

__all__ = [
    "QUANTITIES", "distribution_summary", "flow_means", "histogram_csv", "write_histogram_svg", "write_histograms",
    "CaseSummary", "MetricError", "mass_flux", "max_velocity", "normalized_dp", "normalized_pressure", "reynolds",
    "speed", "summarize", "COLUMNS", "REGIONS", "RegionFields", "extract_region_fields",
]
