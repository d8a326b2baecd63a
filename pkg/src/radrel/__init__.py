"""Radiation reliability toolkit for SRAM-based MPSoCs.

Readback analysis, cross-section statistics, field projections and a Monte
Carlo soft-error simulator, driven by bundled device profiles.
"""
from .units import FitRate, Fluence, Flux, MeanTimeTo, NoFailuresObserved, fit_from_cross_section, mttf_from_fit
from .stats import CampaignLog, CrossSectionEstimate, ErrorRateBreakdown, estimate_cross_section, garwood_interval
from .readback import MemoryGeometry, ReadbackCampaign, ShapeDistribution, ShapeSignature, UpsetBit, UpsetEvent
from .projection import Deployment, Environment, PRESETS, mttf_table, project, ratio_report
from .profiles import DeviceProfile, load_profile
from .sim import MitigationConfig, run_failure_campaign, run_scrub_race

__version__ = "0.1.0"

__all__ = [
    "CampaignLog", "CrossSectionEstimate", "Deployment", "DeviceProfile", "Environment", "ErrorRateBreakdown",
    "FitRate", "Fluence", "Flux", "MeanTimeTo", "MemoryGeometry", "MitigationConfig", "NoFailuresObserved",
    "PRESETS", "ReadbackCampaign", "ShapeDistribution", "ShapeSignature", "UpsetBit", "UpsetEvent",
    "estimate_cross_section", "fit_from_cross_section", "garwood_interval", "load_profile", "mttf_from_fit",
    "mttf_table", "project", "ratio_report", "run_failure_campaign", "run_scrub_race",
]
