"""Strain-minimising stream surfaces in divergence-free 3D vector fields."""
from .field import AnalyticField, BoxDomain, GridField, LinearField, VectorField, catalogue, from_spec
from .curves import SeedCurve
from .energies import EnergyReport
from .surface import StreamSurfaceMesh, integrate_surface
from .optimize import OptimizerConfig, optimise_stream_surface
from .pipeline import PipelineConfig, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "AnalyticField",
    "BoxDomain",
    "EnergyReport",
    "GridField",
    "LinearField",
    "OptimizerConfig",
    "PipelineConfig",
    "SeedCurve",
    "StreamSurfaceMesh",
    "VectorField",
    "catalogue",
    "from_spec",
    "integrate_surface",
    "optimise_stream_surface",
    "run_pipeline",
]
