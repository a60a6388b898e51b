"""Boundary spectral data and Isozaki-type Fourier recovery for -Laplace + q on boxes."""

__version__ = "0.1.0"

from .geometry import GridSpec, Grid, BoundaryMesh, build_grid, boundary_mesh
from .potential import PotentialSpec, PotentialField, sample, class_check
from .forward import (
    DiscreteOperator,
    BoundarySpectralData,
    assemble,
    eigs,
    neumann_trace,
    make_bsd,
    align_bsd,
    read_bsd,
    write_bsd,
)
from .probe import IsozakiProbe, make_probe, eval_f, product_defect
from .scattering import solve_u, isozaki_S, series_S_diff, series_neumann_diff
from .reconstruct import (
    FourierSamples,
    ReconstructionResult,
    estimate_lambda,
    hypothesis_sum,
    fourier_sample,
    choose_cutoff,
    invert,
    h_minus1_norm,
)

__all__ = [
    "GridSpec",
    "Grid",
    "BoundaryMesh",
    "build_grid",
    "boundary_mesh",
    "PotentialSpec",
    "PotentialField",
    "sample",
    "class_check",
    "DiscreteOperator",
    "BoundarySpectralData",
    "assemble",
    "eigs",
    "neumann_trace",
    "make_bsd",
    "align_bsd",
    "read_bsd",
    "write_bsd",
    "IsozakiProbe",
    "make_probe",
    "eval_f",
    "product_defect",
    "solve_u",
    "isozaki_S",
    "series_S_diff",
    "series_neumann_diff",
    "FourierSamples",
    "ReconstructionResult",
    "estimate_lambda",
    "hypothesis_sum",
    "fourier_sample",
    "choose_cutoff",
    "invert",
    "h_minus1_norm",
]
