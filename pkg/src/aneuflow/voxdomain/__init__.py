"""Voxel masks, boundary-role labels and signed distance fields."""

from .grid import DomainError, Label, VoxelGrid
from .labels import CellLabelGrid, Opening, check_labels, detect_openings, label_cells, n_patches, select_inlet
from .nifti import encode_nifti, nifti_from_bytes, read_nifti, read_sdf, write_nifti, write_sdf
from .refine import LabeledDomain, RefinementError, build_domain, refinement_series
from .voxelize import point_triangle_distance, signed_distance, unsigned_distance, voxelize

__all__ = [
    "DomainError", "Label", "VoxelGrid", "CellLabelGrid", "Opening", "check_labels", "detect_openings",
    "label_cells", "n_patches", "select_inlet", "encode_nifti", "nifti_from_bytes", "read_nifti", "read_sdf", "write_nifti", "write_sdf",
    "LabeledDomain", "RefinementError", "build_domain", "refinement_series", "point_triangle_distance",
    "signed_distance", "unsigned_distance", "voxelize",
]
