"""Parametric vessel surfaces and synthetic sac deformations."""

from .build import (
    Centerline,
    SweepError,
    box_mesh,
    build_vessel,
    icosphere,
    straight_centerline,
    sweep_tube,
    vessel_tree,
    y_bifurcation,
)
from .deform import DeformationSpec, apply_sac_offset, sample_deformations
from .mesh import (
    WALL_TAG,
    MeshError,
    MeshRepairError,
    SelfIntersectionError,
    TriMesh,
    boundary_loops,
    check_and_repair,
    is_closed_manifold,
    mesh_volume,
    self_intersecting_pairs,
    smooth,
    taubin_smooth,
    volume_change_rate,
)
from .stl import read_stl, stl_bytes, stl_from_bytes, write_stl

__all__ = [
    "Centerline", "SweepError", "box_mesh", "build_vessel", "icosphere", "straight_centerline",
    "sweep_tube", "vessel_tree", "y_bifurcation", "DeformationSpec", "apply_sac_offset",
    "sample_deformations", "WALL_TAG", "MeshError", "MeshRepairError", "SelfIntersectionError",
    "TriMesh", "boundary_loops", "check_and_repair", "is_closed_manifold", "mesh_volume",
    "self_intersecting_pairs", "smooth", "taubin_smooth", "volume_change_rate", "read_stl", "stl_bytes", "stl_from_bytes", "write_stl",
]
