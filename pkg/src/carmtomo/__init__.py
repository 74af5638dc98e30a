"""carmtomo: C-arm digital tomosynthesis simulation and reconstruction."""

__version__ = "0.1.0"

from .data import INTENSITY, LINE_INTEGRAL, ProjectionStack, VoxelGrid, VoxelVolume
from .geometry import CArmGeometry, view_angles
from .phantom import (Ellipsoid, EllipsoidPhantom, forward_project_analytic, kidney_phantom,
                      sphere_phantom, to_intensity, voxelize)
from .projector import RayDrivenProjector, backproject_pdm, forward_project_rdm, log_normalize
from .recon import MLEM, SART, BackProjection, FilteredBackProjection

__all__ = [
    "__version__",
    "INTENSITY",
    "LINE_INTEGRAL",
    "ProjectionStack",
    "VoxelGrid",
    "VoxelVolume",
    "CArmGeometry",
    "view_angles",
    "Ellipsoid",
    "EllipsoidPhantom",
    "forward_project_analytic",
    "kidney_phantom",
    "sphere_phantom",
    "to_intensity",
    "voxelize",
    "RayDrivenProjector",
    "backproject_pdm",
    "forward_project_rdm",
    "log_normalize",
    "BackProjection",
    "FilteredBackProjection",
    "SART",
    "MLEM",
]
