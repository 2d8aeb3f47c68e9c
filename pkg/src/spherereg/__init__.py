"""spherereg: rotation-invariant spherical-voxel descriptors and registration."""

from .errors import (ConfigError, DegenerateFrameError, DegeneratePatchError,
                     OutOfRangeError, ParseError, RegistrationError,
                     SphereRegError)
from .geometry import (Patch, PointCloud, RigidTransform, apply_transform,
                       compose, invert, load_point_cloud, radius_neighbors,
                       random_downsample, save_point_cloud)
from .lrf import LocalFrame, build_lrf, to_local, weighted_covariance
from .spherevox import (FeatureGrid, VoxelParams, interp_weights, msf_fuse,
                        spherical_coords, voxelize_hard, voxelize_interp)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DegenerateFrameError", "DegeneratePatchError",
    "FeatureGrid", "LocalFrame", "OutOfRangeError", "ParseError", "Patch",
    "PointCloud", "RegistrationError", "RigidTransform", "SphereRegError",
    "VoxelParams", "apply_transform", "build_lrf", "compose",
    "interp_weights", "invert", "load_point_cloud", "msf_fuse",
    "radius_neighbors", "random_downsample", "save_point_cloud",
    "spherical_coords", "to_local", "voxelize_hard", "voxelize_interp",
    "weighted_covariance",
]
