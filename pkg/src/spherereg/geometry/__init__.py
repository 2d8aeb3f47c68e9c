from .cloud import Patch, PointCloud
from .io import FORMATS, load_point_cloud, save_point_cloud
from .neighbors import HashGrid, nearest_neighbors, radius_neighbors
from .sampling import downsample_indices, random_downsample
from .transforms import (RigidTransform, apply_transform, compose, invert,
                         load_transform, random_rotation, save_transform)

__all__ = [
    "FORMATS", "HashGrid", "Patch", "PointCloud", "RigidTransform",
    "apply_transform", "compose", "downsample_indices", "invert",
    "load_point_cloud", "load_transform", "nearest_neighbors",
    "radius_neighbors", "random_downsample", "random_rotation",
    "save_point_cloud", "save_transform",
]
