"""Occlusion-aware SH light transport: baking, relighting, inverse lighting."""

__version__ = "0.1.0"

from .errors import DimensionError, FormatError, MeshError, PrtError
from .maps import MapImage, MapKind, ShLight, apply_mask, constant_light, read_map, write_map
from .sh import analytic_transport, cosine_lobe, eval_basis, project_sphere_fn, shade

__all__ = [
    "DimensionError",
    "FormatError",
    "MeshError",
    "PrtError",
    "MapImage",
    "MapKind",
    "ShLight",
    "apply_mask",
    "constant_light",
    "read_map",
    "write_map",
    "analytic_transport",
    "cosine_lobe",
    "eval_basis",
    "project_sphere_fn",
    "shade",
]
