"""Closed-form inverse subproblems: light from transport, albedo from shading.

The albedo/light scale ambiguity is resolved nowhere in this module;
callers needing a canonical scale normalize the light's reference
brightness (see illum.normalize_brightness).
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import DimensionError, PrtError
from .maps import MapImage, MapKind, ShLight

COND_LIMIT = 1e8


def estimate_light(observed: MapImage, transport: MapImage, mask: MapImage,
                   cond_limit: float = COND_LIMIT) -> tuple[ShLight, float]:
    """Least-squares SH illumination from a shading map and its transport.

    Solves min_L ||A L - b||_2 per color channel, where rows of A are the
    transport vectors at mask pixels. Normal equations on the 9x9 Gram
    matrix, falling back to the pseudoinverse (minimum-norm solution) when
    the condition number exceeds cond_limit. Returns (light, RMS residual).
    """
    if not (observed.same_size(transport) and observed.same_size(mask)):
        raise DimensionError("observed, transport and mask must share dimensions")
    m = mask.data[:, :, 0] > 0.0
    n_pix = int(m.sum())
    if n_pix < 9:
        raise PrtError(f"need at least 9 mask pixels, got {n_pix}")
    a = transport.data[m].astype(np.float64)          # (n, 9)
    b = observed.data[m].astype(np.float64)           # (n, 3)
    gram = a.T @ a
    if not gram.any():
        raise PrtError("transport is all-zero under the mask")
    rhs = a.T @ b
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 0.0 or eig[-1] / eig[0] > cond_limit:
        warnings.warn("transport system is rank-deficient; returning the "
                      "minimum-norm solution", RuntimeWarning, stacklevel=2)
        coeffs = np.linalg.pinv(gram, rcond=1e-12) @ rhs
    else:
        coeffs = np.linalg.solve(gram, rhs)
    if not np.all(np.isfinite(coeffs)):
        coeffs = np.linalg.pinv(gram, rcond=1e-12) @ rhs
    residual = float(np.sqrt(np.mean((a @ coeffs - b) ** 2)))
    return ShLight(coeffs, id="estimated"), residual


def recover_albedo(image: MapImage, shading: MapImage, mask: MapImage,
                   epsilon: float = 1e-3) -> tuple[MapImage, MapImage]:
    """Albedo = image / max(shading, epsilon) under the mask.

    Returns (albedo, validity mask); pixels whose shading dips below
    epsilon in any channel are flagged invalid.
    """
    if not (image.same_size(shading) and image.same_size(mask)):
        raise DimensionError("image, shading and mask must share dimensions")
    s = shading.data
    if s.shape[2] == 1:
        s = np.repeat(s, 3, axis=2)
    albedo = image.data / np.maximum(s, epsilon) * mask.data
    valid = (mask.data[:, :, 0] > 0.0) & (s.min(axis=2) >= epsilon)
    return (MapImage(albedo, MapKind.ALBEDO),
            MapImage(valid.astype(np.float32)[:, :, None], MapKind.MASK))
