"""Real second-order spherical harmonics: basis, clamped cosine, projection.

Convention: real SH as Cartesian polynomials of a unit direction (x, y, z),
ordered by i = l(l+1)+m for l <= 2, i.e.

    [1, y, z, x, xy, yz, 3z^2-1, xz, x^2-y^2] up to per-term constants.

Condon-Shortley phase is absorbed into the constants (all positive).
"""

from __future__ import annotations

import numpy as np

# Per-term polynomial constants.
C0 = 0.28209479177387814   # 1/(2 sqrt(pi))
C1 = 0.4886025119029199    # sqrt(3/(4 pi))
C2A = 1.0925484305920792   # sqrt(15/(4 pi)),  xy / yz / xz terms
C2B = 0.31539156525252005  # sqrt(5/(16 pi)),  3z^2-1 term
C2C = 0.5462742152960396   # sqrt(15/(16 pi)), x^2-y^2 term

# Band index l for each of the 9 coefficients.
BAND_OF_INDEX = np.array([0, 1, 1, 1, 2, 2, 2, 2, 2])

# Clamped-cosine band factors A_hat = sqrt(4 pi / (2l+1)) * A_l.
A_HAT = np.array([np.pi, 2.0 * np.pi / 3.0, np.pi / 4.0])

SQRT_4PI = 2.0 * np.sqrt(np.pi)


def _check_unit(d: np.ndarray, tol: float = 1e-4) -> None:
    n = np.linalg.norm(d, axis=-1)
    bad = np.abs(n - 1.0) > tol
    if np.any(bad):
        worst = float(np.abs(n - 1.0).max())
        raise ValueError(f"direction must be unit length (off by {worst:.2e})")


def eval_basis(direction) -> np.ndarray:
    """Evaluate the 9 SH basis polynomials at unit direction(s).

    Accepts shape (3,) or (..., 3); returns (9,) or (..., 9).
    """
    d = np.asarray(direction, dtype=np.float64)
    _check_unit(d)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    out = np.empty(d.shape[:-1] + (9,))
    out[..., 0] = C0
    out[..., 1] = C1 * y
    out[..., 2] = C1 * z
    out[..., 3] = C1 * x
    out[..., 4] = C2A * x * y
    out[..., 5] = C2A * y * z
    out[..., 6] = C2B * (3.0 * z * z - 1.0)
    out[..., 7] = C2A * x * z
    out[..., 8] = C2C * (x * x - y * y)
    return out


def cosine_lobe() -> np.ndarray:
    """Band factors of the clamped cosine max(cos t, 0): (pi, 2pi/3, pi/4)."""
    return A_HAT.copy()


def analytic_transport(normal) -> np.ndarray:
    """Occlusion-free transport vector: basis at the normal scaled per band.

    Dotting the result with a light's coefficient column gives the
    unshadowed Lambertian irradiance for that channel.
    """
    return eval_basis(normal) * A_HAT[BAND_OF_INDEX]


def shade(transport, light) -> np.ndarray:
    """Per-channel dot product of 9-vector transport with 9x3 light coeffs.

    Negative results are preserved; clamping happens only at display
    encoding. ``transport`` may be (9,) or (..., 9); returns (3,) or (..., 3).
    """
    coeffs = light.coeffs if hasattr(light, "coeffs") else np.asarray(light)
    return np.asarray(transport, dtype=np.float64) @ coeffs


def stratified_sphere_samples(n: int, seed: int) -> np.ndarray:
    """n jittered-stratified uniform directions on the sphere, shape (n, 3).

    Strata form an a x b grid over (u, v) in [0,1)^2 with a*b = n and a as
    close to sqrt(n) as the factorization allows; mapping z = 1-2u,
    phi = 2 pi v. Deterministic for a given (n, seed).
    """
    if n < 1:
        raise ValueError("need at least one sample")
    a = int(np.sqrt(n))
    while n % a != 0:
        a -= 1
    b = n // a
    rng = np.random.default_rng(seed)
    jitter = rng.random((n, 2))
    idx = np.arange(n)
    u = (idx // b + jitter[:, 0]) / a
    v = (idx % b + jitter[:, 1]) / b
    return _uv_to_dir(u, v)


def _uv_to_dir(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    z = 1.0 - 2.0 * u
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = 2.0 * np.pi * v
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def project_sphere_fn(fn, samples: int, seed: int = 0) -> np.ndarray:
    """Monte Carlo SH projection of a spherical function over the full sphere.

    ``fn`` maps an (n, 3) array of unit directions to values of shape (n,)
    or (n, c). Returns coefficients of shape (9,) or (9, c). Uses stratified
    uniform sphere sampling with weight 4 pi / samples.
    """
    dirs = stratified_sphere_samples(samples, seed)
    vals = np.asarray(fn(dirs), dtype=np.float64)
    basis = eval_basis(dirs)  # (n, 9)
    weight = 4.0 * np.pi / samples
    return weight * (basis.T @ vals)
