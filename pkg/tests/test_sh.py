import numpy as np
import pytest
from scipy.integrate import quad

from prtkit import sh
from prtkit.maps import constant_light


# --- independent oracles -----------------------------------------------------

def clamped_cosine_band_factor(l):
    """Quadrature oracle: A_hat_l = sqrt(4pi/(2l+1)) * integral of
    max(cos t, 0) * Y_l0 over the sphere, computed with scipy quad."""
    y_l0 = {
        0: lambda ct: sh.C0,
        1: lambda ct: sh.C1 * ct,
        2: lambda ct: sh.C2B * (3.0 * ct * ct - 1.0),
    }[l]
    integrand = lambda t: np.cos(t) * y_l0(np.cos(t)) * np.sin(t)
    val, _ = quad(integrand, 0.0, np.pi / 2)
    return np.sqrt(4.0 * np.pi / (2 * l + 1)) * 2.0 * np.pi * val


def plain_mc_sigma(fn, n):
    """Analytic plain-MC standard deviation of a 4pi-weighted estimator;
    an upper bound for the stratified sampler's error."""
    t = np.linspace(0, np.pi, 4096)
    # isotropic bound via the polar profile only (used for z-symmetric fns)
    f = fn(np.cos(t))
    mean = np.trapezoid(f * np.sin(t), t) / 2.0
    second = np.trapezoid(f * f * np.sin(t), t) / 2.0
    var = (4 * np.pi) ** 2 * (second - mean * mean) / ((4 * np.pi) ** 0)
    return np.sqrt(max(var, 0.0) / n)


# --- basis -------------------------------------------------------------------

def test_basis_at_plus_z_frozen_values():
    vals = sh.eval_basis((0.0, 0.0, 1.0))
    expected = np.array([0.28209479, 0.0, 0.48860251, 0.0, 0.0, 0.0,
                         0.63078313, 0.0, 0.0])
    assert np.allclose(vals, expected, atol=1e-7)


def test_basis_constant_term_everywhere():
    rng = np.random.default_rng(11)
    d = rng.standard_normal((50, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    vals = sh.eval_basis(d)
    assert np.allclose(vals[:, 0], 0.28209479, atol=1e-7)


def test_basis_parity_under_z_flip():
    up = sh.eval_basis((0.0, 0.0, 1.0))
    down = sh.eval_basis((0.0, 0.0, -1.0))
    assert down[2] == pytest.approx(-up[2])   # band-1 z term is odd
    assert down[6] == pytest.approx(up[6])    # band-2 z^2 term is even


def test_basis_rejects_non_unit():
    with pytest.raises(ValueError):
        sh.eval_basis((0.0, 0.0, 2.0))


def test_orthonormality_gram():
    dirs = sh.stratified_sphere_samples(1_000_000, seed=123)
    basis = sh.eval_basis(dirs)
    gram = basis.T @ basis * (4.0 * np.pi / len(dirs))
    assert np.abs(gram - np.eye(9)).max() < 1e-2


def test_band_norms_rotation_invariant():
    rng = np.random.default_rng(12)
    rot, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(rot) < 0:
        rot[:, 0] *= -1
    d = rng.standard_normal((200, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    b1 = sh.eval_basis(d)
    b2 = sh.eval_basis(d @ rot.T)
    for band, idx in [(0, [0]), (1, [1, 2, 3]), (2, [4, 5, 6, 7, 8])]:
        n1 = np.linalg.norm(b1[:, idx], axis=1)
        n2 = np.linalg.norm(b2[:, idx], axis=1)
        assert np.abs(n1 - n2).max() < 1e-6, f"band {band}"


# --- clamped cosine ----------------------------------------------------------

def test_cosine_lobe_against_quadrature_oracle():
    a_hat = sh.cosine_lobe()
    for l in range(3):
        assert a_hat[l] == pytest.approx(clamped_cosine_band_factor(l), abs=1e-9)
    assert np.allclose(a_hat, [np.pi, 2 * np.pi / 3, np.pi / 4], atol=1e-12)
    assert a_hat[0] > a_hat[1] > a_hat[2] > 0


# --- analytic transport ------------------------------------------------------

def test_analytic_transport_frozen_values():
    t = sh.analytic_transport((0.0, 0.0, 1.0))
    expected = np.array([0.88622693, 0.0, 1.02332671, 0.0, 0.0, 0.0,
                         0.49541592, 0.0, 0.0])
    assert np.allclose(t, expected, atol=1e-7)


def test_analytic_transport_x_facing():
    t = sh.analytic_transport((1.0, 0.0, 0.0))
    assert t[3] == pytest.approx(1.02332671, abs=1e-7)
    assert t[2] == pytest.approx(0.0, abs=1e-12)


def test_constant_light_gives_pi_for_any_normal():
    light = constant_light(1.0)
    rng = np.random.default_rng(13)
    d = rng.standard_normal((100, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    for n in d:
        rgb = sh.shade(sh.analytic_transport(n), light)
        assert np.allclose(rgb, np.pi, atol=1e-6)


# --- shade -------------------------------------------------------------------

def test_shade_zero_transport():
    light = constant_light((0.2, 0.5, 0.9))
    assert np.allclose(sh.shade(np.zeros(9), light), 0.0)


def test_shade_preserves_negative_values():
    light = constant_light(1.0)
    t = np.zeros(9)
    t[0] = -1.0
    assert np.all(sh.shade(t, light) < 0.0)


def test_shade_bilinear():
    rng = np.random.default_rng(14)
    t1 = rng.standard_normal(9)
    t2 = rng.standard_normal(9)
    from prtkit.maps import ShLight
    l1 = ShLight(rng.standard_normal((9, 3)))
    l2 = ShLight(rng.standard_normal((9, 3)))
    a, b = 0.7, -1.3
    lhs = sh.shade(a * t1 + b * t2, l1)
    rhs = a * sh.shade(t1, l1) + b * sh.shade(t2, l1)
    assert np.allclose(lhs, rhs, atol=1e-6)
    lhs2 = sh.shade(t1, ShLight(a * l1.coeffs + b * l2.coeffs))
    rhs2 = a * sh.shade(t1, l1) + b * sh.shade(t1, l2)
    assert np.allclose(lhs2, rhs2, atol=1e-6)


def test_band0_only_light_constant_irradiance():
    light = constant_light(1.0)  # only coefficient 0
    rng = np.random.default_rng(15)
    vals = []
    for _ in range(20):
        n = rng.standard_normal(3)
        n /= np.linalg.norm(n)
        vals.append(sh.shade(sh.analytic_transport(n), light)[0])
    assert np.ptp(vals) < 1e-9


# --- projection --------------------------------------------------------------

def test_project_constant_function():
    coeffs = sh.project_sphere_fn(lambda d: np.ones(len(d)), 1_000_000, seed=3)
    assert coeffs[0] == pytest.approx(2.0 * np.sqrt(np.pi), abs=1e-6)
    assert np.abs(coeffs[1:]).max() < 1e-2


def test_project_basis_function_orthonormality():
    coeffs = sh.project_sphere_fn(lambda d: sh.eval_basis(d)[:, 2], 1_000_000, seed=4)
    expected = np.zeros(9)
    expected[2] = 1.0
    assert np.abs(coeffs - expected).max() < 1e-2


def test_project_clamped_cosine_recovers_band_factors():
    coeffs = sh.project_sphere_fn(lambda d: np.maximum(d[:, 2], 0.0), 1_000_000, seed=5)
    scale = np.sqrt(4.0 * np.pi / (2 * sh.BAND_OF_INDEX + 1))
    a_hat = coeffs * scale
    sigma = plain_mc_sigma(lambda ct: np.maximum(ct, 0.0), 1_000_000)
    tol = max(3 * sigma, 1e-3)
    assert a_hat[0] == pytest.approx(np.pi, abs=tol)
    assert a_hat[2] == pytest.approx(2 * np.pi / 3, abs=tol)
    assert a_hat[6] == pytest.approx(np.pi / 4, abs=tol)


def test_project_rgb_function_shape():
    fn = lambda d: np.stack([np.ones(len(d)), 2 * np.ones(len(d)),
                             3 * np.ones(len(d))], axis=1)
    coeffs = sh.project_sphere_fn(fn, 10_000, seed=6)
    assert coeffs.shape == (9, 3)
    assert np.allclose(coeffs[0], 2.0 * np.sqrt(np.pi) * np.array([1, 2, 3]), rtol=1e-6)


def test_stratified_samples_deterministic_and_unit():
    a = sh.stratified_sphere_samples(1000, seed=42)
    b = sh.stratified_sphere_samples(1000, seed=42)
    c = sh.stratified_sphere_samples(1000, seed=43)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)


def test_stratified_samples_cover_octants():
    d = sh.stratified_sphere_samples(4096, seed=7)
    octant = (d[:, 0] > 0).astype(int) * 4 + (d[:, 1] > 0).astype(int) * 2 + (d[:, 2] > 0)
    counts = np.bincount(octant, minlength=8)
    assert counts.min() > 4096 / 8 * 0.8
