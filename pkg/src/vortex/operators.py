"""Differential and bilinear operators on spectral fields.

curl, Biot-Savart inversion, Leray projection and the advection
operators B(u,v) = (u.grad)v and F(u,xi) = u.grad xi.  Nonlinearities are
evaluated pseudo-spectrally: differentiate in spectral space, multiply in
physical space, transform back, dealias.  With the 2/3 mask this keeps the
retained band alias-free, so the cancellation identities of the continuum
operators hold to near machine precision.
"""

from __future__ import annotations

import numpy as np

from .spectral import (
    ScalarField,
    SpectralGrid,
    VectorField,
    dealias,
    to_physical,
    zero_vector,
    _require_same_grid,
)

MEAN_ZERO_RTOL = 1e-10


def gradient(f: ScalarField) -> VectorField:
    g = f.grid
    return VectorField(
        ScalarField(g, 1j * g.diff_kx * f.coeffs),
        ScalarField(g, 1j * g.diff_ky * f.coeffs),
    )


def divergence(v: VectorField) -> ScalarField:
    g = v.grid
    return ScalarField(g, 1j * (g.diff_kx * v.vx.coeffs + g.diff_ky * v.vy.coeffs))


def divergence_defect(v: VectorField) -> float:
    """max_k |k . v(k)| / max_k |v(k)|; ~0 for divergence-free fields."""
    g = v.grid
    div = np.abs(g.diff_kx * v.vx.coeffs + g.diff_ky * v.vy.coeffs)
    scale = max(np.max(np.abs(v.vx.coeffs)), np.max(np.abs(v.vy.coeffs)))
    if scale == 0.0:
        return 0.0
    return float(np.max(div) / scale)


def curl(v: VectorField) -> ScalarField:
    """Scalar curl of a planar field: coeff(k) = i (k1 vy(k) - k2 vx(k))."""
    g = v.grid
    return ScalarField(g, 1j * (g.diff_kx * v.vy.coeffs - g.diff_ky * v.vx.coeffs))


def biot_savart(xi: ScalarField) -> VectorField:
    """Divergence-free velocity with the given vorticity and zero mean.

    Spectrally v(k) = i (k2, -k1) xi(k) / |k|^2 (so curl(biot_savart(xi)) = xi),
    v(0) = 0.  Mean-zero vorticity is required: the inversion kernel is not
    defined at k = 0.
    """
    g = xi.grid
    scale = np.max(np.abs(xi.coeffs))
    if scale > 0 and abs(xi.coeffs[0, 0]) > MEAN_ZERO_RTOL * scale:
        raise ValueError(
            "biot_savart requires mean-zero vorticity "
            f"(|mean| = {abs(xi.coeffs[0, 0]):.3e}, field scale {scale:.3e})"
        )
    inv_ksq = np.zeros_like(g.ksq)
    nonzero = g.ksq > 0
    inv_ksq[nonzero] = 1.0 / g.ksq[nonzero]
    vx = 1j * g.diff_ky * xi.coeffs * inv_ksq
    vy = -1j * g.diff_kx * xi.coeffs * inv_ksq
    return VectorField(ScalarField(g, vx), ScalarField(g, vy))


def leray_project(u: VectorField) -> VectorField:
    """Remove the gradient part: u(k) - k (k.u(k)) / |k|^2, zero mode kept."""
    g = u.grid
    inv_ksq = np.zeros_like(g.ksq)
    nonzero = g.ksq > 0
    inv_ksq[nonzero] = 1.0 / g.ksq[nonzero]
    kdotu = (g.kx * u.vx.coeffs + g.ky * u.vy.coeffs) * inv_ksq
    return VectorField(
        ScalarField(g, u.vx.coeffs - g.kx * kdotu),
        ScalarField(g, u.vy.coeffs - g.ky * kdotu),
    )


def _advection_inputs(u: VectorField):
    ub = dealias(u)
    return to_physical(ub.vx), to_physical(ub.vy)


def _advect_scalar(u1p, u2p, f: ScalarField) -> np.ndarray:
    """Physical values of u.grad f with dealiased f; u already physical."""
    g = f.grid
    fb = f.coeffs * g.dealias_mask
    dfx = to_physical(ScalarField(g, 1j * g.diff_kx * fb))
    dfy = to_physical(ScalarField(g, 1j * g.diff_ky * fb))
    return u1p * dfx + u2p * dfy


def _spectral_of(values: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    n = grid.modes_per_dim
    return (np.fft.fft2(values) / (n * n)) * grid.dealias_mask


def advection_values(u: VectorField, target, u_phys=None):
    """Physical grid values of (u.grad) target with dealiased inputs, before
    any output truncation; the weighted cancellation tests pair these
    pointwise against non-band-limited factors.

    u_phys, when given, supplies the dealiased physical components of u
    (one transform pair shared across several evaluations per time step).
    """
    _require_same_grid(u, target)
    u1p, u2p = u_phys if u_phys is not None else _advection_inputs(u)
    if isinstance(target, VectorField):
        return (_advect_scalar(u1p, u2p, target.vx),
                _advect_scalar(u1p, u2p, target.vy))
    return _advect_scalar(u1p, u2p, target)


def bilinear_B(u: VectorField, v: VectorField, u_phys=None) -> VectorField:
    """(u.grad)v, pseudo-spectral and dealiased; not Leray-projected."""
    g = u.grid
    wx, wy = advection_values(u, v, u_phys)
    return VectorField(ScalarField(g, _spectral_of(wx, g)),
                       ScalarField(g, _spectral_of(wy, g)))


def bilinear_F(u: VectorField, xi: ScalarField, u_phys=None) -> ScalarField:
    """u.grad xi, pseudo-spectral and dealiased."""
    g = u.grid
    return ScalarField(g, _spectral_of(advection_values(u, xi, u_phys), g))


def bracket(f, g) -> float:
    """Duality pairing <f, g> as physical-space quadrature of the product."""
    if isinstance(f, VectorField) != isinstance(g, VectorField):
        raise ValueError("cannot pair a scalar field with a vector field")
    if isinstance(f, VectorField):
        return bracket(f.vx, g.vx) + bracket(f.vy, g.vy)
    _require_same_grid(f, g)
    return float(np.sum(to_physical(f) * to_physical(g)) * f.grid.cell_area)


def grad_norm_l2(v: VectorField) -> float:
    """||grad v||_{L^2} via the spectral sum (L^2 sum_k |k|^2 |v(k)|^2)^(1/2)."""
    g = v.grid
    total = np.sum(g.ksq * (np.abs(v.vx.coeffs) ** 2 + np.abs(v.vy.coeffs) ** 2))
    return float(np.sqrt(total) * g.domain_length)


def grad_norm_l2_scalar(f: ScalarField) -> float:
    g = f.grid
    total = np.sum(g.ksq * np.abs(f.coeffs) ** 2)
    return float(np.sqrt(total) * g.domain_length)


def _hermitize(coeffs: np.ndarray) -> np.ndarray:
    flipped = np.roll(coeffs[::-1, ::-1], 1, axis=(0, 1))
    return 0.5 * (coeffs + np.conj(flipped))


def random_scalar_field(
    grid: SpectralGrid,
    rng: np.random.Generator,
    decay: float = 2.0,
    amplitude: float = 1.0,
) -> ScalarField:
    """Mean-zero random field: |k|^-decay spectral amplitudes, random phases,
    Hermitian-symmetrized, dealiased, scaled to ||f||_{L^2} = amplitude."""
    n = grid.modes_per_dim
    raw = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    shape = np.zeros_like(grid.ksq)
    nonzero = grid.ksq > 0
    shape[nonzero] = grid.ksq[nonzero] ** (-decay / 2.0)
    coeffs = _hermitize(raw * shape * grid.dealias_mask)
    coeffs[0, 0] = 0.0
    field = ScalarField(grid, coeffs)
    norm = np.sqrt(np.sum(np.abs(coeffs) ** 2)) * grid.domain_length
    if norm == 0.0:
        return field
    return field * (amplitude / norm)


def random_divfree_field(
    grid: SpectralGrid,
    rng: np.random.Generator,
    decay: float = 2.0,
    amplitude: float = 1.0,
) -> VectorField:
    """Random mean-zero divergence-free field, dealiased, ||v||_{L^2} = amplitude."""
    raw = VectorField(
        random_scalar_field(grid, rng, decay, 1.0),
        random_scalar_field(grid, rng, decay, 1.0),
    )
    v = leray_project(raw)
    norm = np.sqrt(np.sum(np.abs(v.vx.coeffs) ** 2 + np.abs(v.vy.coeffs) ** 2))
    norm *= grid.domain_length
    if norm == 0.0:
        return v
    return v * (amplitude / norm)
