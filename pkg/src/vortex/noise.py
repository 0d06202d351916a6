"""Multiplicative noise: covariance specification, basis construction,
Wiener increments, Hille-Yosida regularization and operator norms.

The covariance acts diagonally on a finite family of divergence-free
Fourier modes: applied to the k-th basis direction it returns
c_k * sigma(v) * e_k, where e_k is normalized to unit W^{1-g,2} norm.
Vorticity noise takes the curl of each basis element, losing one order
of differentiability.  R_n = n (nI - Laplacian)^{-1} smooths the noise;
n = inf means no regularization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import operators
from .spectral import (
    Field,
    ScalarField,
    SpectralGrid,
    VectorField,
    l2_inner,
    l2_norm,
    sobolev_norm_spectral,
    to_physical,
)

SIGMA_KINDS = ("constant_one", "rational_square", "zero")


@dataclass(frozen=True)
class CovarianceSpec:
    """Diagonal covariance over a finite list of wavevector modes.

    mode_indices: integer wavevectors (j1, j2) selecting basis directions.
        A listed j whose negation is "canonical" (j2 > 0, or j2 == 0 and
        j1 > 0) selects the sine profile of the canonical wavevector, so j
        and -j give orthogonal basis elements.  (0, 0) selects the constant
        mode.
    coefficients: amplitudes c_k, one per mode; sum c_k^2 < inf holds by
        finiteness and is reported by coefficient_sq_sum.
    roughness: the regularity loss g in (0, 1); basis elements are
        normalized in W^{1-g,2}.
    sigma_kind: 'constant_one', 'zero', or 'rational_square' with
        sigma(v) = <v,h>^2 / (1 + <v,h>^2) for the pivot h.
    hy_level: Hille-Yosida level n (positive; math.inf = no smoothing).
    """

    mode_indices: tuple[tuple[int, int], ...]
    coefficients: tuple[float, ...]
    roughness: float
    sigma_kind: str = "constant_one"
    pivot: VectorField | None = None
    hy_level: float = math.inf

    def __post_init__(self):
        if len(self.mode_indices) != len(self.coefficients):
            raise ValueError("one coefficient per mode index is required")
        if len(set(self.mode_indices)) != len(self.mode_indices):
            raise ValueError("mode indices must be distinct")
        if not 0.0 < self.roughness < 1.0:
            raise ValueError(f"roughness g must lie in (0, 1), got {self.roughness}")
        if self.sigma_kind not in SIGMA_KINDS:
            raise ValueError(f"unknown sigma_kind {self.sigma_kind!r}")
        if self.sigma_kind == "rational_square" and self.pivot is None:
            raise ValueError("rational_square sigma requires a pivot field")
        if not (self.hy_level == math.inf or self.hy_level > 0):
            raise ValueError(f"hy_level must be positive or inf, got {self.hy_level}")

    @property
    def n_modes(self) -> int:
        return len(self.mode_indices)

    @property
    def coefficient_sq_sum(self) -> float:
        return float(sum(c * c for c in self.coefficients))

    def with_hy_level(self, n: float) -> "CovarianceSpec":
        return CovarianceSpec(self.mode_indices, self.coefficients, self.roughness,
                              self.sigma_kind, self.pivot, n)


@dataclass(frozen=True)
class WienerIncrement:
    """One step of the discretized cylindrical Wiener process: independent
    N(0,1) draws, one per retained mode, scaled by sqrt(dt) at application."""

    dt: float
    gaussians: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        self.gaussians.setflags(write=False)


# Stream tag keeping initial-data draws disjoint from increment draws.
_INITIAL_STREAM = 0x494E4954  # "INIT"


def _philox(seed: int, path_index: int, step_index: int) -> np.random.Generator:
    # Counter-based: each (seed, path, step) owns 2^64 blocks, so draws are
    # reproducible and non-overlapping regardless of worker scheduling.
    key = np.array([seed, path_index], dtype=np.uint64)
    counter = np.array([0, 0, step_index, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def initial_rng(seed: int) -> np.random.Generator:
    """Dedicated stream for initial-data sampling, disjoint from increments."""
    return _philox(seed, _INITIAL_STREAM, 0)


def sample_increment(seed: int, path_index: int, step_index: int,
                     spec: CovarianceSpec, dt: float) -> WienerIncrement:
    """Deterministic given (seed, path, step); independent across all three."""
    rng = _philox(seed, path_index, step_index)
    return WienerIncrement(dt, rng.standard_normal(spec.n_modes))


def _canonical(j: tuple[int, int]) -> tuple[bool, tuple[int, int]]:
    j1, j2 = j
    if (j2 > 0) or (j2 == 0 and j1 > 0):
        return True, j
    return False, (-j1, -j2)


def build_noise_basis(spec: CovarianceSpec, grid: SpectralGrid) -> list[VectorField]:
    """Velocity basis elements e_k: divergence-free single-frequency modes
    aligned with k-perp, normalized so ||e_k||_{W^{1-g,2}} = 1.

    A raw cosine/sine mode has L^2 norm L/sqrt(2), so the normalization
    divides by (1+|k|^2)^((1-g)/2) * L/sqrt(2); the constant mode (0,0) is
    the unit-L^2 field (1/L, 0).
    """
    n = grid.modes_per_dim
    half = n // 2
    k0 = 2.0 * np.pi / grid.domain_length
    out: list[VectorField] = []
    for j in spec.mode_indices:
        j1, j2 = j
        if max(abs(j1), abs(j2)) > half:
            raise ValueError(f"noise mode {j} lies outside the grid band |j| <= {half}")
        coeffs_x = np.zeros((n, n), dtype=np.complex128)
        coeffs_y = np.zeros((n, n), dtype=np.complex128)
        if j1 == 0 and j2 == 0:
            coeffs_x[0, 0] = 1.0 / grid.domain_length
            out.append(VectorField(ScalarField(grid, coeffs_x), ScalarField(grid, coeffs_y)))
            continue
        is_cos, (c1, c2) = _canonical(j)
        kvec = k0 * np.array([c1, c2])
        knorm = float(np.hypot(kvec[0], kvec[1]))
        qhat = np.array([-kvec[1], kvec[0]]) / knorm
        # cos: coeff(+-jc) = qhat/2 ; sin: coeff(+jc) = -i qhat/2, conj at -jc
        amp = 0.5 if is_cos else -0.5j
        ip, im = (c1 % n, c2 % n), (-c1 % n, -c2 % n)
        coeffs_x[ip], coeffs_x[im] = amp * qhat[0], np.conj(amp) * qhat[0]
        coeffs_y[ip], coeffs_y[im] = amp * qhat[1], np.conj(amp) * qhat[1]
        ksq = knorm * knorm
        norm = (1.0 + ksq) ** ((1.0 - spec.roughness) / 2.0)
        norm *= grid.domain_length / np.sqrt(2.0)
        coeffs_x /= norm
        coeffs_y /= norm
        out.append(VectorField(ScalarField(grid, coeffs_x), ScalarField(grid, coeffs_y)))
    return out


class NoiseBasis:
    """Stacked spectral arrays of a built basis; reused across time steps."""

    def __init__(self, spec: CovarianceSpec, grid: SpectralGrid):
        self.spec = spec
        self.grid = grid
        self.velocity = build_noise_basis(spec, grid)
        self.vorticity = [operators.curl(e) for e in self.velocity]
        self.vel_stack = np.stack(
            [np.stack([e.vx.coeffs, e.vy.coeffs]) for e in self.velocity]
        )
        self.vor_stack = np.stack([w.coeffs for w in self.vorticity])
        k0 = 2.0 * np.pi / grid.domain_length
        self.mode_ksq = np.array(
            [k0 * k0 * (j1 * j1 + j2 * j2) for j1, j2 in spec.mode_indices]
        )


def sigma_eval(v: VectorField, spec: CovarianceSpec) -> float:
    """Noise intensity sigma(v); rational_square maps into [0, 1)."""
    if spec.sigma_kind == "zero":
        return 0.0
    if spec.sigma_kind == "constant_one":
        return 1.0
    s = l2_inner(v, spec.pivot)
    return s * s / (1.0 + s * s)


def sigma_lipschitz_bound(spec: CovarianceSpec) -> float:
    """Analytic Lipschitz constant of sigma in L^2: (3 sqrt 3 / 8) ||h||_{L^2}
    for rational_square, 0 for the constant kinds."""
    if spec.sigma_kind != "rational_square":
        return 0.0
    return 3.0 * np.sqrt(3.0) / 8.0 * l2_norm(spec.pivot)


def hille_yosida(field: Field, n: float) -> Field:
    """R_n = n (nI - Laplacian)^{-1}: per-mode multiplication by n/(n+|k|^2).

    A contraction in every W^{s,q}; n = inf is the identity.
    """
    if n == math.inf:
        return field
    if not n > 0:
        raise ValueError(f"Hille-Yosida level must be positive, got {n}")
    if isinstance(field, VectorField):
        return VectorField(hille_yosida(field.vx, n), hille_yosida(field.vy, n))
    mult = n / (n + field.grid.ksq)
    return ScalarField(field.grid, field.coeffs * mult)


def apply_G(
    v: VectorField,
    dW: WienerIncrement,
    spec: CovarianceSpec,
    output: str = "velocity_noise",
    basis: NoiseBasis | None = None,
) -> Field:
    """R_n [ sum_k c_k sigma(v) g_k sqrt(dt) e_k ]; linear in the increment.

    output 'velocity_noise' returns the vector field; 'vorticity_noise'
    takes the curl of each basis element first and returns a scalar field.
    """
    if output not in ("velocity_noise", "vorticity_noise"):
        raise ValueError(f"unknown output kind {output!r}")
    if len(dW.gaussians) != spec.n_modes:
        raise ValueError(
            f"increment has {len(dW.gaussians)} draws for {spec.n_modes} modes"
        )
    grid = v.grid
    if basis is None:
        basis = NoiseBasis(spec, grid)
    sig = sigma_eval(v, spec)
    weights = np.asarray(spec.coefficients) * (sig * np.sqrt(dW.dt)) * dW.gaussians
    if output == "velocity_noise":
        stacked = np.einsum("m,mcij->cij", weights, basis.vel_stack)
        field: Field = VectorField(ScalarField(grid, stacked[0]), ScalarField(grid, stacked[1]))
    else:
        field = ScalarField(grid, np.einsum("m,mij->ij", weights, basis.vor_stack))
    return hille_yosida(field, spec.hy_level)


def noise_mode_fields(
    spec: CovarianceSpec,
    v: VectorField,
    output: str = "velocity_noise",
    basis: NoiseBasis | None = None,
) -> list[Field]:
    """The images G_n(v) h_k = R_n[c_k sigma(v) e_k] (or their curls)."""
    if basis is None:
        basis = NoiseBasis(spec, v.grid)
    sig = sigma_eval(v, spec)
    elems = basis.velocity if output == "velocity_noise" else basis.vorticity
    return [hille_yosida(e * (c * sig), spec.hy_level)
            for c, e in zip(spec.coefficients, elems)]


def operator_norms(
    v: VectorField,
    spec: CovarianceSpec,
    s: float,
    q: float,
    output: str = "velocity_noise",
    basis: NoiseBasis | None = None,
) -> dict[str, float]:
    """Hilbert-Schmidt and gamma-radonifying norms of the noise operator.

    hs          = (sum_k ||G(v)h_k||^2_{W^{s,2}})^(1/2), spectral Parseval.
    radonifying = || (sum_k |J^s G(v)h_k|^2)^(1/2) ||_{L^q}, the square
                  function evaluated pointwise in physical space.
    The two agree for q = 2.
    """
    if q == np.inf:
        raise ValueError("radonifying norm is not defined for q = inf")
    if not q >= 1.0:
        raise ValueError(f"q must be >= 1, got {q}")
    fields = noise_mode_fields(spec, v, output, basis)
    hs_sq = 0.0
    square_fn = np.zeros((v.grid.modes_per_dim,) * 2)
    for f in fields:
        hs_sq += sobolev_norm_spectral(f, s) ** 2
        smoothed = _bessel(f, s)
        if isinstance(smoothed, VectorField):
            px, py = to_physical(smoothed)
            square_fn += px * px + py * py
        else:
            p = to_physical(smoothed)
            square_fn += p * p
    cell = v.grid.cell_area
    radonifying = float((np.sum(square_fn ** (q / 2.0)) * cell) ** (1.0 / q))
    return {"hs": float(np.sqrt(hs_sq)), "radonifying": radonifying}


def _bessel(field: Field, s: float) -> Field:
    from .spectral import bessel_multiplier

    return bessel_multiplier(field, s)


def basis_l2_sq_sum(spec: CovarianceSpec, grid: SpectralGrid,
                    basis: NoiseBasis | None = None) -> float:
    """sum_k c_k^2 ||e_k||^2_{L^2}; the covariance factor in the Lipschitz
    bound ||G(v1)-G(v2)||_{HS(H;L^2)} <= Lip(sigma) (sum c^2 ||e||^2)^(1/2)
    ||v1-v2||."""
    if basis is None:
        basis = NoiseBasis(spec, grid)
    return float(sum(c * c * l2_norm(e) ** 2
                     for c, e in zip(spec.coefficients, basis.velocity)))
