"""Divergence-free Fourier spaces on the periodic box.

Fields are stored as Fourier-series coefficients ``c[j, k]`` of the velocity
component ``j`` at integer wavevector ``k`` in numpy FFT ordering, so that

    u(x) = sum_k c[:, k] exp(2 pi i k.x / L).

Only wavevectors with ``0 < max_i |k_i| <= N // 3`` are retained (the 2/3
truncation). Every coefficient outside that set is exactly zero.

Parseval convention: ``norm_H(u)**2 == L**d * sum |c|**2`` which equals the
integral of ``|u|**2`` over the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np


@dataclass(frozen=True)
class SpectralDomain:
    """Truncated mean-zero torus ``[0, L)^d`` with viscosity ``viscosity``."""

    dimension: int
    modes_per_axis: int
    box_length: float = 2 * np.pi
    viscosity: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.modes_per_axis < 4:
            raise ValueError("modes_per_axis must be at least 4")
        if not self.box_length > 0:
            raise ValueError("box_length must be positive")
        if not self.viscosity > 0:
            raise ValueError("viscosity must be positive")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.modes_per_axis,) * self.dimension

    @property
    def field_shape(self) -> tuple[int, ...]:
        return (self.dimension,) + self.shape

    @property
    def cutoff(self) -> int:
        return self.modes_per_axis // 3

    @property
    def volume(self) -> float:
        return self.box_length**self.dimension

    @cached_property
    def int_wavevectors(self) -> np.ndarray:
        """Integer wavevectors, shape ``(d, N, ..., N)``."""
        k1 = np.fft.fftfreq(self.modes_per_axis, 1.0 / self.modes_per_axis)
        k1 = np.rint(k1).astype(int)
        return np.array(np.meshgrid(*([k1] * self.dimension), indexing="ij"))

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """Physical wavevectors ``2 pi k / L``."""
        return (2 * np.pi / self.box_length) * self.int_wavevectors

    @cached_property
    def mask(self) -> np.ndarray:
        k = np.abs(self.int_wavevectors)
        kmax = k.max(axis=0)
        return (kmax <= self.cutoff) & (kmax > 0)

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        """``|2 pi k / L|^2`` on retained modes, 1 elsewhere (safe to divide by)."""
        lam = np.sum(self.wavevectors**2, axis=0)
        return np.where(self.mask, lam, 1.0)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Sorted Stokes eigenvalues of the retained wavevectors."""
        return np.sort(self.laplacian_symbol[self.mask])

    @property
    def lambda1(self) -> float:
        return (2 * np.pi / self.box_length) ** 2

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def sigma(self) -> float:
        return self.viscosity * self.lambda1

    def zeros(self) -> "SpectralField":
        return SpectralField(self, np.zeros(self.field_shape, dtype=complex))


@dataclass(frozen=True, eq=False)
class SpectralField:
    domain: SpectralDomain
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.coefficients.shape != self.domain.field_shape:
            raise ValueError(
                f"coefficient shape {self.coefficients.shape} does not match "
                f"domain {self.domain.field_shape}"
            )

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.domain, self.coefficients + other.coefficients)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.domain, self.coefficients - other.coefficients)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.domain, -self.coefficients)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.domain, scalar * self.coefficients)

    __rmul__ = __mul__

    def divergence_defect(self) -> float:
        """max_k |k . c(k)| with integer wavevectors."""
        k = self.domain.int_wavevectors
        return float(np.max(np.abs(np.sum(k * self.coefficients, axis=0))))

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.coefficients - _mirror(self.coefficients))))

    def validate(self, atol: float = 1e-12) -> None:
        """Raise ``ValueError`` if any field invariant is violated."""
        if np.any(self.coefficients[:, ~self.domain.mask] != 0):
            raise ValueError("coefficients outside the retained wavevector set")
        if self.divergence_defect() > atol:
            raise ValueError(f"field not divergence-free: {self.divergence_defect():.3e}")
        scale = max(1.0, float(np.max(np.abs(self.coefficients))))
        if self.symmetry_defect() > atol * scale:
            raise ValueError("field violates conjugate symmetry")


def _mirror(c: np.ndarray) -> np.ndarray:
    """Return ``conj(c(-k))`` in FFT ordering."""
    axes = tuple(range(1, c.ndim))
    return np.conj(np.roll(np.flip(c, axis=axes), 1, axis=axes))


def inner(u: SpectralField, v: SpectralField) -> float:
    """H inner product ``(u, v)``; also the duality pairing for dual elements."""
    s = np.vdot(u.coefficients, v.coefficients).real
    return float(u.domain.volume * s)


def norm_H(u: SpectralField) -> float:
    return float(np.sqrt(u.domain.volume * np.sum(np.abs(u.coefficients) ** 2)))


def norm_V(u: SpectralField) -> float:
    lam = u.domain.laplacian_symbol
    return float(np.sqrt(u.domain.volume * np.sum(lam * np.abs(u.coefficients) ** 2)))


def norm_dual(w: SpectralField, order: float = 1.0) -> float:
    """Dual norm of the spectrally weighted space with weights ``lambda_k**order``.

    ``order=1`` gives the norm of V*, ``order=3`` that of V_3*, and
    ``order=delta`` that of V_delta*.
    """
    lam = w.domain.laplacian_symbol
    return float(
        np.sqrt(w.domain.volume * np.sum(np.abs(w.coefficients) ** 2 / lam**order))
    )


def norm_E0(u: SpectralField) -> float:
    """Norm of the phase-space topology ``E_0 = V_delta*``."""
    return norm_dual(u, u.domain.delta)


def leray_project(raw: np.ndarray, domain: SpectralDomain) -> SpectralField:
    """Orthogonal projection of raw coefficients onto the truncated divergence-free space."""
    c = np.where(domain.mask, raw, 0.0).astype(complex)
    k = domain.wavevectors
    kdotc = np.sum(k * c, axis=0)
    c = c - k * (kdotc / domain.laplacian_symbol)
    return SpectralField(domain, c)


def symmetrize(raw: np.ndarray) -> np.ndarray:
    """Closest conjugate-symmetric array (coefficients of a real field)."""
    return 0.5 * (raw + _mirror(raw))


def mode_pair(
    domain: SpectralDomain,
    k: tuple[int, ...],
    norm: float = 1.0,
    phase: float = 0.0,
    direction: tuple[float, ...] | None = None,
) -> SpectralField:
    """Real divergence-free field built on the wavevector pair ``+k, -k``.

    The polarization is ``direction`` projected orthogonally to ``k``; by
    default a fixed vector perpendicular to ``k`` is used.
    """
    k = np.asarray(k, dtype=int)
    if k.shape != (domain.dimension,):
        raise ValueError(f"wavevector {tuple(k)} has wrong dimension")
    if not 0 < np.max(np.abs(k)) <= domain.cutoff:
        raise ValueError(f"wavevector {tuple(k)} is not retained (cutoff {domain.cutoff})")
    kf = k.astype(float)
    if direction is None:
        if domain.dimension == 2:
            e = np.array([-kf[1], kf[0]])
        else:
            axis = np.zeros(3)
            axis[int(np.argmin(np.abs(kf)))] = 1.0
            e = np.cross(kf, axis)
    else:
        e = np.asarray(direction, dtype=float)
        e = e - kf * (e @ kf) / (kf @ kf)
    if np.linalg.norm(e) == 0:
        raise ValueError("polarization is parallel to the wavevector")
    e = e / np.linalg.norm(e)
    c = np.zeros(domain.field_shape, dtype=complex)
    n = domain.modes_per_axis
    idx = tuple(int(ki) % n for ki in k)
    nidx = tuple(int(-ki) % n for ki in k)
    amp = np.exp(1j * phase)
    for j in range(domain.dimension):
        c[(j,) + idx] = amp * e[j]
        c[(j,) + nidx] = np.conj(amp) * e[j]
    u = SpectralField(domain, c)
    return u * (norm / norm_H(u))


def random_field(
    domain: SpectralDomain,
    rng: np.random.Generator,
    norm: float = 1.0,
    slope: float = 0.0,
) -> SpectralField:
    """Random real divergence-free field with amplitude spectrum ``|k|^-slope``.

    With ``slope=0`` the direction is uniform on the unit sphere of the
    truncated space.
    """
    shape = domain.field_shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if slope:
        kk = np.sqrt(np.sum(domain.int_wavevectors**2, axis=0)).astype(float)
        kk[kk == 0] = 1.0
        raw = raw * kk**-slope
    u = leray_project(symmetrize(raw), domain)
    return u * (norm / norm_H(u))


@lru_cache(maxsize=32)
def _grid_index(domain: SpectralDomain, points: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat positions of retained modes in the N-array and in a ``points``-grid array."""
    if points <= 2 * domain.cutoff:
        raise ValueError(f"grid of {points} points cannot hold cutoff {domain.cutoff}")
    kk = domain.int_wavevectors[:, domain.mask]
    src = np.flatnonzero(domain.mask)
    dst = np.ravel_multi_index(tuple(kk % points), (points,) * domain.dimension)
    return src, dst


def to_grid(u: SpectralField, points: int | None = None) -> np.ndarray:
    """Physical values on a uniform ``points^d`` grid, shape ``(d, points, ...)``."""
    d = u.domain
    points = points or d.modes_per_axis
    src, dst = _grid_index(d, points)
    big = np.zeros((d.dimension, points**d.dimension), dtype=complex)
    big[:, dst] = u.coefficients.reshape(d.dimension, -1)[:, src]
    big = big.reshape((d.dimension,) + (points,) * d.dimension)
    axes = tuple(range(1, d.dimension + 1))
    return np.fft.ifftn(big, axes=axes).real * points**d.dimension


def grid_to_coefficients(values: np.ndarray, domain: SpectralDomain) -> np.ndarray:
    """Retained Fourier coefficients of grid data with shape ``(..., P, ..., P)``.

    Leading axes are batch axes; the trailing ``d`` axes are spatial.
    """
    d = domain.dimension
    points = values.shape[-1]
    axes = tuple(range(values.ndim - d, values.ndim))
    hat = np.fft.fftn(values, axes=axes) / points**d
    src, dst = _grid_index(domain, points)
    batch = values.shape[:-d]
    out = np.zeros(batch + (domain.modes_per_axis**d,), dtype=complex)
    out[..., src] = hat.reshape(batch + (-1,))[..., dst]
    return out.reshape(batch + domain.shape)


def from_grid(values: np.ndarray, domain: SpectralDomain) -> SpectralField:
    """Leray-projected spectral field from physical grid values ``(d, P, ..., P)``."""
    return leray_project(grid_to_coefficients(values, domain), domain)


def e0_vector(u: SpectralField) -> np.ndarray:
    """Real vector whose Euclidean norm equals ``norm_E0(u)``."""
    d = u.domain
    w = np.sqrt(d.volume / d.laplacian_symbol**d.delta)
    c = (u.coefficients * w)[:, d.mask].ravel()
    return np.concatenate([c.real, c.imag])
