"""Time-dependent body forces ``f(t) = a(t) g`` with a fixed spectral profile ``g``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .spaces import SpectralDomain, SpectralField, norm_dual

KINDS = ("zero", "periodic", "exponential", "tabulated")


class IntegrabilityError(ValueError):
    """The weighted integral of ``||f||^2_{V*}`` diverges at minus infinity."""


@dataclass(frozen=True, eq=False)
class ForcingProfile:
    """A forcing ``f(t) = a(t) g``.

    kinds:
      zero         a = 0
      periodic     a(t) = cos(omega t + phase)
      exponential  a(t) = exp(alpha t)
      tabulated    a linearly interpolated from ``(times, amplitudes)``,
                   ``a(t0) exp(alpha (t - t0))`` before the table, last value after it
    """

    domain: SpectralDomain
    kind: str
    profile: SpectralField
    alpha: float = 0.0
    omega: float = 0.0
    phase: float = 0.0
    times: np.ndarray | None = field(default=None, repr=False)
    amplitudes: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        if self.kind in ("exponential", "tabulated"):
            growth = 2 * self.alpha + self.domain.sigma
            if growth <= 0:
                raise IntegrabilityError(
                    f"2*alpha + sigma = {growth:.6g} <= 0: the weighted forcing "
                    "integral diverges at -infinity"
                )
        if self.kind == "tabulated":
            t = np.asarray(self.times, dtype=float)
            if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
                raise ValueError("tabulated forcing needs >= 2 strictly increasing times")
            if np.shape(self.amplitudes) != t.shape:
                raise ValueError("times and amplitudes differ in length")

    # construction helpers

    @classmethod
    def zero(cls, domain: SpectralDomain) -> "ForcingProfile":
        return cls(domain, "zero", domain.zeros())

    @classmethod
    def periodic(cls, profile: SpectralField, omega: float, phase: float = 0.0):
        return cls(profile.domain, "periodic", profile, omega=omega, phase=phase)

    @classmethod
    def exponential(cls, profile: SpectralField, alpha: float = 0.0):
        return cls(profile.domain, "exponential", profile, alpha=alpha)

    @classmethod
    def tabulated(cls, profile: SpectralField, times, amplitudes, tail_rate: float):
        return cls(
            profile.domain,
            "tabulated",
            profile,
            alpha=tail_rate,
            times=np.asarray(times, dtype=float),
            amplitudes=np.asarray(amplitudes, dtype=float),
        )

    # evaluation

    def amplitude(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "periodic":
            return np.cos(self.omega * t + self.phase)
        if self.kind == "exponential":
            return np.exp(self.alpha * t)
        t0, a0 = self.times[0], self.amplitudes[0]
        inside = np.interp(t, self.times, self.amplitudes)
        before = a0 * np.exp(self.alpha * np.minimum(t - t0, 0.0))
        return np.where(t < t0, before, inside)

    def __call__(self, t: float) -> SpectralField:
        return self.profile * float(self.amplitude(t))

    @property
    def profile_dual2(self) -> float:
        """``||g||^2_{V*}``."""
        return norm_dual(self.profile, 1) ** 2

    def dual_norm2(self, t, order: float = 1.0):
        """``||f(t)||^2`` in the dual space of the given order (vectorized in ``t``)."""
        return self.amplitude(t) ** 2 * norm_dual(self.profile, order) ** 2

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or not np.any(self.profile.coefficients)

    # the weighted integral int_{-inf}^s exp(sigma xi) ||f(xi)||^2_{V*} dxi

    def weighted_integral(self, s: float) -> float:
        """Closed form where available; table quadrature plus analytic tail otherwise."""
        sigma = self.domain.sigma
        g2 = self.profile_dual2
        if self.is_zero:
            return 0.0
        if self.kind == "exponential":
            rate = 2 * self.alpha + sigma
            return g2 * np.exp(rate * s) / rate
        if self.kind == "periodic":
            w2 = 2 * self.omega
            th = w2 * s + 2 * self.phase
            osc = (sigma * np.cos(th) + w2 * np.sin(th)) / (sigma**2 + w2**2)
            return 0.5 * g2 * np.exp(sigma * s) * (1.0 / sigma + osc)
        return self._tabulated_integral(s)

    def _tabulated_integral(self, s: float) -> float:
        sigma = self.domain.sigma
        g2 = self.profile_dual2
        t0, a0 = self.times[0], self.amplitudes[0]
        rate = 2 * self.alpha + sigma
        if s <= t0:
            return g2 * a0**2 * np.exp(sigma * t0 + rate * (s - t0)) / rate
        tail = g2 * a0**2 * np.exp(sigma * t0) / rate
        knots = self.times[(self.times > t0) & (self.times < s)]
        edges = np.concatenate([[t0], knots, [s]])
        total = tail
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(self._weighted_integrand, lo, hi, epsabs=0, epsrel=1e-13)
            total += val
        return float(total)

    def _weighted_integrand(self, xi: float) -> float:
        return float(np.exp(self.domain.sigma * xi) * self.dual_norm2(xi))

    def weighted_integral_quadrature(self, s: float, window: float | None = None) -> float:
        """Adaptive quadrature of the weighted integral, window by window back from ``s``.

        Independent of the closed forms; stops once a window adds less than
        1e-17 of the running total.
        """
        if self.is_zero:
            return 0.0
        sigma = self.domain.sigma
        window = window or 1.0 / sigma
        total, hi = 0.0, s
        for _ in range(100000):
            lo = hi - window
            val, _ = integrate.quad(
                self._weighted_integrand, lo, hi, epsabs=0, epsrel=1e-13, limit=200
            )
            total += val
            hi = lo
            if val <= 1e-17 * total:
                break
        return float(total)
