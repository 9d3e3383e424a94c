"""Brochettes: time-indexed families of sets.

Ball brochettes over the phase space are stored as radius functions
(``RadiusBrochette``); brochettes over the trajectory space are finite
trajectory sets keyed by time (``TrajectoryBrochette``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .spaces import SpectralDomain, SpectralField, norm_H, random_field
from .trajectories import TrajectorySample, translate

# (initial state, anchor time tau, horizon) -> sampled solution
Solver = Callable[[SpectralField, float, float], TrajectorySample]

RADIUS_KINDS = ("constant", "exponential", "table", "min", "max")
MONOTONE_GRID_POINTS = 1000


@dataclass(frozen=True, eq=False)
class RadiusBrochette:
    """Balls ``{||w|| <= r(t)}`` in H.

    kinds and parameters:
      constant     rho
      exponential  a * exp(beta t)
      table        log-linear interpolation of ``(times, radii)`` with
                   exponential extensions ``exp(left_rate (t - t0))`` before
                   and ``exp(right_rate (t - t_end))`` after the table
      min / max    pointwise min / max of ``parts``
    """

    kind: str
    rho: float = 1.0
    a: float = 1.0
    beta: float = 0.0
    times: np.ndarray | None = field(default=None, repr=False)
    radii: np.ndarray | None = field(default=None, repr=False)
    left_rate: float = 0.0
    right_rate: float = 0.0
    parts: tuple["RadiusBrochette", ...] = ()

    def __post_init__(self):
        if self.kind not in RADIUS_KINDS:
            raise ValueError(f"unknown radius kind {self.kind!r}")
        if self.kind == "constant" and not self.rho > 0:
            raise ValueError("constant radius must be positive")
        if self.kind == "exponential" and not self.a > 0:
            raise ValueError("exponential prefactor must be positive")
        if self.kind == "table":
            t = np.asarray(self.times, dtype=float)
            r = np.asarray(self.radii, dtype=float)
            if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
                raise ValueError("radius table needs >= 2 strictly increasing times")
            if r.shape != t.shape or np.any(r <= 0):
                raise ValueError("radius table needs positive radii, one per time")
        if self.kind in ("min", "max") and not self.parts:
            raise ValueError(f"{self.kind} brochette needs parts")

    @classmethod
    def constant(cls, rho: float) -> "RadiusBrochette":
        return cls("constant", rho=rho)

    @classmethod
    def exponential(cls, a: float, beta: float) -> "RadiusBrochette":
        return cls("exponential", a=a, beta=beta)

    @classmethod
    def table(cls, times, radii, left_rate: float, right_rate: float | None = None):
        times = np.asarray(times, dtype=float)
        radii = np.asarray(radii, dtype=float)
        if right_rate is None and len(times) >= 2 and times[-1] > times[-2] \
                and np.all(radii[-2:] > 0):
            right_rate = float(np.log(radii[-1] / radii[-2]) / (times[-1] - times[-2]))
        return cls("table", times=times, radii=radii, left_rate=left_rate,
                   right_rate=0.0 if right_rate is None else right_rate)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.rho)
        if self.kind == "exponential":
            return self.a * np.exp(self.beta * t)
        if self.kind == "table":
            t0, t1 = self.times[0], self.times[-1]
            logr = np.interp(t, self.times, np.log(self.radii))
            logr = np.where(t < t0, np.log(self.radii[0]) + self.left_rate * (t - t0), logr)
            logr = np.where(t > t1, np.log(self.radii[-1]) + self.right_rate * (t - t1), logr)
            return np.exp(logr)
        vals = np.array([p(t) for p in self.parts])
        return vals.min(axis=0) if self.kind == "min" else vals.max(axis=0)

    def left_growth(self) -> float:
        """Exponential rate of ``r`` as ``t -> -inf``."""
        if self.kind == "constant":
            return 0.0
        if self.kind == "exponential":
            return self.beta
        if self.kind == "table":
            return self.left_rate
        rates = [p.left_growth() for p in self.parts]
        # as t -> -inf the smallest rate dominates a max, the largest a min
        return min(rates) if self.kind == "max" else max(rates)

    def weighted_square(self, s, sigma: float):
        """``exp(sigma s) r(s)^2``."""
        return np.exp(sigma * np.asarray(s, dtype=float)) * self(s) ** 2


@dataclass(frozen=True)
class ClassDCertificate:
    ok: bool
    limit_ok: bool
    monotone_ok: bool
    reason: str
    failing_s: float | None
    grid: tuple[float, float, int]

    def __bool__(self) -> bool:
        return self.ok


def is_class_D(
    r: RadiusBrochette, sigma: float, window: tuple[float, float] = (-20.0, 20.0)
) -> ClassDCertificate:
    """Check ``exp(sigma s) r(s)^2 -> 0`` at -inf and that it increases.

    The limit is decided from the closed-form growth rate at -inf; the
    monotonicity on a fixed 1000-point grid over ``window`` with strict
    increments exceeding 1e-12 relative.
    """
    lo, hi = window
    grid = (float(lo), float(hi), MONOTONE_GRID_POINTS)
    rate = sigma + 2 * r.left_growth()
    limit_ok = rate > 0
    s = np.linspace(lo, hi, MONOTONE_GRID_POINTS)
    w = r.weighted_square(s, sigma)
    inc = np.diff(w) > 1e-12 * np.abs(w[:-1])
    monotone_ok = bool(np.all(inc))
    failing = None
    reasons = []
    if not limit_ok:
        reasons.append(
            f"exp(sigma s) r(s)^2 does not vanish as s -> -inf (sigma + 2*rate = {rate:.6g} <= 0)"
        )
        failing = float("-inf")
    if not monotone_ok:
        i = int(np.argmin(inc)) + 1
        failing = float(s[i]) if failing is None else failing
        reasons.append(f"exp(sigma s) r(s)^2 is not increasing at s = {s[i]:.6g}")
    return ClassDCertificate(
        limit_ok and monotone_ok, limit_ok, monotone_ok, "; ".join(reasons) or "ok", failing, grid
    )


def brochette_intersect(b: RadiusBrochette, other: RadiusBrochette) -> RadiusBrochette:
    return RadiusBrochette("min", parts=(b, other))


def brochette_union_hull(b: RadiusBrochette, other: RadiusBrochette) -> RadiusBrochette:
    """Smallest ball brochette containing both (pointwise max radius)."""
    return RadiusBrochette("max", parts=(b, other))


def brochette_contains(
    outer: RadiusBrochette, inner: RadiusBrochette, window: tuple[float, float] = (-20.0, 20.0)
) -> bool:
    """True iff ``inner_t`` is contained in ``outer_t`` on the sampling grid."""
    s = np.linspace(*window, MONOTONE_GRID_POINTS)
    return bool(np.all(inner(s) <= outer(s)))


class TrajectoryBrochette(dict):
    """Finite trajectory sets keyed by (grid-aligned) time ``t``."""

    def section(self, t: float) -> list[TrajectorySample]:
        return self[_key(self, t)]


def _key(b: dict, t: float):
    for k in b:
        if abs(k - t) <= 1e-9 * max(1.0, abs(t)):
            return k
    raise KeyError(t)


def translate_brochette(p: TrajectoryBrochette, h: float) -> TrajectoryBrochette:
    """``(T(h) P)_t = T(h) P_{t-h}``."""
    out = TrajectoryBrochette()
    for t, trajs in p.items():
        out[t + h] = [translate(v, h) for v in trajs]
    return out


def trajectory_intersect(
    p: TrajectoryBrochette, q: TrajectoryBrochette, atol: float = 1e-12
) -> TrajectoryBrochette:
    """Pointwise set intersection; trajectories match if they agree to ``atol``."""
    out = TrajectoryBrochette()
    for t, trajs in p.items():
        try:
            others = q.section(t)
        except KeyError:
            continue
        out[t] = [u for u in trajs if any(_same(u, v, atol) for v in others)]
    return out


def _same(u: TrajectorySample, v: TrajectorySample, atol: float) -> bool:
    return (
        u.coefficients.shape == v.coefficients.shape
        and abs(u.dt - v.dt) <= 1e-12 * u.dt
        and np.allclose(u.coefficients, v.coefficients, rtol=0, atol=atol)
    )


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    anchor_time: float
    radius: float
    initial_states: tuple[SpectralField, ...]
    trajectories: tuple[TrajectorySample, ...] = ()

    def evolve(self, solver: "Solver", h_max: float) -> "TrajectoryEnsemble":
        """Ensemble with ``trajectories`` filled by ``solver(a, tau, h_max)``."""
        trajs = tuple(solver(a, self.anchor_time, h_max) for a in self.initial_states)
        return TrajectoryEnsemble(self.anchor_time, self.radius, self.initial_states, trajs)


def radical_inverse(j: int, base: int = 2) -> float:
    """Van der Corput point ``j`` in (0, 1): stratified and nested in ``j``."""
    x, f = 0.0, 1.0 / base
    while j:
        j, digit = divmod(j, base)
        x += digit * f
        f /= base
    return x


def sample_ensemble(
    domain: SpectralDomain,
    D: RadiusBrochette,
    tau: float,
    count: int,
    seed: int,
    slope: float = 0.0,
    solver: "Solver | None" = None,
    h_max: float | None = None,
) -> TrajectoryEnsemble:
    """Deterministic initial states in the ball of radius ``D(tau)``.

    State 0 sits on the boundary sphere; state ``j > 0`` has radius
    ``D(tau) * radical_inverse(j)``. Directions come from per-index seeded
    streams, so an ensemble of size ``n`` is a prefix of any larger one.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rho = float(D(tau))
    states = []
    for j in range(count):
        rng = np.random.default_rng([seed, j])
        frac = 1.0 if j == 0 else radical_inverse(j)
        states.append(random_field(domain, rng, norm=rho * frac, slope=slope))
    ens = TrajectoryEnsemble(float(tau), rho, tuple(states))
    return ens.evolve(solver, h_max) if solver is not None else ens


def ensemble_within_ball(ens: TrajectoryEnsemble, atol: float = 1e-12) -> bool:
    return all(norm_H(a) <= ens.radius + atol for a in ens.initial_states)

