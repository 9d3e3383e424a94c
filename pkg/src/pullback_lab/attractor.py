"""Absorbing-brochette bounds and empirical pullback-attraction measurements.

The absorbing brochette ``P`` consists of trajectories with

    ||u(h)||^2 <= 2 exp(-sigma (t + h)) R1(t + h),
    ||u'(h)||_{V3*} <= eta R2 ||u(h)|| + R3 ||u(h)||^2 + ||f(t + h)||_{V3*},

    R1(s) = exp(sigma s) + (1/eta) int_{-inf}^s exp(sigma xi) ||f(xi)||^2_{V*} dxi,

and every ensemble started in ``D_tau`` with ``tau <= tau0(D, t)`` enters
``P_t`` after the shift ``T(t - tau)``, where ``tau0 = chi^{-1}(R1(t))`` and
``chi(s) = max(exp(sigma s) r_D(s)^2, R1(s))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .brochettes import RadiusBrochette, Solver, TrajectoryEnsemble, sample_ensemble
from .forcing import ForcingProfile
from .navier_stokes import SolverConfig, derivative_dual_margins, regularized_convection
from .spaces import (
    SpectralDomain,
    SpectralField,
    e0_vector,
    norm_dual,
    norm_H,
    random_field,
)
from .trajectories import TrajectorySample, section_semidistance, semidistance, translate


class PreconditionError(ValueError):
    """Raised when an experiment is requested outside the range a bound covers."""


def compute_R1(f: ForcingProfile, s: float, method: str = "closed") -> float:
    """``R1(s)``; ``method="quadrature"`` integrates the weighted forcing adaptively."""
    d = f.domain
    if method == "closed":
        integral = f.weighted_integral(s)
    elif method == "quadrature":
        integral = f.weighted_integral_quadrature(s)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(math.exp(d.sigma * s) + integral / d.viscosity)


@dataclass(frozen=True, eq=False)
class AbsorptionEstimate:
    forcing: ForcingProfile
    D: RadiusBrochette
    R2: float = 0.0
    R3: float = 0.0

    @property
    def sigma(self) -> float:
        return self.forcing.domain.sigma

    def R1(self, s: float) -> float:
        return compute_R1(self.forcing, s)

    def chi(self, s: float) -> float:
        return max(float(self.D.weighted_square(s, self.sigma)), self.R1(s))

    def tau0(self, t: float) -> float:
        return compute_tau0(self.D, t, self)

    def energy_bound(self, s: float) -> float:
        """``2 exp(-sigma s) R1(s)``: the squared H radius of ``P`` at absolute time ``s``."""
        return 2.0 * math.exp(-self.sigma * s) * self.R1(s)

    def attractor_radius(self, t: float) -> float:
        """``r_A(t) = sqrt(2 exp(-sigma t) R1(t))``."""
        return math.sqrt(self.energy_bound(t))


def compute_tau0(D: RadiusBrochette, t: float, est: AbsorptionEstimate,
                 max_expansions: int = 1000) -> float:
    """Solve ``chi(tau0) = R1(t)`` by bisection; the result never exceeds the root."""
    target = est.R1(t)
    if est.chi(t) <= target:
        return float(t)
    hi, lo, width = float(t), float(t) - 1.0, 1.0
    for _ in range(max_expansions):
        if est.chi(lo) < target:
            break
        hi = lo
        width *= 2.0
        lo = hi - width
    else:
        raise RuntimeError(
            f"no bracket for tau0 after {max_expansions} expansions; "
            "is the radius brochette in class D?"
        )
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if est.chi(mid) < target:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class AbsorptionReport:
    passed: bool
    energy_passed: bool
    derivative_passed: bool
    energy_margin: float
    derivative_margin: float
    tolerance: float
    worst_energy: tuple[int, float]
    worst_derivative: tuple[int, float]
    tau0: float


def check_absorption(
    ensemble: TrajectoryEnsemble,
    t: float,
    est: AbsorptionEstimate,
    cfg: SolverConfig,
    h_window: float,
    tol: float = 1e-6,
    derivative: bool = True,
) -> AbsorptionReport:
    """Verify ``T(t - tau) u`` lies in ``P_t`` on ``[0, h_window]`` for every ensemble member.

    Margins are relative to the right-hand sides; a check passes if its
    worst relative margin is ``>= -tol``.
    """
    tau = ensemble.anchor_time
    tau0 = est.tau0(t)
    if tau > tau0:
        raise PreconditionError(f"tau = {tau:.6g} exceeds tau0(D, {t:.6g}) = {tau0:.6g}")
    if not ensemble.trajectories:
        raise ValueError("ensemble has no trajectories")
    e_worst, e_at = math.inf, (-1, math.nan)
    d_worst, d_at = math.inf, (-1, math.nan)
    for n, u in enumerate(ensemble.trajectories):
        v = translate(u, t - tau)
        count = round(h_window / v.dt) + 1
        if count > len(v):
            raise ValueError("trajectory too short for the requested window")
        hs = v.time_grid[:count]
        bounds = np.array([est.energy_bound(t + h) for h in hs])
        vals = v.h_norms()[:count] ** 2
        rel = (bounds - vals) / bounds
        i = int(np.argmin(rel))
        if rel[i] < e_worst:
            e_worst, e_at = float(rel[i]), (n, float(hs[i]))
        if derivative:
            margins = derivative_dual_margins(v, cfg, est.R2, est.R3, range(count))
            rhs = np.array([_derivative_rhs(v, i, cfg, est) for i in range(count)])
            scale = np.where(rhs > 0, rhs, 1.0)
            drel = margins / scale
            j = int(np.argmin(drel))
            if drel[j] < d_worst:
                d_worst, d_at = float(drel[j]), (n, float(hs[j]))
    e_ok = e_worst >= -tol
    d_ok = (not derivative) or d_worst >= -tol
    return AbsorptionReport(
        e_ok and d_ok, e_ok, d_ok, e_worst, d_worst if derivative else math.nan,
        tol, e_at, d_at, tau0,
    )


def _derivative_rhs(v: TrajectorySample, i: int, cfg: SolverConfig,
                    est: AbsorptionEstimate) -> float:
    u = norm_H(v.state(i))
    t = v.anchor_time + v.time_grid[i]
    f3 = math.sqrt(float(cfg.forcing.dual_norm2(t, 3)))
    return cfg.domain.viscosity * est.R2 * u + est.R3 * u * u + f3


def grid_aligned_tau(tau: float, t: float, dt: float) -> float:
    """Largest ``t - n dt`` not exceeding ``tau``."""
    n = math.ceil((t - tau) / dt - 1e-9)
    return t - n * dt


@dataclass(frozen=True)
class DecayCurve:
    taus: np.ndarray
    distances: np.ndarray
    tail_bound: float
    rate: float
    mode: str

    def rows(self):
        for tau, dist in zip(self.taus, self.distances):
            yield float(tau), float(dist), self.tail_bound, self.rate


def fit_rate(elapsed: np.ndarray, distances: np.ndarray) -> float:
    """Least-squares rate ``r`` of ``d ~ C exp(-r elapsed)``; nan with < 2 usable points."""
    elapsed = np.asarray(elapsed, dtype=float)
    distances = np.asarray(distances, dtype=float)
    keep = distances > 0
    if keep.sum() < 2:
        return math.nan
    slope = np.polyfit(elapsed[keep], np.log(distances[keep]), 1)[0]
    return float(-slope)


def pullback_decay(
    D: RadiusBrochette,
    t: float,
    taus: Sequence[float],
    target: Sequence,
    solver: Solver,
    domain: SpectralDomain,
    mode: str = "section",
    count: int = 8,
    seed: int = 0,
    i_max: int = 8,
) -> DecayCurve:
    """Semidistance from shifted ensembles started at each ``tau`` to ``target``.

    ``mode="trajectory"`` uses the Frechet distance of ``T(t - tau) u`` to a
    set of trajectories; ``mode="section"`` the E0 distance of ``u(t - tau)``
    to a set of phase-space points.
    """
    if mode not in ("section", "trajectory"):
        raise ValueError(f"unknown mode {mode!r}")
    target = list(target)
    if not target:
        raise ValueError("target set is empty")
    taus = np.asarray(taus, dtype=float)
    if np.any(np.diff(taus) >= 0):
        raise ValueError("tau values must be strictly decreasing")
    if np.any(taus > t):
        raise ValueError("tau values must not exceed t")
    dists = []
    for tau in taus:
        elapsed = t - tau
        if mode == "section":
            ens = sample_ensemble(domain, D, tau, count, seed)
            if elapsed > 0:
                ens = ens.evolve(solver, elapsed)
                points = [u.state(len(u) - 1) for u in ens.trajectories]
            else:
                points = list(ens.initial_states)
            dists.append(section_semidistance(points, target))
        else:
            ens = sample_ensemble(domain, D, tau, count, seed, solver=solver,
                                  h_max=elapsed + i_max)
            shifted = [translate(u, elapsed) for u in ens.trajectories]
            dists.append(semidistance(shifted, target, i_max))
    dists = np.array(dists)
    tail = 2.0**-i_max if mode == "trajectory" else 0.0
    return DecayCurve(taus, dists, tail, fit_rate(t - taus, dists), mode)


@dataclass(frozen=True, eq=False)
class SectionEstimate:
    points: list[SpectralField]
    sizes: list[int]
    endpoints: list[SpectralField] = field(repr=False)


def cluster_points(points: Sequence[SpectralField], cluster_tol: float) -> SectionEstimate:
    """Complete-linkage clusters of diameter ``<= cluster_tol`` in the E0 norm."""
    points = list(points)
    if len(points) == 1:
        return SectionEstimate(points, [1], points)
    vecs = np.array([e0_vector(p) for p in points])
    labels = fcluster(linkage(vecs, "complete"), cluster_tol, criterion="distance")
    reps, sizes = [], []
    for lab in sorted(set(labels), key=lambda l: int(np.argmax(labels == l))):
        members = [p for p, l in zip(points, labels) if l == lab]
        mean = sum(members[1:], members[0]) * (1.0 / len(members))
        reps.append(mean)
        sizes.append(len(members))
    return SectionEstimate(reps, sizes, points)


def estimate_mpa_section(
    D_list: Sequence[RadiusBrochette],
    t: float,
    tau_deep: float,
    cluster_tol: float,
    forcing: ForcingProfile,
    solver: Solver,
    count: int = 8,
    seed: int = 0,
    burn_in: float | None = None,
) -> SectionEstimate:
    """Cluster the endpoints ``u(t - tau_deep)`` of ensembles drawn from every ``D``."""
    domain = forcing.domain
    burn_in = 5.0 / domain.sigma if burn_in is None else burn_in
    deepest = min(AbsorptionEstimate(forcing, D).tau0(t) for D in D_list)
    if tau_deep > deepest - burn_in:
        raise PreconditionError(
            f"tau_deep = {tau_deep:.6g} must not exceed min tau0 - burn_in = {deepest - burn_in:.6g}"
        )
    endpoints = []
    for n, D in enumerate(D_list):
        ens = sample_ensemble(domain, D, tau_deep, count, seed + n, solver=solver,
                              h_max=t - tau_deep)
        endpoints.extend(u.state(len(u) - 1) for u in ens.trajectories)
    return cluster_points(endpoints, cluster_tol)


@dataclass(frozen=True)
class Calibration:
    R2: float
    R3: float
    observed_max: float
    holdout_max: float
    holdout_violations: int
    holdout_count: int
    safety: float
    rigorous_R3: float


def linear_factor(domain: SpectralDomain) -> float:
    """``max_k ||A e_k||_{V3*} / ||e_k|| = max_k lambda_k^{-1/2}``."""
    lam = domain.eigenvalues
    return float(np.max(lam / lam**1.5))


def sobolev_R3(domain: SpectralDomain) -> float:
    """A guaranteed ``R3``: ``sqrt(sum_k lambda_k^-2 / L^d)`` over retained wavevectors.

    Follows from ``|<div W, phi>| <= ||W||_{L1} sup |grad phi|`` with
    ``|W| <= |u|^2`` pointwise and Cauchy-Schwarz on the Fourier series.
    """
    lam = domain.eigenvalues
    return float(np.sqrt(np.sum(lam**-2.0) / domain.volume))


def convection_ratio(u: SpectralField, M: float, points: int | None = None) -> float:
    return norm_dual(regularized_convection(u, M, points), 3) / norm_H(u) ** 2


def calibrate_constants(
    domain: SpectralDomain,
    sample_count: int = 200,
    seed: int = 0,
    M: float = math.inf,
    safety: float = 1.1,
    holdout_count: int = 1000,
    slopes: Sequence[float] = (0.0, 1.0, 2.0),
    refine_top: int = 3,
    refine_steps: int = 300,
) -> Calibration:
    """``R2`` in closed form and ``R3`` as ``safety`` times the largest observed ratio.

    Samples cycle through the amplitude-spectrum ``slopes``. The ``refine_top``
    best samples are then pushed uphill by random-perturbation ascent, so the
    observed maximum tracks a local supremum of the ratio instead of the
    sampling tail. The holdout set uses an independent stream. ``M = inf``
    (no damping) gives the largest ratio, since damping only shrinks the
    flux pointwise.
    """
    def draw(rng, i):
        return random_field(domain, rng, slope=slopes[i % len(slopes)])

    rng = np.random.default_rng([seed, 0])
    fields = [draw(rng, i) for i in range(sample_count)]
    observed = np.array([convection_ratio(u, M) for u in fields])
    best = float(observed.max())
    ascent = np.random.default_rng([seed, 2])
    for i in np.argsort(observed)[::-1][:refine_top]:
        best = max(best, _ascend(fields[i], float(observed[i]), M, ascent, refine_steps))
    R3 = safety * best

    rng = np.random.default_rng([seed, 1])
    holdout = np.array([convection_ratio(draw(rng, i), M) for i in range(holdout_count)])
    return Calibration(
        R2=linear_factor(domain),
        R3=R3,
        observed_max=best,
        holdout_max=float(holdout.max()) if holdout.size else math.nan,
        holdout_violations=int(np.sum(holdout > R3)),
        holdout_count=int(holdout.size),
        safety=safety,
        rigorous_R3=sobolev_R3(domain),
    )


def _ascend(u: SpectralField, value: float, M: float, rng: np.random.Generator,
            steps: int, scale: float = 0.3) -> float:
    for _ in range(steps):
        v = u + random_field(u.domain, rng, norm=scale * norm_H(u))
        v = v * (1.0 / norm_H(v))
        r = convection_ratio(v, M)
        if r > value:
            u, value = v, r
        else:
            scale *= 0.995
    return value
