"""Regularized Galerkin Navier-Stokes on the periodic box.

The semi-discrete system is

    u' = -eta A u - B_M(u) + f(t + tau),

    B_M(u)_j = P sum_i d_i ( u_i u_j / (1 + |u|^2 / M) ),

with ``A`` the Stokes operator and ``P`` the Galerkin-Leray projection. Time
stepping is exponential Euler: the viscous factor ``exp(-eta lambda_k dt)``
is applied exactly and ``-B_M(u) + f`` is frozen over the step, so the
diagonal flow with piecewise-constant forcing is integrated exactly.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .forcing import ForcingProfile
from .spaces import (
    SpectralDomain,
    SpectralField,
    grid_to_coefficients,
    inner,
    leray_project,
    norm_dual,
    norm_H,
    norm_V,
    to_grid,
)
from .trajectories import TrajectorySample

log = logging.getLogger(__name__)

# oversampling of the flux quadrature grid relative to the retained cutoff
QUAD_POINTS_PER_CUTOFF = 24
# extra oversampling per unit of sqrt(max|u|^2 / M): the damping factor
# 1/(1 + |u|^2/M) has complex singularities whose distance from the real
# axis shrinks like sqrt(M / max|u|^2)
QUAD_SHARPNESS_FACTOR = 10.0
# the adaptive grid never exceeds this many points in total
QUAD_MAX_POINTS = 2**22


class BlowUpError(RuntimeError):
    def __init__(self, time: float, message: str = ""):
        self.time = time
        super().__init__(message or f"non-finite coefficients at t = {time:.6g}")


def default_quad_points(domain: SpectralDomain, sharpness: float = 0.0) -> int:
    """Smallest even 5-smooth grid size resolving the damped flux to near machine precision.

    ``sharpness`` is ``sqrt(max|u|^2 / M)``.
    """
    per_cutoff = QUAD_POINTS_PER_CUTOFF
    if math.isfinite(sharpness):
        per_cutoff = max(per_cutoff, QUAD_SHARPNESS_FACTOR * sharpness)
    cap = int(QUAD_MAX_POINTS ** (1.0 / domain.dimension))
    p = max(math.ceil(per_cutoff * domain.cutoff), domain.modes_per_axis)
    if p > cap:
        log.warning("damped flux needs %d quadrature points per axis; capped at %d", p, cap)
        p = cap
    while not _smooth(p):
        p = p + 1 if p < cap else p - 1
    return p


def _smooth(n: int) -> bool:
    if n % 2:
        return False
    for f in (2, 3, 5):
        while n % f == 0:
            n //= f
    return n == 1


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Numerical setup of the regularized problem.

    ``dealias=True`` evaluates the damped flux on an oversampled quadrature
    grid (exact Galerkin image up to round-off); ``False`` uses the bare
    ``N^d`` collocation grid. ``linear=True`` switches the convection term off.
    """

    domain: SpectralDomain
    M: float
    dt: float
    forcing: ForcingProfile
    dealias: bool = True
    linear: bool = False
    quad_points: int | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.M > 0:
            raise ValueError("M must be positive")
        stiff = self.dt * self.domain.viscosity * self.domain.lambda_max
        if stiff > 10:
            raise ValueError(f"dt * eta * lambda_max = {stiff:.3g} exceeds 10")
        if self.forcing.domain != self.domain:
            raise ValueError("forcing lives on a different domain")

    @property
    def grid_points(self) -> int | None:
        """Fixed quadrature size, or ``None`` for the adaptive default."""
        if not self.dealias:
            return self.domain.modes_per_axis
        return self.quad_points


def regularized_convection(
    u: SpectralField, M: float, points: int | None = None
) -> SpectralField:
    """Galerkin image of ``div(u (x) u / (1 + |u|^2/M))``; ``M = inf`` is plain convection.

    Without ``points`` the quadrature grid is sized from ``max|u|^2 / M`` so
    that the pairing with ``u`` vanishes to round-off.
    """
    d = u.domain
    ug = to_grid(u, points or default_quad_points(d))
    if points is None and not math.isinf(M):
        peak = float(np.max(np.sum(ug**2, axis=0)))
        need = default_quad_points(d, math.sqrt(peak / M))
        if need > ug.shape[1]:
            ug = to_grid(u, need)
    if math.isinf(M):
        damp = 1.0
    else:
        damp = 1.0 / (1.0 + np.sum(ug**2, axis=0) / M)
    dim = d.dimension
    pairs = [(i, j) for i in range(dim) for j in range(i, dim)]
    flux = np.stack([damp * ug[i] * ug[j] for i, j in pairs])
    flux_hat = grid_to_coefficients(flux, d)
    k = d.wavevectors
    out = np.zeros(d.field_shape, dtype=complex)
    for (i, j), w in zip(pairs, flux_hat):
        out[j] += 1j * k[i] * w
        if i != j:
            out[i] += 1j * k[j] * w
    return leray_project(out, d)


def trilinear_regularized(u: SpectralField, M: float, points: int | None = None) -> SpectralField:
    return regularized_convection(u, M, points)


def rhs(state: SpectralField, t: float, cfg: SolverConfig) -> SpectralField:
    """Semi-discrete right-hand side ``-eta A u - B_M(u) + f(t)``."""
    return _explicit_part(state, t, cfg) - SpectralField(
        state.domain, cfg.domain.viscosity * cfg.domain.laplacian_symbol * state.coefficients
    )


def _explicit_part(state: SpectralField, t: float, cfg: SolverConfig) -> SpectralField:
    out = cfg.forcing(t)
    if not cfg.linear:
        out = out - regularized_convection(state, cfg.M, cfg.grid_points)
    return out


class _Propagator:
    def __init__(self, cfg: SolverConfig):
        d = cfg.domain
        z = d.viscosity * d.laplacian_symbol * cfg.dt
        self.decay = np.where(d.mask, np.exp(-z), 0.0)
        self.phi = np.where(d.mask, -np.expm1(-z) / z, 0.0) * cfg.dt

    def __call__(self, state: SpectralField, t: float, cfg: SolverConfig) -> SpectralField:
        n = _explicit_part(state, t, cfg)
        c = self.decay * state.coefficients + self.phi * n.coefficients
        if not np.all(np.isfinite(c)):
            raise BlowUpError(t + cfg.dt)
        return SpectralField(state.domain, c)


def step(state: SpectralField, t: float, cfg: SolverConfig) -> SpectralField:
    """Advance ``state`` from time ``t`` (absolute forcing time) by one ``dt``."""
    return _Propagator(cfg)(state, t, cfg)


@dataclass(frozen=True, eq=False)
class EnergyLedger:
    """Per-grid-point energy bookkeeping of one trajectory."""

    sigma: float
    eta: float
    h: np.ndarray
    normH2: np.ndarray
    normV2: np.ndarray
    dual_f2: np.ndarray
    weighted_integral: np.ndarray = field(repr=False)

    def energy_bound(self) -> np.ndarray:
        """Right side of the energy inequality at every grid point."""
        return np.exp(-self.sigma * self.h) * (
            self.normH2[0] + self.weighted_integral / self.eta
        )

    def energy_margin(self) -> np.ndarray:
        return self.energy_bound() - self.normH2

    def write_csv(self, path) -> None:
        margin = self.energy_margin()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "normH2", "normV2", "dual_f2", "weighted_integral", "energy_margin"])
            for row in zip(self.h, self.normH2, self.normV2, self.dual_f2,
                           self.weighted_integral, margin):
                w.writerow([repr(float(x)) for x in row])


def integrate(
    a: SpectralField,
    tau: float,
    h_max: float,
    cfg: SolverConfig,
    record_every: int = 1,
) -> tuple[TrajectorySample, EnergyLedger]:
    """Solve the problem shifted by ``tau`` on ``[0, h_max]`` from ``u(0) = a``.

    States are recorded every ``record_every`` steps; the weighted forcing
    integral is accumulated by the trapezoid rule on the full step grid.
    """
    dt = cfg.dt
    nsteps = round(h_max / dt)
    if nsteps < 1 or abs(nsteps * dt - h_max) > 1e-9 * max(1.0, h_max):
        raise ValueError(f"h_max = {h_max} is not a positive multiple of dt = {dt}")
    if nsteps % record_every:
        raise ValueError("record_every must divide the number of steps")
    d = cfg.domain
    sigma, eta = d.sigma, d.viscosity
    prop = _Propagator(cfg)

    hs = np.arange(nsteps + 1) * dt
    f2 = cfg.forcing.dual_norm2(tau + hs)
    weights = np.exp(sigma * hs) * f2
    cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (weights[1:] + weights[:-1]))])

    states = [a.coefficients]
    u = a
    for n in range(nsteps):
        try:
            u = prop(u, tau + n * dt, cfg)
        except BlowUpError as exc:
            raise BlowUpError(exc.time, f"blow-up at h = {(n + 1) * dt:.6g} "
                              f"(absolute time {tau + (n + 1) * dt:.6g}), dt = {dt}, M = {cfg.M}") from None
        if (n + 1) % record_every == 0:
            states.append(u.coefficients)

    traj = TrajectorySample(d, dt * record_every, np.array(states), tau)
    sel = slice(None, None, record_every)
    ledger = EnergyLedger(
        sigma=sigma,
        eta=eta,
        h=traj.time_grid,
        normH2=np.array([norm_H(s) ** 2 for s in traj]),
        normV2=np.array([norm_V(s) ** 2 for s in traj]),
        dual_f2=f2[sel],
        weighted_integral=cum[sel],
    )
    return traj, ledger


def ns_solver(cfg: SolverConfig, record_every: int = 1):
    """Ensemble solver ``(a, tau, h_max) -> TrajectorySample``."""
    return lambda a, tau, h_max: integrate(a, tau, h_max, cfg, record_every)[0]


@dataclass(frozen=True)
class MarginReport:
    passed: bool
    min_margin: float
    worst_h: float
    tolerance: float


def check_energy_inequality(
    traj: TrajectorySample, ledger: EnergyLedger, tol: float = 0.0
) -> MarginReport:
    """PASS iff ``bound(h) - ||u(h)||^2 >= -tol`` at every grid point."""
    if len(ledger.h) != len(traj):
        raise ValueError("ledger and trajectory have different grids")
    margin = ledger.energy_margin()
    i = int(np.argmin(margin))
    return MarginReport(bool(margin[i] >= -tol), float(margin[i]), float(ledger.h[i]), tol)


def derivative_dual_margins(
    traj: TrajectorySample, cfg: SolverConfig, R2: float, R3: float,
    indices=None,
) -> np.ndarray:
    """``eta R2 ||u|| + R3 ||u||^2 + ||f||_{V3*} - ||u'||_{V3*}`` per grid point.

    ``u'`` is the scheme's right-hand side at the grid point.
    """
    eta = cfg.domain.viscosity
    idx = range(len(traj)) if indices is None else indices
    out = []
    for i in idx:
        u = traj.state(i)
        t = traj.anchor_time + traj.time_grid[i]
        du = norm_dual(rhs(u, t, cfg), 3)
        un = norm_H(u)
        f3 = math.sqrt(float(cfg.forcing.dual_norm2(t, 3)))
        out.append(eta * R2 * un + R3 * un**2 + f3 - du)
    return np.array(out)


def derivative_dual_bound(
    traj: TrajectorySample, cfg: SolverConfig, R2: float, R3: float, tol: float = 0.0
) -> MarginReport:
    margins = derivative_dual_margins(traj, cfg, R2, R3)
    i = int(np.argmin(margins))
    return MarginReport(bool(margins[i] >= -tol), float(margins[i]),
                        float(traj.time_grid[i]), tol)


def skew_defect(u: SpectralField, M: float, points: int | None = None) -> float:
    """``|<B_M(u), u>|`` relative to ``||u||_H ||u||_V^2``."""
    b = regularized_convection(u, M, points)
    scale = norm_H(u) * norm_V(u) ** 2
    return abs(inner(b, u)) / scale if scale else 0.0
