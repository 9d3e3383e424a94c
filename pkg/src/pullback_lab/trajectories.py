"""Sampled trajectories, the Frechet pre-norm of C([0, inf); E0), shifts and semidistances."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .spaces import SpectralDomain, SpectralField, norm_E0, norm_H, norm_V

SNAPSHOT_VERSION = 1


def _steps(h: float, dt: float) -> int:
    n = round(h / dt)
    if abs(n * dt - h) > 1e-9 * max(1.0, abs(h)):
        raise ValueError(f"shift {h} is not a multiple of the grid spacing {dt}")
    return n


@dataclass(frozen=True, eq=False)
class TrajectorySample:
    """A solution on the uniform grid ``h_i = i * dt``, ``i = 0..m``.

    ``anchor_time`` is the absolute initial time tau of the shifted problem;
    the state at grid point ``h`` is the solution at absolute time ``tau + h``.
    """

    domain: SpectralDomain
    dt: float
    coefficients: np.ndarray = field(repr=False)
    anchor_time: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("grid spacing must be positive")
        if self.coefficients.ndim != self.domain.dimension + 2 or \
                self.coefficients.shape[1:] != self.domain.field_shape:
            raise ValueError("coefficient blocks do not match the domain")
        if len(self.coefficients) < 1:
            raise ValueError("empty trajectory")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("trajectory has non-finite states")

    def __len__(self) -> int:
        return len(self.coefficients)

    def __iter__(self):
        return (self.state(i) for i in range(len(self)))

    def state(self, i: int) -> SpectralField:
        return SpectralField(self.domain, self.coefficients[i])

    def at(self, h: float) -> SpectralField:
        return self.state(_steps(h, self.dt))

    @property
    def time_grid(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    @property
    def h_max(self) -> float:
        return (len(self) - 1) * self.dt

    def __sub__(self, other: "TrajectorySample") -> "TrajectorySample":
        n = min(len(self), len(other))
        if abs(self.dt - other.dt) > 1e-12 * self.dt:
            raise ValueError("trajectories live on different grids")
        return TrajectorySample(
            self.domain, self.dt,
            self.coefficients[:n] - other.coefficients[:n], self.anchor_time,
        )

    def h_norms(self) -> np.ndarray:
        axes = tuple(range(1, self.coefficients.ndim))
        return np.sqrt(self.domain.volume * np.sum(np.abs(self.coefficients) ** 2, axis=axes))

    def e0_norms(self) -> np.ndarray:
        lam = self.domain.laplacian_symbol ** self.domain.delta
        axes = tuple(range(1, self.coefficients.ndim))
        return np.sqrt(self.domain.volume * np.sum(np.abs(self.coefficients) ** 2 / lam, axis=axes))

    def write_norms_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "normH2", "normV2"])
            for h, s in zip(self.time_grid, self):
                w.writerow([repr(float(self.anchor_time + h)),
                            repr(norm_H(s) ** 2), repr(norm_V(s) ** 2)])


class PrenormValue(NamedTuple):
    value: float
    tail: float


def frechet_prenorm(v: TrajectorySample, i_max: int = 8) -> PrenormValue:
    """Partial sum ``sum_{i<=i_max} 2^-i n_i / (1 + n_i)`` and its tail bound ``2^-i_max``.

    ``n_i`` is the largest E0 norm over grid points in ``[0, i]``.
    """
    if i_max < 1:
        raise ValueError("i_max must be positive")
    if v.h_max < i_max - 1e-9:
        raise ValueError(f"horizon {v.h_max} is shorter than i_max = {i_max}")
    norms = v.e0_norms()
    running = np.maximum.accumulate(norms)
    total = 0.0
    for i in range(1, i_max + 1):
        n = running[min(len(running) - 1, math.floor(i / v.dt + 1e-9))]
        total += 2.0**-i * n / (1.0 + n)
    return PrenormValue(total, 2.0**-i_max)


def translate(u: TrajectorySample, h: float) -> TrajectorySample:
    """Shift ``T(h)``: the state at ``s`` becomes the old state at ``s + h``."""
    if h < 0:
        raise ValueError("shift must be nonnegative")
    n = _steps(h, u.dt)
    if n >= len(u):
        raise ValueError(f"shift {h} exceeds horizon {u.h_max}")
    return TrajectorySample(u.domain, u.dt, u.coefficients[n:], u.anchor_time + n * u.dt)


def frechet_distance(u: TrajectorySample, v: TrajectorySample, i_max: int = 8) -> float:
    return frechet_prenorm(u - v, i_max).value


def semidistance(
    source: Iterable[TrajectorySample],
    target: Sequence[TrajectorySample],
    i_max: int = 8,
) -> float:
    """``sup_u inf_v`` of the Frechet distance; not symmetric."""
    target = list(target)
    if not target:
        raise ValueError("target set is empty")
    worst = 0.0
    for u in source:
        worst = max(worst, min(frechet_distance(u, v, i_max) for v in target))
    return worst


def section_semidistance(
    source: Iterable[SpectralField], target: Sequence[SpectralField]
) -> float:
    """``sup_u inf_v ||u - v||_E0`` for point sets in the phase space."""
    target = list(target)
    if not target:
        raise ValueError("target set is empty")
    worst = 0.0
    for u in source:
        worst = max(worst, min(norm_E0(u - v) for v in target))
    return worst


# snapshot container (.npz):
#   version        int
#   domain         float64[5] = (dimension, modes_per_axis, box_length, viscosity, delta)
#   anchor_time    float64
#   time_grid      float64[m+1]
#   coefficients   float64[m+1, d, N, ..., N, 2], last axis = (real, imag)
# all reals are stored little-endian ('<f8').

def save_snapshot(u: TrajectorySample, path) -> None:
    d = u.domain
    le = np.dtype("<f8")
    np.savez(
        path,
        version=np.array(SNAPSHOT_VERSION),
        domain=np.array([d.dimension, d.modes_per_axis, d.box_length, d.viscosity, d.delta], le),
        anchor_time=np.array(u.anchor_time, le),
        time_grid=u.time_grid.astype(le),
        coefficients=np.stack([u.coefficients.real, u.coefficients.imag], axis=-1).astype(le),
    )


def load_snapshot(path) -> TrajectorySample:
    with np.load(path) as z:
        if int(z["version"]) != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {int(z['version'])}")
        dim, n, length, eta, delta = z["domain"]
        domain = SpectralDomain(int(dim), int(n), float(length), float(eta), float(delta))
        grid = z["time_grid"]
        raw = z["coefficients"]
        dt = float(grid[1] - grid[0]) if len(grid) > 1 else 1.0
        return TrajectorySample(domain, dt, raw[..., 0] + 1j * raw[..., 1], float(z["anchor_time"]))
