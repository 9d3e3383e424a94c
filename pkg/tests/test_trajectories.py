import math

import numpy as np
import pytest

from pullback_lab.forcing import ForcingProfile
from pullback_lab.oracle import OracleSystem
from pullback_lab.spaces import SpectralDomain, mode_pair, norm_E0, random_field
from pullback_lab.trajectories import (
    TrajectorySample,
    frechet_distance,
    frechet_prenorm,
    load_snapshot,
    save_snapshot,
    section_semidistance,
    semidistance,
    translate,
)

D = SpectralDomain(2, 8)
DT = 0.25


def rotating(h_max=12.0, e0=1.0, dt=DT, k=(1, 0), anchor=0.0):
    """A trajectory whose E0 norm is constant in time (the phase rotates)."""
    lam = D.lambda1 * (k[0] ** 2 + k[1] ** 2)
    n = round(h_max / dt)
    states = [mode_pair(D, k, norm=e0 * lam ** (D.delta / 2), phase=0.3 * i * dt).coefficients
              for i in range(n + 1)]
    return TrajectorySample(D, dt, np.array(states), anchor)


def random_trajectory(rng, h_max=12.0, dt=DT, scale=1.0):
    n = round(h_max / dt)
    states = [random_field(D, rng, norm=scale * rng.uniform(0.1, 3)).coefficients
              for _ in range(n + 1)]
    return TrajectorySample(D, dt, np.array(states))


def test_prenorm_of_zero():
    z = TrajectorySample(D, DT, np.zeros((49,) + D.field_shape, complex))
    assert frechet_prenorm(z, 8).value == 0.0


def test_prenorm_of_constant_unit_norm():
    u = rotating()
    assert norm_E0(u.state(7)) == pytest.approx(1.0, rel=1e-14)
    for i_max in (4, 8, 12):
        p = frechet_prenorm(u, i_max)
        assert p.tail == 2.0**-i_max
        assert p.value == pytest.approx(0.5 * (1 - 2.0**-i_max), rel=1e-14)
        assert abs(p.value - 0.5) <= p.tail


def test_prenorm_bounded_and_monotone_in_i_max():
    rng = np.random.default_rng(0)
    for _ in range(10):
        u = random_trajectory(rng, scale=100.0)
        vals = [frechet_prenorm(u, i).value for i in range(1, 13)]
        assert all(0 <= v < 1 for v in vals)
        assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_prenorm_definite_on_horizon():
    rng = np.random.default_rng(1)
    u = random_trajectory(rng)
    assert frechet_distance(u, u, 8) == 0.0
    c = u.coefficients.copy()
    c[20] += random_field(D, rng, 1e-6).coefficients
    v = TrajectorySample(D, DT, c)
    assert frechet_distance(u, v, 8) > 0


def test_prenorm_requires_horizon():
    with pytest.raises(ValueError):
        frechet_prenorm(rotating(h_max=5.0), 8)


def test_translate_identity_and_semigroup():
    u = random_trajectory(np.random.default_rng(2))
    assert np.array_equal(translate(u, 0.0).coefficients, u.coefficients)
    ab = translate(translate(u, 0.5), 1.25)
    direct = translate(u, 1.75)
    assert np.array_equal(ab.coefficients, direct.coefficients)
    assert ab.anchor_time == direct.anchor_time == 1.75


def test_translate_rejects_off_grid_and_negative():
    u = rotating()
    with pytest.raises(ValueError):
        translate(u, 0.1)
    with pytest.raises(ValueError):
        translate(u, -0.25)
    with pytest.raises(ValueError):
        translate(u, 13.0)


def test_translate_matches_oracle_solution():
    g = mode_pair(D, (1, 1), norm=0.8)
    oracle = OracleSystem(ForcingProfile.exponential(g, alpha=0.2))
    b = random_field(D, np.random.default_rng(3), 2.0)
    tau = -1.5
    u = oracle.trajectory(b, tau, 6.0, DT)
    for h in (0.25, 1.0, 3.5):
        got = translate(u, h).state(0)
        want = oracle.solve_exact(b, tau, tau + h)
        assert np.max(np.abs(got.coefficients - want.coefficients)) <= 1e-10


def test_translation_bound():
    rng = np.random.default_rng(4)
    for _ in range(100):
        u = random_trajectory(rng, h_max=14.0, scale=rng.choice([0.01, 1.0, 100.0]))
        h = DT * rng.integers(0, 17)
        shifted = frechet_prenorm(translate(u, h), 8).value
        assert shifted <= 2 ** math.ceil(h) * frechet_prenorm(u, 8).value + 1e-15


def test_semidistance_singleton():
    u = random_trajectory(np.random.default_rng(5))
    assert semidistance([u], [u]) == 0.0


def test_semidistance_constant_offset():
    u = random_trajectory(np.random.default_rng(6))
    w = rotating()
    shifted = TrajectorySample(D, DT, u.coefficients + w.coefficients)
    assert semidistance([u], [shifted], 8) == pytest.approx(0.5, abs=2.0**-8)


def test_semidistance_triangle_property():
    rng = np.random.default_rng(7)
    for _ in range(5):
        A, B, C = ([random_trajectory(rng, scale=s) for _ in range(3)] for s in (0.3, 1.0, 0.1))
        assert semidistance(A, B) <= semidistance(A, C) + semidistance(C, B) + 1e-15


def test_semidistance_is_asymmetric():
    rng = np.random.default_rng(8)
    u = random_trajectory(rng)
    far = random_trajectory(rng, scale=50.0)
    assert semidistance([u], [u, far]) == 0.0
    assert semidistance([u, far], [u]) > 0.0


def test_semidistance_empty_target():
    with pytest.raises(ValueError):
        semidistance([rotating()], [])
    with pytest.raises(ValueError):
        section_semidistance([D.zeros()], [])


def test_section_semidistance():
    u = mode_pair(D, (1, 0), norm=1.0)
    assert section_semidistance([u], [u, D.zeros()]) == 0.0
    assert section_semidistance([u], [D.zeros()]) == pytest.approx(norm_E0(u))


def test_snapshot_round_trip(tmp_path):
    u = random_trajectory(np.random.default_rng(9), h_max=2.0)
    u = TrajectorySample(u.domain, u.dt, u.coefficients, anchor_time=-3.5)
    path = tmp_path / "u.npz"
    save_snapshot(u, path)
    v = load_snapshot(path)
    assert v.domain == u.domain
    assert v.dt == u.dt and v.anchor_time == u.anchor_time
    assert np.array_equal(v.coefficients, u.coefficients)
    with np.load(path) as z:
        assert z["coefficients"].dtype == np.dtype("<f8")
        assert z["coefficients"].shape == u.coefficients.shape + (2,)
        assert list(z["domain"]) == [2, 8, D.box_length, 1.0, 1.0]


def test_norms_csv(tmp_path):
    u = rotating(h_max=1.0)
    path = tmp_path / "n.csv"
    u.write_norms_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,normH2,normV2"
    assert len(lines) == len(u) + 1


def test_sample_validation():
    with pytest.raises(ValueError):
        TrajectorySample(D, 0.0, np.zeros((2,) + D.field_shape, complex))
    with pytest.raises(ValueError):
        TrajectorySample(D, 0.1, np.zeros((2, 3, 8, 8), complex))
    bad = np.zeros((2,) + D.field_shape, complex)
    bad[1, 0, 1, 0] = np.nan
    with pytest.raises(ValueError):
        TrajectorySample(D, 0.1, bad)
