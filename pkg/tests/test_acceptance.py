"""Acceptance suite: one group of tests per criterion.

Each group is tagged with ``@pytest.mark.criterion``; the conftest hook
prints one PASS/FAIL line per criterion at the end of the run.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from pullback_lab.attractor import (
    AbsorptionEstimate,
    calibrate_constants,
    check_absorption,
    compute_R1,
    estimate_mpa_section,
    fit_rate,
    grid_aligned_tau,
)
from pullback_lab.brochettes import RadiusBrochette, is_class_D, sample_ensemble
from pullback_lab.cli import main
from pullback_lab.forcing import ForcingProfile
from pullback_lab.navier_stokes import SolverConfig, integrate, ns_solver, skew_defect
from pullback_lab.oracle import OracleSystem, verify_process_equivalence
from pullback_lab.spaces import SpectralDomain, mode_pair, norm_E0, norm_H, random_field
from pullback_lab.trajectories import (
    TrajectorySample,
    frechet_prenorm,
    section_semidistance,
    translate,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# pinned tolerances
SKEW_TOL = 1e-10
ENERGY_C = 1.0
RICHARDSON_FACTOR = 1.8
GENERIC_RATE_TOL = 0.02
LOWEST_RATE_TOL = 0.005
ABSORPTION_ABS = 1e-6
ABSORPTION_C = 1.0
TAU0_REL = 1e-9
CENTER_TOL = 1e-6
INVARIANCE_TOL = 1e-12
RATE_TOL = 0.05
SECTION_LAW_TOL = 1e-8


# 1. skew-symmetry of the damped convection term ------------------------------

@pytest.mark.criterion(1, "skew-symmetry <B_M(u),u> = 0")
@pytest.mark.parametrize("domain", [SpectralDomain(2, 16), SpectralDomain(3, 8)],
                         ids=["2d-N16", "3d-N8"])
def test_skew_symmetry(domain, record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    Ms = [0.1, 1.0, 10.0, 100.0, math.inf]
    worst = 0.0
    for i in range(100):
        u = random_field(domain, rng, norm=rng.uniform(0.5, 3.0), slope=rng.uniform(0, 2))
        worst = max(worst, skew_defect(u, Ms[i % len(Ms)]))
    elapsed = time.perf_counter() - start
    record_property("detail", f"{domain.dimension}d worst relative defect {worst:.2e} "
                              f"(tol {SKEW_TOL:g}, {elapsed:.1f}s)")
    assert worst <= SKEW_TOL
    assert elapsed < 60


# 2. energy inequality on nonlinear scenarios -------------------------------

D2 = SpectralDomain(2, 12)
D3 = SpectralDomain(3, 8)


def _scenarios():
    rng = np.random.default_rng(7)

    def rand(d, norm, slope=1.0):
        return random_field(d, rng, norm=norm, slope=slope)

    low2 = mode_pair(D2, (1, 0), norm=3.0)
    low3 = mode_pair(D3, (1, 0, 0), norm=2.0)
    g2 = rand(D2, 3.0)
    g3 = rand(D3, 2.0)
    out = [
        ("periodic", D2, ForcingProfile.periodic(g2, 2.0), rand(D2, 4.0), 20.0),
        ("exponential-growing", D2, ForcingProfile.exponential(rand(D2, 2.0), 0.3),
         rand(D2, 3.0), 20.0),
        ("exponential-decaying", D2, ForcingProfile.exponential(rand(D2, 4.0), -0.3),
         rand(D2, 3.0), 20.0),
        ("tabulated", D2, ForcingProfile.tabulated(rand(D2, 3.0), [0, 0.5, 1, 2],
                                                   [1, -2, 3, 0.5], 0.2), rand(D2, 4.0), 20.0),
        ("unforced-large-data", D2, ForcingProfile.zero(D2), rand(D2, 8.0), 5.0),
        ("near-saturated-periodic", D2, ForcingProfile.periodic(low2, 0.1),
         low2 * (1 / D2.sigma) + rand(D2, 0.05), 20.0),
        ("near-saturated-tabulated", D2,
         ForcingProfile.tabulated(low2, [0, 1, 2], [1.0, 1.2, 0.9], 0.0),
         low2 * (1 / D2.sigma) + rand(D2, 0.05), 20.0),
        ("strong-regularization", D2, ForcingProfile.periodic(g2, 1.0), rand(D2, 5.0), 0.5),
        ("3d-periodic", D3, ForcingProfile.periodic(g3, 1.5), rand(D3, 3.0), 20.0),
        ("3d-near-saturated", D3, ForcingProfile.periodic(low3, 0.1),
         low3 * (1 / D3.sigma) + rand(D3, 0.05), 20.0),
    ]
    return out


SCENARIOS = _scenarios()


@pytest.mark.criterion(2, "energy inequality, min margin >= -C dt, Richardson")
@pytest.mark.parametrize("name,domain,forcing,a,M", SCENARIOS, ids=[s[0] for s in SCENARIOS])
def test_energy_inequality(name, domain, forcing, a, M, record_property):
    dt, h_max = 0.01, 2.0
    margins = {}
    for step in (dt, dt / 2):
        cfg = SolverConfig(domain, M, step, forcing)
        traj, ledger = integrate(a, 0.0, h_max, cfg, record_every=round(dt / step))
        margins[step] = ledger.energy_margin()
    coarse, fine = margins[dt], margins[dt / 2]
    worst = float(coarse[1:].min())
    negative = coarse < 0
    reduction = math.inf
    if np.any(negative):
        fine_neg = np.minimum(fine[negative], 0.0)
        worst_fine = float(-fine_neg.min())
        reduction = float(-coarse[negative].min()) / worst_fine if worst_fine else math.inf
    record_property("detail", f"{name}: min margin {worst:.3e}, "
                              f"halving factor {reduction:.2f}")
    assert worst >= -ENERGY_C * dt
    assert float(fine.min()) >= -ENERGY_C * dt / 2
    assert reduction >= RICHARDSON_FACTOR


# 3. the sigma chain: unforced decay rates ----------------------------------

def _norm_rate(traj: TrajectorySample) -> float:
    """Exponential rate of ||u(h)|| from a least-squares fit of log ||u||."""
    return fit_rate(traj.time_grid, traj.h_norms())


@pytest.mark.criterion(3, "unforced decay rate vs sigma")
def test_generic_decay_rate(record_property):
    d = SpectralDomain(2, 12, viscosity=0.8)
    cfg = SolverConfig(d, 20.0, 0.01, ForcingProfile.zero(d))
    rng = np.random.default_rng(3)
    rates, energy_rates = [], []
    for _ in range(5):
        a = random_field(d, rng, norm=rng.uniform(1, 6), slope=rng.uniform(0, 2))
        traj, _ = integrate(a, 0.0, 4.0, cfg, record_every=10)
        rates.append(_norm_rate(traj))
        energy_rates.append(fit_rate(traj.time_grid, traj.h_norms() ** 2))
    worst = min(rates) / d.sigma
    worst_energy = min(energy_rates) / d.sigma
    record_property("detail", f"generic rate/sigma min {worst:.4f} on ||u||, "
                              f"{worst_energy:.4f} on ||u||^2 (>= {1 - GENERIC_RATE_TOL})")
    assert worst >= 1 - GENERIC_RATE_TOL
    assert worst_energy >= 1 - GENERIC_RATE_TOL


@pytest.mark.criterion(3, "unforced decay rate vs sigma")
def test_lowest_mode_decay_rate(record_property):
    d = SpectralDomain(2, 12, viscosity=0.8)
    cfg = SolverConfig(d, 20.0, 0.01, ForcingProfile.zero(d), linear=True)
    a = mode_pair(d, (0, 1), norm=2.0) + mode_pair(d, (1, 0), norm=1.0, phase=0.7)
    traj, _ = integrate(a, 0.0, 4.0, cfg, record_every=10)
    rate = _norm_rate(traj) / d.sigma
    energy_rate = fit_rate(traj.time_grid, traj.h_norms() ** 2) / d.sigma
    record_property("detail", f"lowest-mode rate/sigma {rate:.6f} "
                              f"(energy ||u||^2 decays at {energy_rate:.4f} sigma)")
    assert abs(rate - 1) <= LOWEST_RATE_TOL


# 4. absorption -------------------------------------------------------------

ABS_DOMAIN = SpectralDomain(2, 12)
ABS_DT = 0.01


def _absorption_brochettes():
    s = ABS_DOMAIN.sigma
    return {
        "ball-5": RadiusBrochette.constant(5.0),
        "exp-shrinking": RadiusBrochette.exponential(4.0, -0.3 * s),
        "exp-growing": RadiusBrochette.exponential(2.0, 0.5),
        "table": RadiusBrochette.table([-4.0, 0.0, 4.0], [6.0, 4.0, 5.0], left_rate=-0.2 * s),
        "hull": RadiusBrochette("max", parts=(RadiusBrochette.constant(2.0),
                                              RadiusBrochette.exponential(3.0, -0.2 * s))),
    }


@pytest.fixture(scope="module")
def absorption_setup():
    g = random_field(ABS_DOMAIN, np.random.default_rng(3), 2.0, slope=1.0)
    forcing = ForcingProfile.periodic(g, omega=1.0)
    cal = calibrate_constants(ABS_DOMAIN, sample_count=200, holdout_count=1000)
    cfg = SolverConfig(ABS_DOMAIN, M=50.0, dt=ABS_DT, forcing=forcing)
    return forcing, cal, cfg


@pytest.mark.criterion(4, "absorption into P_t for tau <= tau0")
@pytest.mark.parametrize("name", list(_absorption_brochettes()))
def test_absorption(name, absorption_setup, record_property):
    forcing, cal, cfg = absorption_setup
    D = _absorption_brochettes()[name]
    assert is_class_D(D, ABS_DOMAIN.sigma)
    assert cal.holdout_violations == 0
    est = AbsorptionEstimate(forcing, D, cal.R2, cal.R3)
    tol = ABSORPTION_ABS + ABSORPTION_C * ABS_DT
    solver = ns_solver(cfg)
    window = 1.0
    worst_e, worst_d, runs = math.inf, math.inf, 0
    for t in (-2.0, 0.0, 3.0):
        tau0 = grid_aligned_tau(est.tau0(t), t, ABS_DT)
        for tau in (tau0, tau0 - 2, tau0 - 5):
            tau = grid_aligned_tau(tau, t, ABS_DT)
            ens = sample_ensemble(ABS_DOMAIN, D, tau, 4, 11, slope=1.0, solver=solver,
                                  h_max=t - tau + window)
            rep = check_absorption(ens, t, est, cfg, window, tol)
            worst_e = min(worst_e, rep.energy_margin)
            worst_d = min(worst_d, rep.derivative_margin)
            runs += 1
            assert rep.passed, (t, tau, rep)
    record_property("detail", f"{name}: {runs} runs, min relative margins "
                              f"energy {worst_e:.3f}, derivative {worst_d:.3f}")


# 5. tau0 closed forms ------------------------------------------------------

@pytest.mark.criterion(5, "tau0 closed form and monotonicity")
def test_tau0_closed_form(record_property):
    start = time.perf_counter()
    d = SpectralDomain(2, 8, viscosity=0.6)
    f = ForcingProfile.zero(d)
    worst = 0.0
    for rho in (1.01, 2.0, 10.0, 1e3):
        est = AbsorptionEstimate(f, RadiusBrochette.constant(rho))
        for t in (-5.0, -0.3, 0.0, 2.0, 7.5):
            want = t - math.log(rho**2) / d.sigma
            worst = max(worst, abs(est.tau0(t) - want) / max(abs(want), 1e-300))
    g = random_field(d, np.random.default_rng(1), 2.0)
    monotone = True
    for forcing in (f, ForcingProfile.periodic(g, 1.0), ForcingProfile.exponential(g, 0.2)):
        est = AbsorptionEstimate(forcing, RadiusBrochette.exponential(3.0, -0.1))
        taus = [est.tau0(t) for t in np.linspace(-5, 5, 50)]
        monotone &= bool(np.all(np.diff(taus) > 0))
    elapsed = time.perf_counter() - start
    record_property("detail", f"max relative error {worst:.1e}, strictly increasing: "
                              f"{monotone} ({elapsed:.2f}s)")
    assert worst <= TAU0_REL
    assert monotone
    assert elapsed < 1.0


# 6-8. linear oracle ----------------------------------------------------------

OR_DOMAIN = SpectralDomain(2, 16, viscosity=0.7)


def _oracle():
    g = random_field(OR_DOMAIN, np.random.default_rng(5), norm=1.0, slope=1.0)
    return OracleSystem(ForcingProfile.exponential(g, alpha=0.1))


OR_BROCHETTES = [RadiusBrochette.constant(1.0), RadiusBrochette.exponential(3.0, -0.2),
                 RadiusBrochette.constant(10.0)]


@pytest.mark.criterion(6, "oracle equivalence")
def test_oracle_equivalence(record_property):
    oracle = _oracle()
    t = 0.0
    rep = verify_process_equivalence(oracle, OR_BROCHETTES, t, t - 60.0 / OR_DOMAIN.sigma,
                                     cluster_tol=1e-6, count=8, seed=0)
    record_property("detail", f"clusters {rep.clusters}, center error {rep.center_error:.1e}, "
                              f"invariance {rep.invariance_error:.1e}, rate/sigma "
                              f"{rep.decay_rate / OR_DOMAIN.sigma:.4f}")
    checks = rep.checks(CENTER_TOL, INVARIANCE_TOL, RATE_TOL)
    assert all(c["pass"] for c in checks), checks


def _oracle_section(oracle, s):
    return estimate_mpa_section(OR_BROCHETTES, s, s - 60.0 / OR_DOMAIN.sigma, 1e-6,
                                oracle.forcing, oracle.solver(60.0 / OR_DOMAIN.sigma))


@pytest.mark.criterion(7, "section law U(t, t-h) A_{t-h} = A_t")
def test_section_law(record_property):
    oracle = _oracle()
    t = 1.0
    at_t = _oracle_section(oracle, t).points
    worst = 0.0
    for h in (1.0, 2.0, 4.0):
        earlier = _oracle_section(oracle, t - h).points
        moved = [oracle.solve_exact(p, t - h, t) for p in earlier]
        gap = max(section_semidistance(moved, at_t), section_semidistance(at_t, moved))
        gap_h = max(norm_H(p - q) for p in moved for q in at_t)
        worst = max(worst, gap, gap_h)
    record_property("detail", f"max gap {worst:.1e} over h in (1, 2, 4)")
    assert worst <= SECTION_LAW_TOL


@pytest.mark.criterion(8, "estimated sections lie in the attractor ball")
def test_mpa_in_D_oracle(record_property):
    oracle = _oracle()
    worst = math.inf
    for t in (-3.0, 0.0, 3.0):
        r_A = math.sqrt(2 * math.exp(-OR_DOMAIN.sigma * t) * compute_R1(oracle.forcing, t))
        for p in _oracle_section(oracle, t).points:
            worst = min(worst, r_A - norm_H(p))
    record_property("detail", f"oracle min slack {worst:.3f}")
    assert worst >= 0


@pytest.mark.criterion(8, "estimated sections lie in the attractor ball")
def test_mpa_in_D_unforced_nonlinear(record_property):
    d = SpectralDomain(2, 8)
    f = ForcingProfile.zero(d)
    cfg = SolverConfig(d, 5.0, 0.1, f)
    D_list = [RadiusBrochette.constant(3.0), RadiusBrochette.exponential(2.0, -0.3)]
    worst = math.inf
    for t in (0.0, 2.0):
        est = estimate_mpa_section(D_list, t, t - 20.0, 1e-6, f, ns_solver(cfg), count=3)
        r_A = AbsorptionEstimate(f, D_list[0]).attractor_radius(t)
        assert len(est.points) == 1
        for p in est.points:
            worst = min(worst, r_A - norm_H(p))
    record_property("detail", f"nonlinear unforced min slack {worst:.3f}")
    assert worst >= 0


# 9. Frechet pre-norm -------------------------------------------------------

@pytest.mark.criterion(9, "Frechet pre-norm properties")
def test_frechet_prenorm(record_property):
    start = time.perf_counter()
    d = SpectralDomain(2, 8)
    dt, i_max = 0.25, 8
    rng = np.random.default_rng(9)

    def sample(h_max, scale):
        n = round(h_max / dt)
        return TrajectorySample(d, dt, np.array([
            random_field(d, rng, norm=scale * rng.uniform(0.01, 2)).coefficients
            for _ in range(n + 1)]))

    unit = np.array([
        mode_pair(d, (1, 0), norm=math.sqrt(d.lambda1), phase=0.1 * i).coefficients
        for i in range(round(i_max / dt) + 1)])
    const = TrajectorySample(d, dt, unit)
    assert norm_E0(const.state(3)) == pytest.approx(1.0)
    half = frechet_prenorm(const, i_max).value
    in_range = True
    worst_ratio = 0.0
    for _ in range(100):
        u = sample(i_max + 4, rng.choice([0.01, 1.0, 1e3]))
        v = frechet_prenorm(u, i_max).value
        in_range &= 0 <= v < 1
        h = dt * int(rng.integers(0, 17))
        shifted = frechet_prenorm(translate(u, h), i_max).value
        worst_ratio = max(worst_ratio, shifted / (2 ** math.ceil(h) * v))
    elapsed = time.perf_counter() - start
    record_property("detail", f"constant unit norm -> {half:.6f}, max T(h) ratio "
                              f"{worst_ratio:.3f} ({elapsed:.1f}s)")
    assert in_range
    assert abs(half - 0.5) <= 2.0**-i_max
    assert worst_ratio <= 1.0
    assert elapsed < 10


# 10. reproducibility ---------------------------------------------------------

@pytest.mark.criterion(10, "byte-identical CSV artifacts across runs")
@pytest.mark.parametrize("config", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_reproducible_artifacts(config, tmp_path, record_property):
    outputs = []
    for run in ("first", "second"):
        out = tmp_path / run
        assert main(["run", str(CONFIGS / config), "--set", f"output_dir={out}"]) == 0
        outputs.append({p.relative_to(out): p.read_bytes() for p in out.glob("*.csv")})
    assert outputs[0] and outputs[0] == outputs[1]
    record_property("detail", f"{config}: {len(outputs[0])} csv identical")
