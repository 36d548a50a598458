"""Acceptance criteria, one test (or parametrized group) per criterion.

Each test carries an ``acceptance`` marker; ``conftest.py`` prints one
``ACCEPTANCE PASS|FAIL|SKIP`` line per criterion at the end of the run.
"""
import math
import os
import time

import numpy as np
import pytest
from scipy import integrate

from sedsim import conjecture as cj
from sedsim.config import RunConfig
from sedsim.constants import PhysicalConstants
from sedsim.conjecture import place_orbit
from sedsim.dynamics import orbit_elements, physical_state, state_from_physical
from sedsim.ensemble import run_ensemble
from sedsim.field import (FrequencyGrid, build_field, correlation_EE_limit, correlation_EE_theory,
                          correlation_survey, mode_terms)
from sedsim.integrator import FieldSource, FixedCutoff, IntegratorConfig, MovingCutoff, Trajectory, propagate
from sedsim.reduction import ReductionPlan, chunked_sum

from oracles import circular_decay_radius_cubed, correlation_direct

pytestmark = pytest.mark.acceptance_suite

RUN_LONG = os.environ.get("SEDSIM_RUN_LONG") == "1"


@pytest.mark.acceptance("field correlation")
def test_field_correlation(measured):
    start = time.perf_counter()
    res = correlation_survey(N=1000, seeds=200, max_mode=50_000, cutoff_scale=8.0,
                             lags=(0.0, 0.5, 1.0, 5.0), n_origins=100, master_seed=0)
    elapsed = time.perf_counter() - start
    for kind in ("E", "A"):
        err = res[kind]["relative_error"]
        measured(f"C_{kind}{kind} max rel err {err.max():.4f}")
        assert np.all(err < 0.05), (kind, err)
    # the closed forms themselves against a direct mode sum
    for lag, th in zip(res["lags"], res["E"]["theory"]):
        assert th == pytest.approx(correlation_direct(lag, 1000, 8.0, 3), rel=1e-9)
    for lag, th in zip(res["lags"], res["A"]["theory"]):
        assert th == pytest.approx(correlation_direct(lag, 1000, 8.0, 1), rel=1e-9)
    measured(f"{elapsed:.1f} s")
    assert elapsed < 120


@pytest.mark.acceptance("N to infinity convergence")
@pytest.mark.parametrize("a", [PhysicalConstants(Z=1).cutoff_scale, 8.0])
def test_continuum_limit(a, measured):
    start = time.perf_counter()
    ratios = []
    for N in (100, 1000, 10_000):
        lim = correlation_EE_limit(1.0, a)
        ratios.append(abs(correlation_EE_theory(1.0, N, a) - lim) / abs(lim))
    assert time.perf_counter() - start < 1.0
    assert ratios[0] > ratios[1] > ratios[2]
    assert ratios[2] < 1e-3
    measured(f"a={a:.3g}: " + ", ".join(f"{x:.2e}" for x in ratios))


@pytest.mark.acceptance("Kepler conservation")
@pytest.mark.parametrize("eps", [0.0, 0.5, 0.9])
def test_kepler_conservation(eps, measured):
    r0, v0 = place_orbit(2.0, math.sqrt(1 - eps * eps), [0, 0, 1], [1, 0, 0])
    cfg = IntegratorConfig(field_enabled=False, steps_per_orbit=4000, sample_interval=10.0)
    tr = Trajectory(None, PhysicalConstants(Z=1, coupling=0.0), cfg, r0, v0)
    rec = tr.run(math.inf, max_orbits=100)
    assert rec.orbits == 100
    a, b = orbit_elements(r0, v0), orbit_elements(*tr.physical())
    dE, dL, de = abs(b.energy / a.energy - 1), abs(b.L / a.L - 1), abs(b.eps - a.eps)
    measured(f"eps={eps}: dE/E {dE:.1e} dL/L {dL:.1e} d(eps) {de:.1e}")
    assert dE < 1e-8 and dL < 1e-8 and de < 1e-8


@pytest.mark.acceptance("damping-only decay")
@pytest.mark.slow
@pytest.mark.parametrize("form", ["newton", "s_form"])
def test_damping_decay(form, measured):
    c = PhysicalConstants(Z=3)
    t_end = (1.0 - 0.9**3) / (6 * c.beta**2)  # r reaches 0.9 on the oracle
    cfg = IntegratorConfig(field_enabled=False, formulation=form, sample_interval=20.0)
    rec = Trajectory(None, c, cfg, [1.0, 0, 0], [0, 1.0, 0]).run(t_end)
    pred = np.array([circular_decay_radius_cubed(1.0, c.beta, t) for t in rec.t])
    err = np.max(np.abs(rec.r**3 / pred - 1))
    measured(f"{form}: max |r^3/oracle - 1| = {err:.1e} over {rec.orbits} orbits")
    assert rec.r[-1] <= 0.9 + 1e-3
    assert err < 0.01


@pytest.mark.acceptance("formulation equivalence")
@pytest.mark.slow
def test_formulation_equivalence(measured):
    c = PhysicalConstants(Z=1)
    N, M, steps = 50, 1000, 4000
    f = build_field(2024, FrequencyGrid(N, M), c.cutoff_scale)
    r0, v0 = np.array([1.0, 0, 0]), np.array([0, 1.0, 0.1])
    ends = {}
    for form, bounds in [("newton", (N, M)), ("s_form", (N, M)), ("pure_gc", (0, M)),
                         ("mixed_gc", (N, M))]:
        src = FieldSource(f, bounds, interpolate=False)
        s = state_from_physical(form, r0, v0, src.bundle(0.0), c.beta)
        s = propagate(s, 2 * math.pi / steps, 10 * steps, src, c.beta)
        ends[form] = physical_state(s, src.bundle(s.t), c.beta)[0]
    worst = max(np.linalg.norm(ends[a] - ends[b]) for a in ends for b in ends)
    measured(f"max pairwise |dr| {worst:.1e}")
    assert worst < 1e-6


@pytest.mark.acceptance("window-switch continuity")
@pytest.mark.parametrize("form", ["s_form", "pure_gc", "mixed_gc", "newton"])
def test_window_switch_continuity(form, measured):
    c = PhysicalConstants(Z=1)
    N = 300
    f = build_field(77, FrequencyGrid(N, 4000), c.cutoff_scale)
    r0, v0 = place_orbit(2.0, 0.8, [0, 0, 1], [1, 0, 0])
    lo = N if form == "mixed_gc" else 0
    cfg = IntegratorConfig(formulation=form, cutoff=FixedCutoff(lo, 1500), steps_per_orbit=4000)
    tr = Trajectory(f, c, cfg, r0, v0)
    plan = [(31.0, lo, 1800), (77.7, lo + (N // 2 if lo else 0), 2200), (140.2, lo, 1200),
            (201.0, lo + (N // 3 if lo else 0), 3000), (260.5, lo, 1600)]
    tr.schedule_switches(plan)
    rec = tr.run(math.inf, max_orbits=50)
    sw = [e for e in rec.events if e["kind"] == "switch"]
    assert len(sw) == 5 and rec.orbits == 50
    jr = max(e["jump_r"] for e in sw)
    jv = max(e["jump_v"] for e in sw)
    measured(f"{form}: max jump |dr| {jr:.1e} |dv| {jv:.1e}")
    assert jr < 1e-12 and jv < 1e-12


@pytest.mark.acceptance("sampler law")
def test_sampler_law(measured):
    s = cj.sample_shapes(100_000, np.random.Generator(np.random.Philox(2024)))
    rep_R = cj.histogram_compare(s["R"], cj.pdf_R, 60, cdf=cj.cdf_R)
    rep_k = cj.histogram_compare(s["kappa"], cj.pdf_kappa, 60, cdf=cj.cdf_kappa)
    mean_R = float(np.mean(s["R"]))
    exact_mean = integrate.quad(lambda R: R * cj.pdf_R(R), 0, np.inf)[0]
    measured(f"KS R {rep_R.ks_statistic:.4f}, KS kappa {rep_k.ks_statistic:.4f} "
             f"(crit {rep_R.ks_critical_1pct:.4f}); mean R {mean_R:.4f}")
    assert rep_R.passes and rep_k.passes
    assert exact_mean == pytest.approx(2.5, rel=1e-10)
    assert abs(mean_R / 2.5 - 1) < 0.01
    assert np.array_equal(s["eps"], np.sqrt(1 - s["kappa"] ** 2))
    assert np.max(np.abs(s["kappa"] ** 2 + s["eps"] ** 2 - 1)) < 1e-15
    # the same law holds for the placed orbits
    rng = np.random.default_rng(5)
    for u1, u2 in rng.random((200, 2)):
        ic = cj.sample_initial_conditions(u1, u2, rng)
        assert ic.elements.kappa == pytest.approx(ic.kappa, rel=1e-12, abs=1e-12)
        assert ic.elements.R == pytest.approx(ic.R, rel=1e-12)


@pytest.mark.acceptance("marginalization oracle")
@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_marginalization(r, measured):
    est, err = cj.position_density_mc(r, 10_000_000, np.random.Generator(np.random.Philox(int(r * 10))))
    exact = math.exp(-2 * r) / math.pi
    measured(f"r={r}: rel err {est / exact - 1:+.1e} (mc sigma {err / exact:.1e})")
    assert abs(est / exact - 1) < 0.02


@pytest.mark.acceptance("momentum pdf limits")
def test_momentum_limits(measured):
    small = 1e-4
    lo = cj.pdf_p(small) / small / (45 / (4 * math.pi))
    hi = cj.pdf_p(1e3) * 1e3**9 / (16 / math.pi)
    measured(f"small-p ratio {lo:.5f}, large-p ratio {hi:.5f}")
    assert abs(lo - 1) < 0.005
    assert abs(hi - 1) < 0.01


@pytest.mark.acceptance("reduction fidelity")
def test_reduction_fidelity(measured):
    M = 1_000_000
    f = build_field(99, FrequencyGrid(10_000, M), PhysicalConstants(Z=1).cutoff_scale)
    terms = mode_terms(f, None, 123.456, "E")
    assert terms.shape == (M, 3)
    reference = np.array([math.fsum(terms[:, k]) for k in range(3)])  # independent oracle
    scale = np.sum(np.abs(terms), axis=0)
    results = [chunked_sum(terms, ReductionPlan(worker_count=w)) for w in (1, 2, 3, 8)]
    rel = np.max(np.abs(results[0] - reference) / np.abs(reference))
    measured(f"max rel err {rel:.1e} (condition {np.max(scale / np.abs(reference)):.0f})")
    assert rel < 1e-10
    for other in results[1:]:
        assert np.array_equal(other, results[0])


@pytest.mark.acceptance("qualitative ionisation trend")
@pytest.mark.skipif(not RUN_LONG, reason="long experiment (hours on one core); set SEDSIM_RUN_LONG=1. "
                    "As stated, 1e4 orbits is about 6.3e4 Bohr times, shorter than the 1e7 dwell, "
                    "so the detector cannot fire; see README")
def test_qualitative_trend(tmp_path, measured):
    cfg = RunConfig(Z=3, N=10_000, seed=2024, cutoff="fixed", max_orbits=10_000, t_max=math.inf,
                    ensemble_size=10, sample_interval=10.0, workers=os.cpu_count() or 1)
    res = run_ensemble(cfg, tmp_path)
    fired = [rec.ionisation_time is not None for rec in res.records.values()]
    eps_means = []
    for rec in res.records.values():
        pre = rec.truncated().regular()
        if len(pre) > 1:
            w = np.diff(pre.t)
            eps_means.append(float(np.sum(pre.eps[:-1] * w) / np.sum(w)))
    mean_eps = integrate.quad(lambda e: e * cj.pdf_eps(e), 0, 1)[0]
    measured(f"ionised {sum(fired)}/10; mean pre-ionisation eps {np.mean(eps_means):.3f} "
             f"vs {mean_eps:.3f}")
    assert sum(fired) >= 5
    assert all(m > mean_eps for m in eps_means)


@pytest.mark.acceptance("determinism and resume")
def test_determinism_and_resume(tmp_path, measured):
    cfg = RunConfig(Z=1, N=300, seed=11, t_max=120.0, ensemble_size=2, record_format="binary",
                    steps_per_orbit=1000, sample_interval=1.0)
    run_ensemble(cfg, tmp_path / "a")
    run_ensemble(cfg, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name

    c = PhysicalConstants(Z=3, coupling=20.0)  # fast decay so the moving cutoff switches
    f = build_field(5, FrequencyGrid(200, 4000), c.cutoff_scale)
    r0, v0 = place_orbit(2.0, 0.9, [0, 0, 1], [1, 0, 0])
    icfg = IntegratorConfig(cutoff=MovingCutoff(2.5, 0.2), steps_per_orbit=1000)
    full = Trajectory(f, c, icfg, r0, v0).run(2500.0)
    ck = tmp_path / "ck.npz"
    part = Trajectory(f, c, icfg, r0, v0)
    part.run(2500.0, max_orbits=81, checkpoint_path=ck, checkpoint_every=40)
    resumed = Trajectory.from_checkpoint(ck)
    assert resumed.orbits == 80
    switches_before = sum(e["kind"] == "switch" for e in resumed.events)
    again = resumed.run(2500.0)
    assert switches_before > 0 and sum(e["kind"] == "switch" for e in full.events) > switches_before
    assert again == full
    measured(f"{len(names)} output files identical; resume from orbit 80 "
             f"bit-exact across {sum(e['kind'] == 'switch' for e in full.events)} switches")
