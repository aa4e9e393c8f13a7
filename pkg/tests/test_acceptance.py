"""End-to-end acceptance checks on the canonical configuration.

Each test prints one ``PASS``/``FAIL`` line naming its criterion.  The
long runs (T = 5 and T = 20 at n = 256, T = 20 at n = 512) are shared
through module-scoped fixtures; the whole module takes several minutes.
"""

import math

import numpy as np
import pytest

from kse2d import diagnostics as dg
from kse2d.cli import observed_temporal_order, run_simulation, spatial_study, temporal_study
from kse2d.config import canonical_config
from kse2d.grid import Grid
from kse2d.io import build_initial_state, l2_distance
from kse2d.picard import picard_run
from kse2d.timestepper import StepControl, integrate

Q_LIST = (1.0, 2.0, 4.0, 8.0, math.inf)


@pytest.fixture
def report(capsys):
    def emit(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number:2d} ({title}): {detail}")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def canonical_run():
    cfg = canonical_config()
    sim = run_simulation(cfg, keep=10)
    assert sim.ok, sim.blowup
    return cfg, sim


@pytest.fixture(scope="module")
def long_runs():
    runs = {}
    for n in (256, 512):
        sim = run_simulation(canonical_config(grid__n=n, step__t_end=20.0))
        runs[n] = sim
    return runs


def test_mass_conservation(canonical_run, report):
    _, sim = canonical_run
    m0 = sim.records[0].mass_rho
    drift = max(abs(r.mass_rho - m0) for r in sim.records) / m0
    report(1, "mass conservation", drift <= 1e-10, f"max relative drift {drift:.2e} (tol 1e-10)")


def test_c_lq_monotone(canonical_run, report):
    _, sim = canonical_run
    worst = 0.0
    for q in Q_LIST:
        series = np.array([r.lq_c[q] for r in sim.records])
        rise = np.max(np.diff(series)) / series[0]
        worst = max(worst, rise)
    ok = worst <= 1e-8
    report(2, "L^q monotonicity of c", ok, f"largest relative increase {worst:.2e} over q in {{1,2,4,8,inf}} (tol 1e-8)")


def test_c_max_principle(canonical_run, report):
    _, sim = canonical_run
    c0 = sim.records[0].lq_c[math.inf]
    worst = max(r.lq_c[math.inf] for r in sim.records) / c0
    report(3, "max principle for c", worst <= 1 + 1e-8, f"max ||c||_inf / ||c0||_inf = {worst:.12f}")


def test_nonnegativity(canonical_run, report):
    _, sim = canonical_run
    s0 = build_initial_state(canonical_config())
    rho_ratio = min(r.min_rho for r in sim.records) / s0.rho.max()
    c_ratio = min(r.min_c for r in sim.records) / s0.c.max()
    ok = rho_ratio >= -1e-8 and c_ratio >= -1e-8
    report(4, "nonnegativity", ok, f"min rho / max rho0 = {rho_ratio:.3e}, min c / max c0 = {c_ratio:.3e}")


def test_circulation(canonical_run, report):
    _, sim = canonical_run
    om0 = sim.records[0].lq_omega[2.0]
    worst = max(abs(r.circulation) for r in sim.records) / om0
    report(5, "circulation", worst <= 1e-12, f"max |int omega| / ||omega0||_2 = {worst:.2e} (tol 1e-12)")


@pytest.mark.parametrize("preset", ["canonical", "bump"])
def test_euler_transport(preset, report):
    # bump with rho_amp = c_amp = 0 gives constant density, no chemical and a
    # vorticity that is not a steady state.
    cfg = canonical_config(ic__preset=preset, ic__c_amp=0.0, ic__rho_amp=0.0, ic__omega_amp=1.0 if preset == "bump" else 0.1)
    sim = run_simulation(cfg)
    assert sim.ok, sim.blowup
    s0 = build_initial_state(cfg)
    assert not s0.c.any() and np.ptp(s0.rho) == 0.0
    drift = {}
    for q in (2.0, 4.0):
        base = sim.records[0].lq_omega[q]
        drift[q] = max(abs(r.lq_omega[q] - base) for r in sim.records) / base
    ok = max(drift.values()) <= 1e-6
    report(6, f"Euler transport, {preset} vorticity", ok, f"relative drift L2 {drift[2.0]:.2e}, L4 {drift[4.0]:.2e} (tol 1e-6)")


@pytest.mark.parametrize("r,q,order", [(2, math.inf, 1), (1, 2, 0), (2, math.inf, 2)])
def test_heat_exponents(r, q, order, report):
    slope, expected = dg.heat_decay_slope(r, q, order, times=np.logspace(-3, -1, 9), n=512)
    err = abs(slope - expected) / abs(expected)
    report(7, f"heat exponent (r={r}, q={q}, |alpha|={order})", err < 0.05, f"slope {slope:.5f} vs {expected:.5f}")


def test_temporal_convergence(report):
    rows = temporal_study(canonical_config(), (2e-3, 1e-3, 5e-4), 0.5)
    order = observed_temporal_order(rows)
    diffs = ", ".join(f"{r['difference']:.3e}" for r in rows[:2])
    report(8, "temporal self-convergence", order >= 2.5, f"observed order {order:.3f}, successive differences {diffs}")


def test_spatial_accuracy(report):
    cfg = canonical_config(ic__preset="bump", ic__width=0.3, ic__c_amp=0.5, ic__omega_amp=1.0)
    rows = spatial_study(cfg, (64, 128, 256), 0.1, 1e-3)
    drop = rows[1]["drop"]
    report(8, "spatial spectral accuracy", drop >= 10, f"L2 error {rows[0]['difference']:.2e} -> {rows[1]['difference']:.2e}, drop {drop:.3g}")


def test_picard_contraction(report):
    cfg = canonical_config()
    data = build_initial_state(cfg)
    params = cfg.to_params()
    res = picard_run(data, params, T=0.1, dt=1e-3)
    direct = integrate(data, params, StepControl(t_end=0.1, sample_interval=0.1, dt_fixed=1e-3))
    diff = l2_distance(res.trajectory.state(res.trajectory.nt), direct)
    late = res.ratios[1:]
    ok = res.converged and bool(late) and max(late) <= 0.5 and diff <= 1e-6
    report(
        9,
        "Picard contraction",
        ok,
        f"{res.iterations} iterations, max ratio from iteration 2 {max(late, default=math.nan):.3g}, fixed point vs direct {diff:.2e}",
    )


def test_dissipation_identity(canonical_run, report):
    cfg, sim = canonical_run
    idx = np.linspace(0, len(sim.kept) - 1, 10).round().astype(int)
    states = [sim.kept[i] for i in idx]
    params = cfg.to_params()
    worst, signs = 0.0, True
    for q in (2.0, 4.0):
        for s in states:
            chk = dg.audit_dissipation_identity(s, params, q)
            worst = max(worst, chk.relative)
            signs &= chk.consumption <= 0.0
    ok = len(set(idx)) == 10 and worst < 1e-6 and signs
    report(10, "dissipation identity", ok, f"max relative residual {worst:.2e} at 10 states, consumption non-positive: {signs}")


def test_global_regularity_proxy(long_runs, report):
    coarse, fine = long_runs[256], long_runs[512]
    complete = coarse.ok and fine.ok and coarse.state.t == pytest.approx(20.0)
    tail = max(r.tail_fraction for r in coarse.records)
    y_finite = all(math.isfinite(r.Y_quantity) for r in coarse.records)
    rc, rf = dg.max_ratios(coarse.records), dg.max_ratios(fine.records)
    change = {k: abs(rf[k] - rc[k]) / rc[k] for k in dg.INEQUALITIES}
    ok = complete and tail < 1e-6 and y_finite and max(change.values()) < 0.10
    worst = max(change, key=change.get)
    report(
        11,
        "global-regularity proxy",
        ok,
        f"max tail fraction {tail:.2e}, Y finite: {y_finite}, largest ratio change {change[worst]:.2e} ({worst})",
    )


def test_inviscid_limit(report):
    base = canonical_config(step__t_end=1.0)
    ref = run_simulation(base)
    diffs = []
    for nu in (1e-2, 1e-3, 1e-4):
        sim = run_simulation(base.with_value("params.nu_u", nu))
        assert sim.ok
        diffs.append(l2_distance(sim.state, ref.state))
    ok = all(b < a for a, b in zip(diffs, diffs[1:]))
    report(12, "inviscid comparison", ok, "L2 differences vs nu_u=0: " + ", ".join(f"{d:.3e}" for d in diffs))


def test_calderon_zygmund_identity(report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(100):
        g = Grid(int(rng.choice([16, 32, 64, 128])), float(rng.uniform(1.0, 10.0)))
        w = rng.standard_normal(g.shape)
        if i % 2:
            # smooth field: low-pass white noise
            F = g.forward(w)
            F[~g.dealias_mask] = 0.0
            w = g.inverse(F)
        w -= w.mean()
        worst = max(worst, abs(dg.calderon_zygmund_ratio(g, w, 2.0) - 1.0))
    report(13, "Calderon-Zygmund q=2", worst <= 1e-10, f"max |ratio - 1| = {worst:.2e} over 100 fields")
