"""Acceptance criteria AC1-AC12.

Each test records one PASS/FAIL line (shown in the terminal summary and on
stdout with ``-s``).  The long-running quantum criteria (AC6, AC9, AC11,
AC12) take several minutes in total on one core.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

import oracles
from saddlescatter.amplitude import (SearchSpec, assemble, branch_data, critical_order_exponents, find_branches,
                                     flux_normalized, interference_frequency, maslov_index, modified_action,
                                     semiclassical_leading_amplitude, sigma_hat)
from saddlescatter.asymptotics import deflection_angle, scatter_batch
from saddlescatter.flow import FlowOptions, PhasePoint, escape_time, flow, flow_with_variational, integrate_batch
from saddlescatter.manifolds import (ManifoldOptions, g_vector, manifold_action, pairing, sample_manifold,
                                     trace_orbits)
from saddlescatter.potentials import EckartBarrier, FreeModel, GaussianBarrier
from saddlescatter.quantum import Grid, numerov_scattering_1d, partial_wave_amplitude, phase_shifts
from saddlescatter.quantum.experiments import wavefront_transit
from saddlescatter.verifier import sampled_configurations

OMEGA = np.array([1.0, 0.0])


def random_shell_points(model, count, rng, box=2.0, window=0.2):
    pts = []
    while len(pts) < count:
        x = rng.uniform(-box, box, model.n)
        kin = model.E0 + rng.uniform(-window, window) - float(model.potential(x))
        if kin <= 0:
            continue
        d = rng.standard_normal(model.n)
        pts.append(np.concatenate([x, np.sqrt(2 * kin) * d / np.linalg.norm(d)]))
    return np.array(pts)


def test_ac1_flow_correctness(aniso, record_criterion):
    y0 = random_shell_points(aniso, 1000, np.random.default_rng(0))
    t0 = time.perf_counter()
    drift, defect = 0.0, 0.0
    for T in (50.0, -50.0):
        res = integrate_batch(aniso, y0, T, variational=True)
        drift = max(drift, float(res.max_drift.max()))
        defect = max(defect, float(res.max_defect.max()))
    wall = time.perf_counter() - t0
    ok = drift <= 1e-9 and defect <= 1e-7 and wall <= 60
    record_criterion("AC1", ok, f"energy drift {drift:.2e} (<=1e-9), symplectic defect {defect:.2e} (<=1e-7), "
                                f"{wall:.1f}s (<=60s)")
    assert ok


def test_ac2_free_suite(record_criterion):
    m = FreeModel(2)
    t0 = time.perf_counter()
    errs = {}
    q = flow(m, PhasePoint(np.array([0.0, 0.0]), np.array([1.0, 0.0])), 2.0)
    errs["flow"] = np.max(np.abs(q.as_array() - [2.0, 0.0, 1.0, 0.0]))
    _, M = flow_with_variational(m, PhasePoint(np.array([1.0, 0.0]), np.array([2.0, 0.0])), 3.0)
    errs["variational"] = np.max(np.abs(M - np.block([[np.eye(2), 3 * np.eye(2)], [np.zeros((2, 2)), np.eye(2)]])))
    out = escape_time(m, PhasePoint(np.array([0.5, 0.0]), np.array([2.0, 0.0])), 3.0, 10.0)
    errs["escape"] = abs(out.t - (3.0 - 0.5) / 2.0)
    rng = np.random.default_rng(2)
    om = rng.standard_normal((20, 2))
    om /= np.linalg.norm(om, axis=1, keepdims=True)
    z = rng.uniform(-3, 3, 20)[:, None] * np.column_stack([-om[:, 1], om[:, 0]])
    res = scatter_batch(m, om, z, 1.0, action=True)
    errs["theta"] = np.max(np.abs(res.theta - om))
    errs["zplus"] = np.max(np.abs(res.zplus - z))
    theta = np.array([np.cos(1.0), np.sin(1.0)])
    errs["S"] = abs(modified_action(m, OMEGA, np.array([0.0, 0.7]), 1.0).value)
    errs["sigma"] = sigma_hat(m, OMEGA, np.array([0.0, 0.7]), 1.0).value
    mu = maslov_index(m, OMEGA, np.array([0.0, 0.7]), 1.0)
    A = semiclassical_leading_amplitude(m, OMEGA, theta, 1.0, 0.1)
    T = numerov_scattering_1d(FreeModel(1), [0.5, 1.0], 0.1)
    errs["T"] = np.max(np.abs(T.transmission - 1))
    d, *_ = phase_shifts(m, 1.0, 0.1)
    errs["delta"] = np.max(np.abs(d))
    wall = time.perf_counter() - t0
    worst = max(errs.values())
    ok = worst <= 1e-8 and mu == 0 and A.value == 0 and not A.branches and wall < 30
    record_criterion("AC2", ok, f"max error {worst:.1e} over {sorted(errs)}, mu={mu}, A={A.value}, {wall:.1f}s")
    assert ok


def test_ac3_deflection_oracle(radial, record_criterion):
    E = 1.5
    bs = np.linspace(-4, 4, 200)
    om = np.tile(OMEGA, (200, 1))
    t0 = time.perf_counter()
    res = scatter_batch(radial, om, np.column_stack([np.zeros(200), bs]), E)
    wall = time.perf_counter() - t0
    chi = deflection_angle(om, res.theta)
    V = oracles.gaussian_radial(1.0, 1.0)
    ref = np.array([np.sign(b) * oracles.radial_deflection(V, E, b) for b in bs])
    err = float(np.max(np.abs(chi - ref)))
    ok = err <= 1e-4 and wall <= 120 and np.all(res.status == "ok")
    record_criterion("AC3", ok, f"max |theta(z) - quadrature| = {err:.2e} rad (<=1e-4), trajectories {wall:.1f}s (<=120s)")
    assert ok


def test_ac4_action_gradients(aniso, record_criterion):
    rng = np.random.default_rng(0)
    worst_z = 0.0
    for side, sgn in (("+", 1.0), ("-", -1.0)):
        P = sample_manifold(aniso, side)
        pts, _, _, _ = P.flat()
        r = np.linalg.norm(pts[:, :2], axis=1)
        for j in rng.choice(np.flatnonzero((r > 0.2) & (r < 3.0)), 50, replace=False):
            z = pts[j, :2]
            h = 1e-3 * max(1.0, np.linalg.norm(z))
            mp = manifold_action(aniso, P, z)
            g = np.array([(manifold_action(aniso, P, z + h * e).action
                           - manifold_action(aniso, P, z - h * e).action) / (2 * h) for e in np.eye(2)])
            worst_z = max(worst_z, float(np.linalg.norm(g - sgn * mp.xi) / np.linalg.norm(mp.xi)))
    # d/dtheta of the critical action along the trace at infinity against -sqrt(2E0) Z . theta_perp
    psi = np.linspace(0.05, np.pi - 0.05, 50) + 0.013
    hs = 1e-4
    P = np.concatenate([psi - hs, psi, psi + hs])
    o = trace_orbits(aniso, "+", np.column_stack([np.cos(P), np.sin(P)]))
    a = np.unwrap(np.arctan2(o.direction[:, 1], o.direction[:, 0]))
    N = psi.size
    dS = (o.action[2 * N:] - o.action[:N]) / (a[2 * N:] - a[:N])
    th = o.direction[N:2 * N]
    perp = np.column_stack([-th[:, 1], th[:, 0]])
    cot = -np.sqrt(2 * aniso.E0) * np.einsum("ij,ij->i", o.Z[N:2 * N], perp)
    worst_th = float(np.max(np.abs(dS - cot) / np.abs(cot)))
    ok = worst_z <= 1e-4 and worst_th <= 1e-4 and np.all(o.status == "ok")
    record_criterion("AC4", ok, f"dS/dz vs +-xi: max rel {worst_z:.1e} (100 pts); dS+m/dtheta vs -sqrt(2E0) z+: "
                                f"max rel {worst_th:.1e} (50 pts); tol 1e-4")
    assert ok


def fitted_g(model, pts, sgn, window=(5.0, 8.0)):
    """Estimate ``g`` by flowing towards the saddle and fitting ``g e^{-s} + c e^{-2s}``.

    This uses only the nonlinear trajectories (not the linear projection in
    ``g_vector``); the window keeps the fast mode small while round-off along
    the unstable directions is still below the fit noise.
    """
    opts = FlowOptions(rtol=1e-13, atol=1e-15, energy_drift_tol=1e-6)
    s = np.linspace(*window, 31)
    res = integrate_batch(model, pts, sgn * s[-1], t_eval=sgn * s, opts=opts, raise_on_failure=False)
    X = res.y_eval[:, :, :model.n]
    lam = np.asarray(model.lambdas, float)
    A = np.column_stack([np.exp(-lam[0] * s), np.exp(-lam[-1] * s)])
    coef = np.linalg.lstsq(A, X.transpose(1, 0, 2).reshape(len(s), -1), rcond=None)[0]
    return coef[0].reshape(-1, model.n)


def test_ac5_manifold_geometry(aniso, record_criterion):
    defects, angles, approach, wrong = [], [], [], []
    for side, sgn in (("+", -1.0), ("-", 1.0)):
        P = sample_manifold(aniso, side)
        defects.append(P.lagrangian_defect())
        pts, _, _, _ = P.flat()
        g = fitted_g(aniso, pts, sgn)
        gn = np.linalg.norm(g, axis=1)
        keep = gn > 1e-2 * gn.max()
        angles.append(float(np.max(np.abs(np.arctan2(g[keep, 1], np.abs(g[keep, 0]))))))
        sub = pts[:: max(1, len(pts) // 100)]
        res = integrate_batch(aniso, sub, sgn * 60.0, raise_on_failure=False)
        approach.append(float(np.max(res.min_norm)) / aniso.length_scale)
        back = integrate_batch(aniso, sub, -sgn * 60.0, escape_radius=20.0, raise_on_failure=False)
        wrong.append(float(np.min(np.where(back.status == "escaped", np.inf, back.min_norm))))
    ok = max(defects) <= 1e-6 and max(angles) <= 1e-3 and max(approach) <= 1e-2 and min(wrong) > 0.1
    record_criterion("AC5", ok, f"Lagrangian defect {max(defects):.1e} (<=1e-6), fitted g angle to lambda_1 "
                                f"axis {max(angles):.1e} rad (<=1e-3), closest approach {max(approach):.1e} L "
                                f"in the converging direction")
    assert ok


def test_ac6_quantum_semiclassical_match(radial, record_criterion):
    E, chi = 1.5, 0.316
    theta = np.array([np.cos(chi), np.sin(chi)])
    t0 = time.perf_counter()
    zs, _ = find_branches(radial, OMEGA, theta, E, SearchSpec())
    br = branch_data(radial, OMEGA, zs, E)
    errs = []
    for h in (0.1, 0.05, 0.025):
        fs = abs(flux_normalized(assemble(br, h), E, 2))
        fq = abs(partial_wave_amplitude(radial, E, h, [chi]).f[0])
        errs.append(abs(fs - fq) / fq)
    wall = time.perf_counter() - t0
    ok = errs[0] > errs[1] > errs[2] and errs[2] <= 0.15 and wall <= 600
    record_criterion("AC6", ok, "relative |f| error at h=0.1,0.05,0.025: "
                                + ", ".join(f"{e:.2%}" for e in errs) + f" ({len(br)} branches), {wall:.0f}s")
    assert ok


def test_ac7_barrier_top_transmission(record_criterion):
    h, lam = 0.01, 1.0
    E1 = np.array([-1.0, 0.0, 1.0])
    target = oracles.barrier_top_transmission(E1, lam)
    t0 = time.perf_counter()
    worst = {}
    for name, m in (("eckart", EckartBarrier(1.0, lam)), ("gaussian", GaussianBarrier(1.0, (lam,)))):
        T = numerov_scattering_1d(m, m.E0 + h * E1, h).transmission
        worst[name] = float(np.max(np.abs(T - target) / target))
    wall = time.perf_counter() - t0
    ok = max(worst.values()) <= 0.02 and wall <= 60
    record_criterion("AC7", ok, f"max relative error {', '.join(f'{k} {v:.2%}' for k, v in worst.items())} "
                                f"(<=2%), {wall:.1f}s")
    assert ok


def test_ac8_critical_order_exponents(record_criterion):
    tuples = [(1, 1), (1, 2), (2, 3), (1, 1, 1), (1, 2, 3), (Fraction(1, 2), 1), (3, 4, 5, 6),
              (Fraction(2, 3), Fraction(5, 7)), (1,), (2, 2, 7)]
    bad = []
    for lams in tuples:
        d = critical_order_exponents(lams)
        l1, s = min(map(Fraction, lams)), sum(map(Fraction, lams))
        if d.resolvent_order != 1 - s / (2 * l1) or d.scattering_order != Fraction(1, 2) - s / (2 * l1):
            bad.append(lams)
        if not isinstance(d.scattering_order, Fraction):
            bad.append(lams)
    ok = not bad
    record_criterion("AC8", ok, f"{len(tuples) - len(bad)}/{len(tuples)} lambda-tuples exact")
    assert ok


def test_ac9_wavefront_transit(record_criterion):
    h = 0.01
    m = GaussianBarrier(0.5, (1.0, 2.0))
    t0 = time.perf_counter()
    opts = ManifoldOptions(n_seeds=256, n_times=400, R_patch=12)
    Pp, Pm = sample_manifold(m, "+", opts=opts), sample_manifold(m, "-", opts=opts)
    pp, _, psi, pki = Pp.flat()
    pm, _, msi, mki = Pm.flat()
    # target: the Lambda_- sample at |x| = 2.5 closest to polar angle 2.4
    r = np.linalg.norm(pm[:, :2], axis=1)
    cand = np.flatnonzero(np.abs(r - 2.5) < 0.05)
    i = cand[np.argmin(np.abs(np.arctan2(pm[cand, 1], pm[cand, 0]) - 2.4))]
    x0, xi0 = pm[i, :2], pm[i, 2:]
    # <g+, g->: g- of the start against g+ of the patch sample where the centre lands
    T = 6.0
    land = flow(m, PhasePoint(x0, xi0), T).as_array()
    j = int(np.argmin(np.linalg.norm(pp - land, axis=1)))
    gval, gpaired = pairing(g_vector(Pp, psi[j], pki[j]).g, g_vector(Pm, msi[i], mki[i]).g)
    grid = Grid((2048, 2048), ((-12.0, 12.0), (-12.0, 12.0)))
    delta = 5 * np.sqrt(h)
    tgt = wavefront_transit(m, h, grid, x0, xi0, T, pp, delta, r_escape=0.5)
    ctl = wavefront_transit(m, h, grid, np.array([-2.5, 3.0]), np.array([1.0, 0.0]), T, pp, delta, r_escape=0.5)
    wall = time.perf_counter() - t0
    ok = gpaired and tgt.fraction >= 0.8 and ctl.fraction < 0.2 and wall <= 900
    record_criterion("AC9", ok, f"target fraction {tgt.fraction:.4f} (>=0.8), control {ctl.fraction:.4f} (<0.2), "
                                f"<g+,g-> = {gval:.2e}, {wall:.0f}s (<=900s)")
    assert ok


def test_ac10_clean_intersection_excess(aniso, record_criterion):
    out = sampled_configurations(aniso, count=20, seed=0)
    graph = [r["excess"] for r in out if r["configuration"] == "graph"]
    flowout = [r["excess"] for r in out if r["configuration"] == "flowout"]
    indet = sum(r["excess"] is None for r in out)
    ok = len(graph) == len(flowout) == 20 and set(graph) == {0} and set(flowout) == {1} and indet == 0
    record_criterion("AC10", ok, f"graph excess {sorted(set(graph), key=str)}, flow-out excess "
                                 f"{sorted(set(flowout), key=str)}, indeterminate {indet} (20 samples each)")
    assert ok


def test_ac11_interference_frequency(radial, record_criterion):
    E, chi = 1.5, 0.316
    theta = np.array([np.cos(chi), np.sin(chi)])
    res = semiclassical_leading_amplitude(radial, OMEGA, theta, E, 0.05)
    assert len(res.branches) == 2
    dS = abs(res.branches[0].action - res.branches[1].action)
    u = np.linspace(10.0, 60.0, 51)
    # the semiclassical beat and the quantum |f|^2 on the same 1/h grid
    w_sc = interference_frequency(u, np.abs([res.at_h(1 / x) for x in u]) ** 2)
    fq2 = np.array([abs(partial_wave_amplitude(radial, E, 1 / x, [chi], check=False).f[0]) ** 2 for x in u])
    w_q = interference_frequency(u, fq2)
    e_sc, e_q = abs(w_sc - dS) / dS, abs(w_q - dS) / dS
    ok = e_sc <= 0.01 and e_q <= 0.01
    record_criterion("AC11", ok, f"|S1-S2| = {dS:.5f}; beat frequency semiclassical {w_sc:.5f} ({e_sc:.2%}), "
                                 f"quantum |f|^2 {w_q:.5f} ({e_q:.2%}); tol 1%")
    assert ok


def test_ac12_critical_amplitude_scaling(radial, record_criterion):
    # direction pair at E = E0 with no regular branch: the amplitude is carried by the critical part
    d = critical_order_exponents(radial)
    predicted = float(-d.scattering_order)  # |f| ~ h^(-r)
    hs = np.geomspace(0.05, 0.005, 8)
    th = np.array([3 * np.pi / 4, np.pi])
    t0 = time.perf_counter()
    F = np.array([np.abs(partial_wave_amplitude(radial, radial.E0, h, th, check=False).f) for h in hs])
    slopes = [float(np.polyfit(np.log(hs), np.log(F[:, k]), 1)[0]) for k in range(th.size)]
    wall = time.perf_counter() - t0
    ok = all(abs(s - predicted) <= 0.3 for s in slopes)
    record_criterion("AC12", ok, f"log-log slopes {', '.join(f'{s:.3f}' for s in slopes)} at theta=3pi/4, pi vs "
                                 f"predicted {predicted:+.3f} (+-0.3), {wall:.0f}s [exploratory]")
    assert ok
