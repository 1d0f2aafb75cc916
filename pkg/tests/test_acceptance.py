"""Acceptance criteria 1-9.

Each test prints one ``criterion N [PASS|FAIL] ...`` line (collected again in
the terminal summary) before asserting, so a failing criterion still reports
the measured numbers.
"""

import time
import warnings

import numpy as np
import pytest

from conftest import record_acceptance
from postreg.builtins import example_setup, linear_oracle_setup
from postreg.checks import check_assumption_Dee, check_assumption_P_L, contraction_aligned_probe
from postreg.checks import contraction_bruteforce, contraction_value, plant_grid
from postreg.gains import build_G, emu_factorize, leading_minors, synthesize_gains
from postreg.normal_form import (
    build_delta_scaling,
    build_internal_model_matrices,
    build_lambda,
    build_signature,
    build_structure,
    binomial_hurwitz,
)
from postreg.plant import ExamplePlantParams, example_L, example_M, example_P
from postreg.regulator import ClosedLoop, control_law, ideal_eta1_star, mismatch_along, zeta_bar
from postreg.sim import integrate, tail_stats


def verdict(n, title, ok, detail):
    record_acceptance(f"criterion {n} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
    assert ok, detail


def _sup(traj, a, b):
    m = (traj.t >= a) & (traj.t <= b)
    return float(np.max(traj.e_norm[m]))


# --- 1. example, asymptotic case ----------------------------------------------

# Tail threshold frozen after comparing with a tight-tolerance reference run:
# the reference tail is ~1e-14 and the default-tolerance tail ~1e-11, so the
# integrator tolerance sets the floor and 1e-8 keeps three decades of headroom.
C1_SPEC_TOL = 1e-2
C1_FROZEN_TOL = 1e-8


@pytest.mark.slow
def test_criterion_1_example_asymptotic(example_q0_run):
    traj, stats = example_q0_run["traj"], example_q0_run["stats"]
    tail = _sup(traj, 160.0, 200.0)
    early = _sup(traj, 0.0, 40.0)
    plant, config, z0 = example_setup(q=0.0)
    ref = integrate(plant, config, z0, 200.0, rtol=1e-11, atol=1e-13)
    ref_tail = _sup(ref, 160.0, 200.0)
    early_dev = float(np.max(np.abs(ref.e[ref.t <= 40] - traj.e[traj.t <= 40])))
    ok = (not traj.blown_up and tail <= C1_SPEC_TOL and tail <= C1_FROZEN_TOL
          and tail * 100 <= early and stats.decreasing_flag
          and example_q0_run["elapsed"] < 30.0 and ref_tail <= C1_FROZEN_TOL)
    verdict(1, "example q=0 regulates", ok,
            f"tail sup|e|[160,200]={tail:.3g} (spec tol {C1_SPEC_TOL:g}, frozen tol {C1_FROZEN_TOL:g}), "
            f"sup[0,40]={early:.3g}, ratio={early / max(tail, 1e-300):.3g}, "
            f"dyadic blocks decreasing={stats.decreasing_flag}, runtime={example_q0_run['elapsed']:.1f}s; "
            f"tight reference tail={ref_tail:.3g}, |e-e_ref| on [0,40]={early_dev:.2g}")


# --- 2. example, practical case -----------------------------------------------

@pytest.mark.slow
def test_criterion_2_example_practical_sweep(example_q1_runs):
    gs = (5.0, 8.0, 10.0)
    tails = [_sup(example_q1_runs[g]["traj"], 160.0, 200.0) for g in gs]
    bounded = all(not example_q1_runs[g]["traj"].blown_up for g in gs)
    strictly = all(a > b for a, b in zip(tails, tails[1:]))
    elapsed = example_q1_runs["elapsed"]
    ok = bounded and strictly and elapsed < 120.0
    verdict(2, "example q=1 error shrinks with g", ok,
            "tail sup|e| " + ", ".join(f"g={g:g}: {t:.4g}" for g, t in zip(gs, tails))
            + f"; all bounded={bounded}; runtime={elapsed:.1f}s")


# --- 3. linear oracle: asymptotic regulation ----------------------------------

def test_criterion_3_linear_oracle():
    plant, config, z0 = linear_oracle_setup(exo_freqs=(1.0,), chain_length=2, g=2.0, ell=10.0)
    traj = integrate(plant, config, z0, 60.0)
    mm = mismatch_along(traj, plant, config, tail_start=40.0)
    tail = _sup(traj, 40.0, 60.0)
    data = plant.params["data"]
    Pi, Gam = data.francis()  # independent Kronecker-form linear solve
    m = traj.t >= 40.0
    x_dev = float(np.max(np.abs(traj.x[m] - traj.w[m] @ Pi.T)))
    u_dev = float(np.max(np.abs(traj.u[m] - traj.w[m] @ Gam.T)))
    eta_ff = np.array([ideal_eta1_star(w, Pi @ w, plant, config.gains) for w in traj.w[m]])
    eta_dev = float(np.max(np.abs(traj.eta[m][:, :1] - eta_ff)))
    ok = (mm.delta_bar <= 1e-6 and tail <= 1e-6 and x_dev <= 1e-6 and u_dev <= 1e-6
          and eta_dev <= 1e-6 and not traj.blown_up)
    verdict(3, "linear oracle, exact internal model", ok,
            f"delta_bar={mm.delta_bar:.3g}, tail sup|e|[40,60]={tail:.3g}, "
            f"|x-Pi w|={x_dev:.2g}, |u-Gamma w|={u_dev:.2g}, |eta1-eta1*(Francis)|={eta_dev:.2g} (tol 1e-6)")


# --- 4. integral action -------------------------------------------------------

def test_criterion_4_integral_action():
    plant, config, z0 = linear_oracle_setup(exo_freqs=(0.0,), chain_length=2, g=2.0, ell=10.0,
                                            d=2, phi="zero")
    assert not np.any(config.phi.row)
    traj = integrate(plant, config, z0, 60.0)
    tail = _sup(traj, 48.0, 60.0)
    ok = tail <= 1e-8 and not traj.blown_up
    verdict(4, "constant exosystem, d=2, phi=0", ok, f"tail sup|e|[48,60]={tail:.3g} (tol 1e-8)")


# --- 5. EMU factorization -----------------------------------------------------

def test_criterion_5_factorization_suite():
    rng = np.random.default_rng(2024)
    mats = []
    while len(mats) < 1000:
        n = int(rng.integers(2, 6))
        B = rng.normal(size=(n, n))
        if np.all(np.abs(leading_minors(B)) >= 0.1):
            mats.append(B)
    t0 = time.perf_counter()
    facts = [emu_factorize(B) for B in mats]
    elapsed = time.perf_counter() - t0
    rel = max(np.linalg.norm(B - f.reconstruct(), "fro") / np.linalg.norm(B, "fro")
              for B, f in zip(mats, facts))
    min_eig = min(np.linalg.eigvalsh(f.M)[0] for f in facts)
    strict_upper = all(not np.any(np.tril(f.U)) for f in facts)
    ok = rel <= 1e-10 and min_eig > 0 and strict_upper and elapsed < 5.0
    verdict(5, "EMU factorization", ok,
            f"1000 matrices, max rel reconstruction error={rel:.2g}, min eig M={min_eig:.3g}, "
            f"U strictly upper={strict_upper}, runtime={elapsed:.2f}s")


# --- 6. certificates on the example -------------------------------------------

def test_criterion_6_certificates():
    params = ExamplePlantParams(alpha=5.0, m=1.0)
    plant, config, _ = example_setup(alpha=5.0, m=1.0)
    grid = plant_grid(plant, [[0.0, 0.0]] * 3, scheme="grid", count=[101, 101, 1, 1, 1])
    P = example_P(params)
    rep = check_assumption_P_L(lambda p: P(p[:2]), example_L(params),
                               lambda p: plant.B(p[:2], p[2:]), grid)
    # second route: the closed-form M(w) of the example, no B or P involved
    direct = min(np.linalg.eigvalsh(example_M(params, p[:2]))[0] - 1.0 for p in grid.points())
    dee = check_assumption_Dee([[1.0]], plant, config.gains, grid)
    target = 2 * params.alpha ** 2 - 1
    ok = (rep.worst_margin >= 0 and abs(rep.worst_margin - direct) <= 1e-9
          and dee.worst_margin == pytest.approx(target, abs=1e-12))
    verdict(6, "example certificates", ok,
            f"101^2 grid: min eig(M(w)) - 1 = {rep.worst_margin:.6f} (closed form {direct:.6f}); "
            f"error-block margin={dee.worst_margin:.12g} (expected 2 alpha^2 - 1 = {target:g})")


# --- 7. structural identities -------------------------------------------------

def test_criterion_7_structural_identities():
    rng = np.random.default_rng(77)
    worst = dict(lam=0.0, delta=0.0, law=0.0)
    fce_exact = True
    n_sig = 0
    while n_sig < 100:
        r = int(rng.integers(1, 5))
        p = rng.integers(1, 4, size=r).tolist()
        N = rng.integers(1, 6, size=r).tolist()
        sig = build_signature(p, N, int(rng.integers(1, r + 1)))
        sm = build_structure(sig)
        n_sig += 1
        fce_exact &= not np.any(sm.F @ sm.C_e.T)
        for i in range(r):
            if N[i] < 2:
                continue
            k = float(rng.uniform(0.1, 20.0))
            xs, ys = sig.xi_slice(i), sig.y_slice(i)
            F, H, C = sm.F[xs, xs], sm.H[xs, ys], sm.C[ys, xs]
            lam = build_lambda(i, k, sig)
            lam_inv = np.linalg.inv(lam)
            G1 = rng.normal(size=(p[i], p[i]))
            pairs = [
                (lam @ F @ lam_inv, k * F),
                (lam @ H, H),
                (lam @ C.T @ G1 @ C @ lam_inv, C.T @ G1 @ C),
                (lam @ C.T, k ** (N[i] - 2) * C.T),
            ]
            for lhs, rhs in pairs:
                worst["lam"] = max(worst["lam"], _rel(lhs, rhs))
        d = int(rng.integers(1, 7))
        g = float(rng.uniform(0.1, 20.0))
        h = binomial_hurwitz(d)
        im = build_internal_model_matrices(d, sig.n_e, h)
        D = build_delta_scaling(d, g, sig.n_e)
        Di = np.linalg.inv(D)
        G = build_G(h, g, d, sig.n_e)
        for lhs, rhs in ((Di @ im.A @ D, g * im.A), (Di @ im.E, g ** (1 - d) * im.E),
                         (Di @ G, g * im.R)):
            worst["delta"] = max(worst["delta"], _rel(lhs, rhs))
        ell = float(rng.uniform(0.5, 20.0))
        L = rng.normal(size=(sig.n_y, sig.n_y)) + 4 * np.eye(sig.n_y)
        gains = synthesize_gains(sig, L, g, ell, d, k=rng.uniform(0.5, 10.0, size=r))
        xi, zeta, eta1 = rng.normal(size=sig.n_xi), rng.normal(size=sig.n_y), rng.normal(size=sig.n_e)
        u = control_law(xi, zeta, eta1, gains)
        worst["law"] = max(worst["law"], _rel(u, -ell * L @ zeta_bar(xi, zeta, eta1, gains)))
    ok = worst["lam"] <= 1e-12 and worst["delta"] <= 1e-12 and worst["law"] <= 1e-12 and fce_exact
    verdict(7, "structural identities", ok,
            f"100 signatures: Lambda identities max rel err={worst['lam']:.2g}, "
            f"Delta identities={worst['delta']:.2g}, u=-ell L zeta_bar={worst['law']:.2g}, "
            f"F C_e'=0 exactly={fce_exact}")


def _rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(b), initial=0.0), 1e-300)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


# --- 8. mismatch derivatives vs analytic propagation --------------------------

# (g, ell) that stabilize the single-integrator oracle with a unit-frequency
# exosystem, found by scanning closed-loop eigenvalues.
C8_GAINS = {1: (2.0, 10.0), 2: (2.0, 100.0), 3: (2.0, 5.0), 4: (2.0, 10.0), 5: (2.0, 100.0)}


@pytest.mark.slow
def test_criterion_8_mismatch_derivatives():
    errs = {}
    for d, (g, ell) in C8_GAINS.items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # d = 1 integral-action notice
            plant, config, z0 = linear_oracle_setup(exo_freqs=(1.0,), chain_length=1, g=g,
                                                    ell=ell, d=d)
        cl = ClosedLoop(plant, config)
        # the closed loop is linear: z' = A z, so eta_1*(t)^(k) = c A^k z(t)
        A = np.column_stack([cl.rhs(0.0, v) for v in np.eye(cl.dim)])
        nw, nx = plant.n_w, plant.n_x
        c = np.array([ideal_eta1_star(v[:nw], v[nw:nw + nx], plant, config.gains)[0]
                      for v in np.eye(cl.dim)])
        # tight tolerances: dense-output noise is amplified like fd_step^-d
        traj = integrate(plant, config, z0, 60.0, rtol=1e-11, atol=1e-13)
        mm = mismatch_along(traj, plant, config, tail_start=40.0)
        Z = traj.states[np.searchsorted(traj.t, mm.t - 1e-9)]
        analytic = np.column_stack([Z @ (c @ np.linalg.matrix_power(A, k)) for k in range(d + 1)])
        fd = np.column_stack([mm.eta_star, mm.eta1_star_d])
        errs[d] = float(np.max(np.abs(fd - analytic)))
    ok = all(v <= 1e-5 for v in errs.values())
    verdict(8, "finite-difference eta_1* derivatives", ok,
            "max abs error " + ", ".join(f"d={d}: {v:.2g}" for d, v in errs.items()) + " (tol 1e-5)")


# --- 9. contraction brute force -----------------------------------------------

@pytest.mark.slow
def test_criterion_9_contraction_bruteforce():
    rng = np.random.default_rng(99)
    worst_excess, worst_gap, min_brute_ratio = -np.inf, 0.0, np.inf
    t0 = time.perf_counter()
    for _ in range(100):
        n = int(rng.integers(1, 4))
        B = rng.normal(size=(n, n))
        M = rng.normal(size=(n, n)) + 3 * np.eye(n)
        exact = contraction_value(B, M)
        brute = contraction_bruteforce(B, M, n_probes=100_000, rng=rng)
        _, aligned = contraction_aligned_probe(B, M)
        worst_excess = max(worst_excess, (brute - exact) / exact)
        worst_gap = max(worst_gap, abs(aligned - exact) / exact)
        min_brute_ratio = min(min_brute_ratio, brute / exact)
    elapsed = time.perf_counter() - t0
    ok = worst_excess <= 1e-12 and worst_gap <= 1e-2
    verdict(9, "contraction closed form", ok,
            f"100 pairs x 1e5 probes: max (brute - closed)/closed={worst_excess:.2g}, "
            f"aligned probe gap={worst_gap:.2g}, min brute/closed={min_brute_ratio:.3f}, "
            f"runtime={elapsed:.1f}s")
