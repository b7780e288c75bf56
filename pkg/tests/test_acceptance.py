"""Acceptance criteria, one test per criterion.

Each test prints a single ``[criterion k] PASS|FAIL ...`` line (visible in
the pytest output regardless of capture) and then asserts the same
condition at the tolerance fixed by the criterion.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from gnsharp import cli
from gnsharp.core import (
    Regime,
    blowup_regime_equivalence,
    closed_form_A,
    extremal_profile,
    theta_formula,
    validate_params,
)
from gnsharp.quadrature import (
    QuadratureScheme,
    blowup_coefficient,
    gn_quotient,
    moments,
    verify_extremality,
)
from gnsharp.torus import (
    TorusField,
    TorusGrid,
    alpha_sweep,
    j_alpha,
    j_alpha_gradient,
    minimize_j_alpha,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SIM = validate_params(2, 2, 2, 3)
SIM_GRID = TorusGrid(2, 64)
SWEEP_ALPHAS = (1.0, 10.0, 100.0, 1000.0)


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {k}] {'PASS' if ok else 'FAIL'} {detail}")
    return emit


@pytest.fixture(scope="module")
def sweep_run():
    t0 = time.perf_counter()
    records = alpha_sweep(SIM, SIM_GRID, SWEEP_ALPHAS)
    return records, time.perf_counter() - t0


def random_valid_tuples(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(2, 13))
        p = float(rng.uniform(1.05, n - 0.05))
        p_star = n * p / (n - p)
        q = float(rng.uniform(1.0, 0.95 * min(p_star, 50.0)))
        r = q + float(rng.uniform(0.01, 0.99)) * (p_star - q)
        out.append((n, p, q, r))
    return out


def identities_hold(d, params):
    ok_mu = abs(d.mu_alpha * params.theta - d.nu_alpha) <= 1e-12 * abs(d.nu_alpha)
    split = d.grad_energy + d.penalty
    ok_split = abs(d.q_mass - split) <= 1e-12 * abs(split)
    return ok_mu and ok_split


def test_criterion_1_exponent_identities(report):
    t0 = time.perf_counter()
    worst_endpoint = 0.0
    worst_dt = 0.0
    for n, p, q, r in random_valid_tuples(200, seed=1):
        p_star = n * p / (n - p)
        worst_endpoint = max(worst_endpoint, abs(theta_formula(n, p, q, p_star) - 1.0))
        params = validate_params(n, p, q, r)
        th = params.theta
        if th < 1:
            lhs = th * q / (p * (1 - th))
            rhs = n * (r - q) / (n * p + r * p - n * r)
            worst_dt = max(worst_dt, abs(lhs - rhs) / max(1.0, abs(lhs)))
    elapsed = time.perf_counter() - t0
    ok = worst_endpoint <= 1e-12 and worst_dt <= 1e-12 and elapsed < 1.0
    report(1, ok, f"max|theta(p*)-1|={worst_endpoint:.2e} max rel (dt)={worst_dt:.2e} time={elapsed:.2f}s")
    assert ok


CLOSED_FORM_CASES = [(3, 2, 3), (4, 2, 2.5), (3, 1.5, 2), (5, 1.8, 2.2)]


def test_criterion_2_closed_form_vs_quotient(report):
    t0 = time.perf_counter()
    scheme = QuadratureScheme()
    gaps = {}
    for tup in CLOSED_FORM_CASES:
        params = validate_params(*tup)
        assert params.has_closed_form, f"{tup} outside the explicit range"
        q_w = gn_quotient(extremal_profile(params), params, scheme)
        gaps[tup] = abs(q_w * closed_form_A(params) - 1.0)
    elapsed = time.perf_counter() - t0
    worst = max(gaps.values())
    ok = worst <= 1e-5 and elapsed < 30
    report(2, ok, f"max|Q(w)A-1|={worst:.2e} over {len(gaps)} tuples time={elapsed:.2f}s")
    assert ok


def test_criterion_3_pinned_values(report):
    t0 = time.perf_counter()
    params = validate_params(3, 2, 3)
    expected_a = (1 / (4 * math.pi)) * (4 / math.sqrt(math.pi)) ** (2 / 3)
    a_val = closed_form_A(params)
    i1 = moments(params, QuadratureScheme()).I1
    elapsed = time.perf_counter() - t0
    err_a = abs(a_val - expected_a)
    err_i1 = abs(i1 - math.pi**2 / 4)
    ok = err_a <= 1e-5 and err_i1 <= 1e-6 and elapsed < 5
    report(3, ok, f"A(3,2,3)={a_val:.12g} (|A-expr|={err_a:.1e}) "
                  f"I1={i1:.12g} (|I1-pi^2/4|={err_i1:.1e}) time={elapsed:.2f}s")
    assert ok


def test_criterion_4_extremality(report):
    t0 = time.perf_counter()
    params = validate_params(3, 2, 3)
    rep = verify_extremality(params, QuadratureScheme(), perturbations=20, eps=1e-4,
                             min_tol=1e-5, grad_tol=1e-3, raise_on_failure=False)
    elapsed = time.perf_counter() - t0
    q_w = rep.q_extremal
    min_ok = all(min(r.q_plus, r.q_minus) >= q_w - 1e-5 * q_w for r in rep.perturbations)
    grad = max(abs(r.derivative) for r in rep.perturbations) / q_w
    ok = len(rep.perturbations) == 20 and min_ok and grad <= 1e-3 and elapsed < 60
    report(4, ok, f"20 seeded bumps: minimality={min_ok} max|dQ|/Q={grad:.2e} time={elapsed:.2f}s")
    assert ok


def test_criterion_5_blowup(report):
    t0 = time.perf_counter()
    mismatches = 0
    for n in range(4, 21):
        for p in np.arange(1.01, n, 0.01):
            if min(abs(p - 2), abs(p - (n + 2) / 3)) < 1e-9:
                continue
            a, b = blowup_regime_equivalence(n, float(p))
            mismatches += a != b
    scheme = QuadratureScheme()
    samples = positive = 0
    for n in (5, 10, 15):
        for p in np.linspace(2.05, (n + 2) / 3 - 0.05, 8):
            q = p * (n - 1) / (n - p) - 0.05
            params = validate_params(n, float(p), float(q))
            if not params.has(Regime.BLOWUP_NONVALIDITY):
                continue
            samples += 1
            positive += blowup_coefficient(params, scheme) > 0
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and positive >= 10 and elapsed < 120
    report(5, ok, f"scan mismatches={mismatches} positive brackets={positive}/{samples} "
                  f"in-regime samples time={elapsed:.2f}s")
    assert ok


def test_criterion_6_simulator_calibration(report, sweep_run):
    t0 = time.perf_counter()
    _, small = minimize_j_alpha(SIM, SIM_GRID, 1e-6)
    ratio = small.nu_alpha / 1e-6

    worst = 0.0
    delta = 0.05
    grid = TorusGrid(2, 8)
    for seed in range(20):
        rng = np.random.default_rng(seed)
        vals = rng.uniform(0.1, 1.0, grid.shape)
        g = j_alpha_gradient(TorusField(vals, grid), SIM, 10.0, delta)
        scale = np.max(np.abs(g))
        for idx in np.ndindex(grid.shape):
            step = 1e-6 * vals[idx]
            plus, minus = vals.copy(), vals.copy()
            plus[idx] += step
            minus[idx] -= step
            fd = (j_alpha(TorusField(plus, grid), SIM, 10.0, delta)
                  - j_alpha(TorusField(minus, grid), SIM, 10.0, delta)) / (2 * step)
            worst = max(worst, abs(fd - g[idx]) / scale)

    records = [small, *sweep_run[0]]
    ids_ok = all(identities_hold(d, SIM) for d in records)
    elapsed = time.perf_counter() - t0
    ok = 0.99 <= ratio <= 1.0 and worst <= 1e-5 and ids_ok and elapsed < 300
    report(6, ok, f"nu/alpha={ratio:.12g} grad check max rel={worst:.2e} "
                  f"identities on {len(records)} records={ids_ok} time={elapsed:.2f}s")
    assert ok


def test_criterion_7_concentration_trend(report, sweep_run):
    records, elapsed = sweep_run
    by_alpha = {d.alpha: d for d in records}
    nus = [d.nu_alpha for d in records]
    nu_ok = all(b >= a - 1e-8 for a, b in zip(nus, nus[1:]))
    share10, share1000 = by_alpha[10.0].penalty_share, by_alpha[1000.0].penalty_share
    conc10, conc1000 = by_alpha[10.0].concentration_at(0.2), by_alpha[1000.0].concentration_at(0.2)
    share_ok = share1000 < share10
    conc_ok = conc1000 > conc10 and conc1000 >= 0.9
    ok = nu_ok and share_ok and conc_ok and elapsed < 900
    report(7, ok, f"nu nondecreasing={nu_ok} ({', '.join(f'{v:.6g}' for v in nus)}); "
                  f"penalty share 10->1000: {share10:.4g}->{share1000:.4g} ({share_ok}); "
                  f"conc(0.2) 10->1000: {conc10:.6g}->{conc1000:.6g} ({conc_ok}) time={elapsed:.2f}s")
    assert ok


def test_criterion_8_determinism(report, tmp_path, monkeypatch):
    names = sorted(p.name for p in CONFIGS.glob("*.cfg"))
    identical = []
    for name in names:
        runs = []
        for i in range(2):
            out = tmp_path / f"{Path(name).stem}_{i}"
            out.mkdir()
            monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(out))
            code = cli.main([name.split("_", 1)[0], "--config", str(CONFIGS / name)])
            assert code == 0, name
            runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        identical.append(bool(runs[0]) and runs[0] == runs[1])
    ok = all(identical) and len(names) > 0
    report(8, ok, f"{sum(identical)}/{len(names)} shipped configs byte-identical on rerun")
    assert ok
