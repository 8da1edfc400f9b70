"""Acceptance criteria, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py`` (a PASS/FAIL line per criterion
is printed in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest

from flexbottle import printed
from flexbottle.cli import REFERENCE_SCALE, draw_samples
from flexbottle.errors import SearchError
from flexbottle.longrun import _DiffField, _verdict, enumerate_equilibria, enumerate_equilibria_units
from flexbottle.model import CASES, case_index, reference_model, validate
from flexbottle.optimum import (
    benefit_gain,
    g_closed,
    g_units,
    maximize_total_benefit,
    minimize_total_cost,
    pigouvian_region,
    case_total_cost_partials,
    case_total_cost,
    tc_units,
    total_benefit,
    total_cost,
)
from flexbottle.oracle import GridConfig, cross_validate
from flexbottle.shortrun import arrival_rates

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = {}

GRID9 = np.round(np.arange(1, 10) * 0.1, 10)
RHO19 = np.round(np.arange(1, 20) * 0.05, 10)


def _model(mu, theta, rho):
    return validate(dict(REFERENCE_SCALE, mu=float(mu), theta=float(theta), rho=float(rho)))


def _record(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    return ok


# ---------------------------------------------------------------------------


def criterion_1():
    t0 = time.perf_counter()
    want = {0.25: [(0.0, 0.0), (1.0, 1.0)], 0.8: [(0.0, 0.0)]}
    got = {}
    for rho, expected in want.items():
        for mu, th in ((0.2, 0.6), (0.4, 0.9)):
            got[(rho, mu, th)] = (enumerate_equilibria(reference_model(mu=mu, theta=th, rho=rho)).splits, expected)
    dt = time.perf_counter() - t0
    ok = all(g == e for g, e in got.values()) and dt < 5
    bad = {k: g for k, (g, e) in got.items() if g != e}
    return ok, f"reference-example equilibrium sets reproduced, {dt:.2f}s" + (f"; mismatches {bad}" if bad else "")


def criterion_2():
    eta = benefit_gain(reference_model(mu=0.2, theta=0.6, rho=0.25))
    mx = benefit_gain(_model(0.0, 1.0, 0.5))
    ok = abs(eta - 0.19091) <= 1e-4 and abs(mx - 2 / 3) <= 1e-15
    return ok, f"eta={eta:.6f} (target 0.19091), max eta={mx!r} (target 2/3)"


def criterion_3():
    m = reference_model(mu=0.2, theta=0.6, rho=0.25)
    r = pigouvian_region(m, (0.0, 0.0))
    hi_H, hi_I = r.sigma_H[1], r.sigma_I[1]
    ok = r.sigma_H[0] is None and hi_H is not None and abs(hi_H + 300) <= 1 and abs(hi_I + 300) <= 1
    return ok, f"sigma region ({r.sigma_H[0]}, {hi_H:.3f}) for both groups (target -300 +- 1)"


def criterion_4():
    t0 = time.perf_counter()
    draws = draw_samples(20, 7)
    worst_c = worst_o = 0.0
    cases, failures = set(), []
    for d in draws:
        m = _model(d["mu"], d["theta"], d["rho"])
        rep = cross_validate(m, (d["v_H"], d["v_I"]), grid_cfg=GridConfig(K=4000))
        cases.add(rep.case)
        worst_c = max([worst_c] + [x for x in rep.cost_deviation if x is not None])
        worst_o = max([worst_o] + [x for x in rep.output_deviation if x is not None])
        if not rep.ok:
            failures.append((d, rep.flagged))
    # negative control: the published case-A flex output is flagged
    neg = cross_validate(reference_model(), (0.5, 0.9), grid_cfg=GridConfig(K=4000), tables="printed")
    neg_flagged = any(f.startswith("output F_f") for f in neg.flagged) and neg.case == "A"
    dt = time.perf_counter() - t0
    ok = not failures and cases == set(CASES) and neg_flagged and dt < 180
    return ok, (
        f"20 draws over cases {''.join(sorted(cases))}: worst cost dev {worst_c:.2e}, worst output dev {worst_o:.2e}; "
        f"printed case-A F^f flagged={neg_flagged}; {dt:.1f}s"
    )


def criterion_5():
    bad = []
    for mu in GRID9:
        for th in GRID9:
            for rho in RHO19:
                st = _verdict(_DiffField(mu, th, rho), 1.0, 1.0).stable
                if st != (rho < 0.5):
                    bad.append((mu, th, rho, st))
    n = len(GRID9) ** 2 * len(RHO19)
    return not bad, f"(1,1) stable iff rho < 0.5 at {n} points; exceptions {len(bad)} {bad[:3]}"


def criterion_6():
    bad, corner_bad, n = [], [], 0
    for mu in GRID9:
        for th in GRID9:
            for rho in RHO19:
                f = _DiffField(mu, th, rho)
                for c in ((1.0, 0.0), (0.0, 1.0)):
                    if _verdict(f, *c).stable:
                        corner_bad.append((mu, th, rho, c))
                if th <= 1 - mu + 1e-12:
                    n += 1
                    eq = enumerate_equilibria_units(mu, th, rho)
                    if not set(eq.splits) <= {(0.0, 0.0), (1.0, 1.0)}:
                        bad.append((mu, th, rho, eq.splits))
    ok = not bad and not corner_bad
    return ok, f"{n} scans with theta<=1-mu: {len(bad)} non-corner equilibria; (1,0)/(0,1) stable {len(corner_bad)} times"


def criterion_7():
    bad = []
    for tables in ("corrected", "printed"):
        for mu in GRID9:
            o = minimize_total_cost(_model(mu, 0.5, 0.25), tables, grid=(201, 201, 21))
            if not o.grid_agrees:
                bad.append((tables, mu, (o.theta, o.v_H, o.v_I), o.grid_argmin))
    v = minimize_total_cost(_model(0.6, 0.5, 0.25), "printed", check_grid=False).v_H
    ok = not bad and abs(v - 1 / 12) <= 1e-9
    return ok, f"grid agreement in both table worlds (mismatches {len(bad)}); printed v_H*(0.6)={v:.12f} vs 1/12"


def criterion_8():
    mismatches, corners, n = [], [], 0
    for mu in np.round(np.arange(0, 21) * 0.05, 10):
        for th in np.round(np.arange(1, 21) * 0.05, 10):
            for rho in RHO19:
                n += 1
                try:
                    o = maximize_total_benefit(_model(mu, th, rho))
                except SearchError as exc:
                    mismatches.append((mu, th, rho, exc.message))
                    continue
                if (o.v_H, o.v_I) in ((1.0, 0.0), (0.0, 1.0)):
                    corners.append((mu, th, rho))
    vi = printed.interior_v_H(1.0, 1.0, 1.0)
    ok = not mismatches and not corners and abs(vi - 0.0733) <= 1e-4
    return ok, f"{n} (mu,theta,rho) points: grid mismatches {len(mismatches)}, argmax at (1,0)/(0,1) {len(corners)}; published interior share at (1,1,1)={vi:.6f}"


def _case_points(case, rng, n):
    pts = []
    while len(pts) < n:
        mu, th = rng.uniform(0.02, 0.98), rng.uniform(0.02, 1.0)
        vH, vI = rng.uniform(0, 1, 2)
        if CASES[int(case_index(mu, th, vH, vI))] == case:
            pts.append((mu, th, vH, vI, rng.uniform(0.02, 0.98)))
    return pts


def criterion_9():
    rng = np.random.default_rng(9)
    worst_tc = worst_tb = 0.0
    for case in CASES:
        for mu, th, vH, vI, rho in _case_points(case, rng, 100):
            a = float(case_total_cost(case, mu, th, vH, vI))
            b = float(tc_units(mu, th, vH, vI))
            worst_tc = max(worst_tc, abs(a - b) / max(abs(b), 1e-12))
            a = float(g_closed(mu, th, rho, vH, vI))
            b = float(g_units(mu, th, rho, vH, vI))
            worst_tb = max(worst_tb, abs(a - b) / max(abs(b), 1e-12))
    m = reference_model()
    vals = (total_cost(m, (1, 1)), total_benefit(m, (1, 1)), total_benefit(m, (0, 0)))
    target = (4.4e6, 3.78e7, 3.714e7)
    ref = all(abs(v - t) <= 1e-9 * t for v, t in zip(vals, target))
    ok = worst_tc < 1e-9 and worst_tb < 1e-9 and ref
    return ok, f"worst rel err TC {worst_tc:.1e}, TB {worst_tb:.1e}; TC(1,1)={vals[0]:.6g}, TB one-way (1,1)={vals[1]:.6g}, (0,0)={vals[2]:.6g}"


def criterion_10():
    rng = np.random.default_rng(10)
    h = 1e-6
    worst = 0.0
    sign_bad = 0
    for case in CASES:
        for mu, th, vH, vI, _ in _case_points(case, rng, 100):
            # stay inside the case for every probe
            probes = [(vH + h, vI, th), (vH - h, vI, th), (vH, vI + h, th), (vH, vI - h, th), (vH, vI, th + h), (vH, vI, th - h)]
            if any(not (0 <= a <= 1 and 0 <= b <= 1 and 0 < t <= 1) or CASES[int(case_index(mu, t, a, b))] != case for a, b, t in probes):
                continue
            fd = (
                (tc_units(mu, th, vH + h, vI) - tc_units(mu, th, vH - h, vI)) / (2 * h),
                (tc_units(mu, th, vH, vI + h) - tc_units(mu, th, vH, vI - h)) / (2 * h),
                (tc_units(mu, th + h, vH, vI) - tc_units(mu, th - h, vH, vI)) / (2 * h),
            )
            col = case_total_cost_partials(case, mu, th, vH, vI)
            for x, y in zip(fd, col):
                worst = max(worst, abs(x - y) / max(abs(y), 1e-3))
            sign_bad += (fd[2] > 1e-9) + (fd[1] < -1e-9)
    rho_slope_bad = 0
    for mu in GRID9:
        for th in GRID9:
            if th > 1 - mu + 1e-12:
                continue
            for vH in np.linspace(0, 1, 11):
                for vI in np.linspace(0, 1, 11):
                    for rho in RHO19[:-1]:
                        d = (g_units(mu, th, rho + 0.01, vH, vI) - g_units(mu, th, rho, vH, vI)) / 0.01
                        rho_slope_bad += d > 1e-12
    rate_bad = 0
    for _ in range(100):
        beta = rng.uniform(0.1, 10)
        alpha = beta * rng.uniform(1.01, 10)
        s = rng.uniform(10, 1000)
        m = validate(dict(N=10000.0, s=s, H=400 * (1 + 2 * 10000 / s), kappa=alpha / 10000 * 1.5, alpha=alpha, beta=beta, mu=0.3, theta=0.5))
        r = arrival_rates(m)
        rate_bad += not (r.r_rigid == r.r_flex_early > r.r_H_flex_peak > r.r_I_flex_peak == m.s)
    ok = worst < 1e-6 and sign_bad == 0 and rho_slope_bad == 0 and rate_bad == 0
    return ok, (
        f"per-case TC derivatives worst rel err {worst:.1e}; TC sign breaks (theta, v_I) {sign_bad}; "
        f"dTB/drho > 0 hits {rho_slope_bad}; rate-order breaks {rate_bad}/100"
    )


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    ok, detail = CRITERIA[n]()
    _record(n, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    results = [_record(n, *CRITERIA[n]()) for n in sorted(CRITERIA)]
    raise SystemExit(0 if all(results) else 1)
