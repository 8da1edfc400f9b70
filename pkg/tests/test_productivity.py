import itertools

import numpy as np
import pytest

from flexbottle.errors import DomainError
from flexbottle.model import reference_model
from flexbottle.productivity import (
    cohort_output,
    onduty_profile,
    output_pair,
    pattern_outputs,
    window_average_output,
    window_average_output_finite,
)
from flexbottle.shortrun import build_pattern


def test_reference_outputs():
    m = reference_model()
    a = output_pair(m, (1, 1))
    assert (a.F_r, a.F_f) == pytest.approx((4000.0, 3400.0))
    b = output_pair(m, (0, 0))
    assert (b.F_r, b.F_f) == pytest.approx((3580.0, 3784.0))


def test_all_rigid_gives_full_output():
    for mu, th in [(0.1, 0.2), (0.5, 0.9), (0.9, 1.0)]:
        m = reference_model(mu=mu, theta=th)
        assert output_pair(m, (1, 1)).F_r == pytest.approx(m.kappa * m.H * m.N)


def test_printed_case_a_flex_sign():
    # the published case-a flex output carries the opposite sign on theta
    m = reference_model()
    assert output_pair(m, (1, 1), "printed").F_f == pytest.approx(3400.0)  # epsilon = 0: forms agree
    p = output_pair(m, (0.5, 0.9), "printed")
    c = output_pair(m, (0.5, 0.9))
    assert p.F_f - c.F_f == pytest.approx(2 * m.theta * m.output_unit)


def test_window_average():
    m = reference_model()
    assert window_average_output(m, 0.0, 60.0) == pytest.approx(360.0)
    assert window_average_output(m, 0.0, 1e-9) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(DomainError):
        window_average_output(m, 1.0, 1.0)


def test_window_average_limit():
    m = reference_model()
    exact = window_average_output(m, -60.0, 0.0)
    errs = [abs(window_average_output_finite(m, -60.0, 0.0, n) - exact) for n in (10, 100, 1000, 10000)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-3 * exact


def test_profile_case_b():
    m = reference_model()
    pr = onduty_profile(build_pattern(m, (0, 0)), m)
    tot = dict()
    for t, v in zip(pr.times, pr.total):
        tot.setdefault(round(t, 6), []).append(v)
    assert tot[-60.0][0] == pytest.approx(0.0) and tot[-60.0][-1] == pytest.approx(4000.0)
    assert tot[0.0] == pytest.approx([10000.0])
    assert tot[340.0] == pytest.approx([10000.0, 6000.0])
    assert tot[400.0] == pytest.approx([0.0], abs=1e-9)
    # a cohort's output is kappa times the on-duty count over its own window
    p = build_pattern(m, (0, 0))
    for w in (-60.0, -30.0, 0.0):
        assert m.kappa * pr.integral(w, w + m.H) == pytest.approx(cohort_output(p, m, w))
    # averaging over the flex starts (atom of 4000 at -60, 6000 spread on (-60, 0])
    ws = np.linspace(-60.0, 0.0, 2001)
    ramp = np.mean([cohort_output(p, m, w) for w in 0.5 * (ws[1:] + ws[:-1])])
    assert (4000 * cohort_output(p, m, -60.0) + 6000 * ramp) / 10000 == pytest.approx(3784.0, rel=1e-6)


def test_profile_all_rigid_rectangle():
    m = reference_model()
    pr = onduty_profile(build_pattern(m, (1, 1)), m)
    assert pr.integral(-1000, 1000) == pytest.approx(m.N * m.H)
    assert max(pr.total) == pytest.approx(m.N)


@pytest.mark.parametrize("split", [(0, 0), (0.5, 0.5), (1, 0.2)])
def test_profile_mass_balance(split):
    m = reference_model(mu=0.4, theta=0.9)
    pr = onduty_profile(build_pattern(m, split), m)
    assert pr.total[0] == pytest.approx(0.0, abs=1e-9)
    assert pr.total[-1] == pytest.approx(0.0, abs=1e-9)
    assert pr.integral(-1e4, 1e4) == pytest.approx(m.N * m.H)


Q = (0.0, 0.25, 0.5, 0.75, 1.0)


@pytest.mark.parametrize("mu, theta", list(itertools.product((0.0, 0.25, 0.5, 0.75, 1.0), (0.25, 0.5, 0.75, 1.0))))
def test_closed_forms_match_integration(mu, theta):
    m = reference_model(mu=mu, theta=theta)
    for vH, vI in itertools.product(Q, Q):
        p = build_pattern(m, (vH, vI))
        got = pattern_outputs(p, m)
        want = output_pair(m, (vH, vI))
        assert np.array([got.F_r, got.F_f_H, got.F_f_I]) == pytest.approx(
            np.array([want.F_r, want.F_f_H, want.F_f_I]), rel=1e-6
        )
