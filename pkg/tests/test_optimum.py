import numpy as np
import pytest

from flexbottle import printed
from flexbottle.errors import DomainError, SearchError
from flexbottle.model import reference_model
from flexbottle.optimum import (
    CONVENTIONS,
    benefit_gain,
    benefit_gain_measured,
    benefit_gain_threshold,
    interior_candidate,
    g_units,
    maximize_total_benefit,
    minimize_total_cost,
    pigouvian_region,
    case_benefit_kernel,
    total_benefit,
    total_cost,
)


def test_total_cost_reference():
    m = reference_model()
    assert total_cost(m, (1, 1)) == pytest.approx(4.4e6)
    assert total_cost(m, (0, 0)) == pytest.approx(1.4e6)


def test_total_benefit_reference():
    m = reference_model()
    assert total_benefit(m, (1, 1)) == pytest.approx(3.78e7)
    assert total_benefit(m, (0, 0)) == pytest.approx(3.714e7)
    assert total_benefit(m, (1, 1), "daily") == pytest.approx(3.56e7)
    assert g_units(0.2, 0.6, 0.25, 1.0, 1.0) == pytest.approx(-(1 - 0.2 + 2 * 0.04) * 0.25)


def test_costless_commuting_limit():
    m = reference_model(rho=1e-9)
    assert total_benefit(m, (1, 1)) == pytest.approx(m.kappa * m.H * m.N**2, rel=1e-9)


def test_daily_is_morning_at_double_rho():
    rng = np.random.default_rng(3)
    for _ in range(50):
        mu, th, r, vh, vi = rng.uniform(0.01, 0.99, 5)
        assert g_units(mu, th, r, vh, vi, "daily") == pytest.approx(g_units(mu, th, 2 * r, vh, vi))


def test_min_tc_printed_mu06():
    o = minimize_total_cost(reference_model(mu=0.6), "printed")
    assert (o.theta, o.v_I) == (1.0, 0.0)
    assert o.v_H == pytest.approx(1 / 12, abs=1e-12)
    assert o.TC_units == pytest.approx(0.355)
    assert o.grid_agrees


@pytest.mark.parametrize("tables", ["printed", "corrected"])
def test_min_tc_mu04(tables):
    o = minimize_total_cost(reference_model(mu=0.4), tables)
    assert o.v_H == 0.0 and o.TC_units == pytest.approx(0.16)


def test_min_tc_corrected_is_mu_squared():
    for mu in (0.3, 0.6, 0.9):
        o = minimize_total_cost(reference_model(mu=mu))
        assert o.v_H == 0.0 and o.TC_units == pytest.approx(mu**2)


def test_min_tc_no_households():
    o = minimize_total_cost(reference_model(mu=0.0))
    assert (o.v_H, o.v_I) == (0.0, 0.0) and o.TC == pytest.approx(0.0, abs=1e-9)


def test_tb_threshold_daily():
    m = reference_model()
    assert benefit_gain_threshold(0.6) == pytest.approx(0.18)
    a = maximize_total_benefit(m.replace(rho=0.17), "daily")
    b = maximize_total_benefit(m.replace(rho=0.19), "daily")
    assert (a.v_H, a.v_I) == (1.0, 1.0)
    assert (b.v_H, b.v_I) == (0.0, 0.0)


def test_tb_threshold_morning_is_doubled():
    m = reference_model()
    assert (maximize_total_benefit(m.replace(rho=0.35)).v_H) == 1.0
    assert (maximize_total_benefit(m.replace(rho=0.37)).v_H) == 0.0


def test_published_interior_share_value():
    assert printed.interior_v_H(1.0, 1.0, 1.0) == pytest.approx(0.0733, abs=1e-4)


def test_interior_candidate_is_stationary():
    # the published interior share is written for daily costs: it is the
    # stationary point of the morning kernel taken at twice the model rho
    mu, th, rho = 0.9, 1.0, 0.95
    v = interior_candidate(mu, th, 2 * rho, "printed")
    assert v == pytest.approx(printed.interior_v_H(mu, th, rho)) and 0 < v < 1
    h = 1e-6
    d = (printed.g_D(mu, th, v + h, 0.0, 2 * rho) - printed.g_D(mu, th, v - h, 0.0, 2 * rho)) / (2 * h)
    assert d == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("convention", CONVENTIONS)
def test_argmax_not_mixed_corner(convention):
    for mu, th, rho in [(0.2, 0.6, 0.25), (0.8, 0.9, 0.9), (0.5, 1.0, 0.5), (0.0, 0.3, 0.6), (1.0, 1.0, 0.7)]:
        o = maximize_total_benefit(reference_model(mu=mu, theta=th, rho=rho), convention)
        assert (o.v_H, o.v_I) not in ((1.0, 0.0), (0.0, 1.0))
        assert o.grid_argmax is not None


def test_corrected_candidate_is_stationary():
    # outside [0, 1] here, but it must still zero the case-D slope
    import math
    for mu, th, r in [(0.9, 1.0, 0.5), (0.7, 0.8, 1.2)]:
        v = (4 * mu + r - 3 - math.sqrt(8 * mu**2 + 4 * mu * r - 16 * mu + r**2 - 2 * r + 9)) / (4 * mu)
        d = (case_benefit_kernel("D", mu, th, v + 1e-6, 0.0, r) - case_benefit_kernel("D", mu, th, v - 1e-6, 0.0, r)) / 2e-6
        assert d == pytest.approx(0.0, abs=1e-8)


def test_printed_daily_uses_published_interior_share():
    m = reference_model(mu=0.9, theta=1.0, rho=0.95)
    o = maximize_total_benefit(m, "daily", "printed")
    assert any(k == "interior" and a == pytest.approx(printed.interior_v_H(0.9, 1.0, 0.95)) for a, _, _, k in o.candidates)


def test_case_c_table_matches_composition():
    rng = np.random.default_rng(4)
    n = 0
    while n < 100:
        mu, th, vh, vi, r = rng.uniform(0.01, 1.0, 5)
        if th + mu <= 1 or vh < (th + mu - 1) / mu:
            continue
        n += 1
        assert case_benefit_kernel("C", mu, th, vh, vi, r) == pytest.approx(g_units(mu, th, r, vh, vi), rel=1e-9)


def test_benefit_gain():
    assert benefit_gain(reference_model()) == pytest.approx(0.19091, abs=1e-4)
    assert benefit_gain(reference_model(mu=0.0, theta=1.0, rho=0.5)) == 2 / 3
    assert benefit_gain(reference_model(rho=0.1)) == 0.0
    with pytest.raises(DomainError):
        benefit_gain(reference_model(mu=0.5, theta=0.9))
    with pytest.raises(DomainError):
        benefit_gain(reference_model(rho=0.6))


def test_benefit_gain_measured_agrees():
    for mu, th, rho in [(0.2, 0.6, 0.25), (0.1, 0.5, 0.4), (0.3, 0.7, 0.5)]:
        m = reference_model(mu=mu, theta=th, rho=rho)
        assert benefit_gain_measured(m) == pytest.approx(benefit_gain(m), abs=1e-9)


def test_pigouvian_all_flex():
    r = pigouvian_region(reference_model(), (0, 0))
    assert r.sigma_H[0] is None
    assert r.sigma_H[1] == pytest.approx(-300.0, abs=1.0)
    assert r.sigma_I == r.sigma_H


def test_pigouvian_all_rigid_needs_tax():
    r = pigouvian_region(reference_model(), (1, 1))
    assert r.sigma_H[0] == pytest.approx(300.0, abs=1.0) and r.sigma_H[1] is None


def test_pigouvian_zero_admissible_when_already_unique():
    r = pigouvian_region(reference_model(rho=0.8), (0, 0))
    assert r.sigma_H[0] is None and r.sigma_H[1] > 0


def test_pigouvian_independent():
    r = pigouvian_region(reference_model(), (0, 0), mode="independent")
    assert r.mode == "independent"
    assert r.sigma_H[0] is None and r.sigma_I[0] is None


def test_pigouvian_infeasible():
    with pytest.raises(SearchError) as e:
        pigouvian_region(reference_model(), (0.5, 0.5))
    assert e.value.code == "INFEASIBLE"
