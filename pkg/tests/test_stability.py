import pytest

from dcplatoon.controller import GROUP_2, CascadeGains
from dcplatoon.stability import StabilityPartials, check_stability, evaluate, partials

ZERO = CascadeGains(0, 0, 0, 0, 0, 0)


def test_group2_partials_hand_values():
    p = partials(GROUP_2, ht=0.8, Ts=0.02, tau=0.7)
    r = 0.02 / 0.7
    assert p.f_v == pytest.approx(-r * 0.8 * 40, abs=1e-12)
    assert p.f_ex_dot == pytest.approx(-r * 5, abs=1e-12)
    assert p.f_d == pytest.approx(r * 8, abs=1e-12)
    assert (p.f_v, p.f_ex_dot, p.f_d) == pytest.approx((-0.914286, -0.142857, 0.228571), abs=1e-6)


def test_group2_margins():
    _, v = evaluate(GROUP_2, ht=0.8, Ts=0.02, tau=0.7)
    assert v.margin_local == pytest.approx(-0.771429, abs=1e-6)
    assert v.margin_asymptotic == pytest.approx(0.058776, abs=1e-6)
    assert v.local and v.asymptotic and v.stable


def test_zero_gains_fail_strictly():
    p = partials(ZERO, 0.8, 0.02, 0.7)
    assert (p.f_v, p.f_ex_dot, p.f_d) == (0, 0, 0)
    v = check_stability(p)
    assert not v.local and not v.asymptotic


def test_unit_parameters():
    p = partials(CascadeGains(1, 0, 0, 1, 0, 0), ht=1, Ts=1, tau=1)
    assert (p.f_v, p.f_ex_dot, p.f_d) == (-1, -1, 1)
    v = check_stability(p)
    assert v.margin_local == 0 and not v.local
    assert v.margin_asymptotic == pytest.approx(-1.5) and not v.asymptotic


def test_time_independence_without_integral_gains():
    ps = [partials(GROUP_2, 0.8, 0.02, 0.7, t=t) for t in (0, 1, 100)]
    assert ps[0] == ps[1] == ps[2]


def test_integral_gains_enter_through_time():
    g = CascadeGains(1, 2, 0, 3, 4, 5)
    p = partials(g, ht=1, Ts=1, tau=1, t=2)
    assert p.f_v == pytest.approx(-(0.5 * 2 * 4 * 4 + (2 * 3 + 1 * 4) * 2 + 1 * 3 + 2 * 5))
    assert p.f_ex_dot == pytest.approx(-(4 * 2 + 3))
    assert p.f_d == pytest.approx(2 * 2 + 1)


@pytest.mark.parametrize("c", [0.5, 2.0, 7.0])
def test_tau_scaling(c):
    p1, v1 = evaluate(GROUP_2, 0.8, 0.02, 0.7)
    p2, v2 = evaluate(GROUP_2, 0.8, 0.02, 0.7 * c)
    assert p2.f_v == pytest.approx(p1.f_v / c)
    assert p2.f_ex_dot == pytest.approx(p1.f_ex_dot / c)
    assert p2.f_d == pytest.approx(p1.f_d / c)
    assert (v1.margin_local < 0) == (v2.margin_local < 0)
    expected = 0.5 * p2.f_v**2 - p2.f_v * p2.f_ex_dot - p2.f_d
    assert v2.margin_asymptotic == pytest.approx(expected)


def test_domain_errors():
    with pytest.raises(ValueError):
        partials(GROUP_2, 0.8, 0.02, 0.0)
    with pytest.raises(ValueError):
        partials(GROUP_2, 0.8, 0.0, 0.7)


def test_verdict_from_raw_partials():
    v = check_stability(StabilityPartials(-0.914286, -0.142857, 0.228571))
    assert v.local and v.asymptotic
