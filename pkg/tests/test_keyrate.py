import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from passive_tfqkd.decoy_lp import ESTIMATED_KEYS, YieldBounds, estimate_yields
from passive_tfqkd.errors import DomainError, InfeasibleError
from passive_tfqkd.keyrate import (LeakageCaps, binary_entropy, entropy_h, information_leakage,
                                   plob_bound, secret_key_rate, x_upper_bounds)
from passive_tfqkd.validation import leakage_grid_oracle, leakage_instances

from test_decoy_lp import passive_dists, passive_lp

# caps at 100 km from four-intensity passive bounds (mu_laser 0.2, t1 = t2 = 0.5,
# t3 = 0.7, mu_code 0.05); values from a 40-digit series summed to n, m < 80
CAPS_FOUR_INTENSITY_100KM = (0.00032640642297571036711, 0.0017949120728729213,
                             0.00014342975223678835777, 0.0017949120728729213)


def bounds(upper, y2=1.0):
    return YieldBounds(dict(upper), {k: 0.0 for k in upper}, y2)


def mp_caps(mu, upper, size=80):
    with mpmath.workdps(40):
        mu = mpmath.mpf(mu)

        def prob(k):
            return mpmath.exp(-mu) * mu ** k / mpmath.factorial(k)

        out = []
        for pa, pb in ((0, 0), (1, 0), (1, 1), (0, 1)):
            s = mpmath.fsum(mpmath.sqrt(prob(n) * prob(m) * mpmath.mpf(upper.get((n, m), 1.0)))
                            for n in range(pa, size, 2) for m in range(pb, size, 2))
            out.append(float(s ** 2))
        return out


# -- entropy ------------------------------------------------------------------

def test_entropy_examples():
    assert entropy_h(0.5, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert entropy_h(0.25, 0.25) == pytest.approx(0.5, abs=1e-15)
    for x in (0.0, 1e-9, 0.3, 2.0):
        assert entropy_h(x, 0.0) == 0.0
        assert entropy_h(0.0, x) == 0.0


def test_entropy_rejects_negative():
    with pytest.raises(DomainError):
        entropy_h(-0.1, 0.2)
    with pytest.raises(DomainError):
        binary_entropy(1.5)


@given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
def test_entropy_matches_definition(x, y):
    direct = -x * math.log2(x) - y * math.log2(y) + (x + y) * math.log2(x + y)
    assert entropy_h(x, y) == pytest.approx(direct, abs=1e-12)


def test_binary_entropy_reference():
    assert binary_entropy(0.03) == pytest.approx(0.19439, abs=1e-5)
    assert binary_entropy(0.9) == pytest.approx(0.46900, abs=1e-5)


# -- caps ---------------------------------------------------------------------

def test_caps_with_unit_yields():
    mu = 0.1
    caps = x_upper_bounds(mu, bounds({k: 1.0 for k in ESTIMATED_KEYS}))
    # with every yield 1 the double sum factorizes
    even = sum(math.sqrt(math.exp(-mu) * mu ** k / math.factorial(k)) for k in range(0, 60, 2))
    odd = sum(math.sqrt(math.exp(-mu) * mu ** k / math.factorial(k)) for k in range(1, 60, 2))
    assert caps.cap_00 == pytest.approx(even ** 4, rel=1e-12)
    assert caps.cap_11 == pytest.approx(odd ** 4, rel=1e-12)
    assert caps.cap_10 == pytest.approx((even * odd) ** 2, rel=1e-12)
    assert caps.cap_01 == pytest.approx(caps.cap_10, rel=1e-14)


def test_caps_at_zero_intensity():
    caps = x_upper_bounds(0.0, bounds({(0, 0): 3e-6, (1, 0): 0.5, (1, 1): 0.5}))
    assert caps.cap_00 == pytest.approx(3e-6, rel=1e-14)
    assert caps.cap_10 == caps.cap_01 == caps.cap_11 == 0.0


def test_caps_reject_negative_intensity():
    with pytest.raises(DomainError):
        x_upper_bounds(-0.1, bounds({}))


def test_caps_four_intensity_fixture():
    optics, _ = passive_dists(2)
    yb = estimate_yields(passive_lp(2, 100.0))
    caps = x_upper_bounds(optics.mu_code, yb)
    got = (caps.cap_00, caps.cap_10, caps.cap_11, caps.cap_01)
    assert got == pytest.approx(CAPS_FOUR_INTENSITY_100KM, rel=1e-9)
    # the closed-form assembly must also agree with the long series for these yields
    assert got == pytest.approx(mp_caps(optics.mu_code, yb.upper), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.5),
       st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6),
       st.integers(0, 5), st.floats(0.0, 1.0))
def test_caps_monotone_in_yields(mu, values, which, bump):
    upper = dict(zip(ESTIMATED_KEYS, values))
    raised = dict(upper)
    key = ESTIMATED_KEYS[which]
    raised[key] = min(1.0, raised[key] + bump)
    a = x_upper_bounds(mu, bounds(upper))
    b = x_upper_bounds(mu, bounds(raised))
    for name in ("cap_00", "cap_10", "cap_11", "cap_01"):
        assert getattr(b, name) >= getattr(a, name)


# -- leakage ------------------------------------------------------------------

def test_leakage_forced_vacuum():
    q = 0.01
    assert information_leakage(LeakageCaps(q, 0.0, 0.0, 0.0, q)) == pytest.approx(0.0, abs=1e-12)


def test_leakage_all_caps_large():
    q = 0.02
    assert information_leakage(LeakageCaps(q, q, q, q, q)) == pytest.approx(1.0, abs=1e-9)


def test_leakage_binary_split():
    q = 0.004
    val = information_leakage(LeakageCaps(0.9 * q, 0.1 * q, 0.0, 0.0, q))
    assert val == pytest.approx(0.46900, abs=1e-5)


def test_leakage_infeasible():
    with pytest.raises(InfeasibleError):
        information_leakage(LeakageCaps(0.1, 0.1, 0.1, 0.1, 0.5))
    with pytest.raises(InfeasibleError):
        information_leakage(LeakageCaps(0.1, 0.1, 0.1, 0.1, 0.0))
    with pytest.raises(DomainError):
        LeakageCaps(-1e-3, 0.1, 0.1, 0.1, 0.1)


def test_leakage_matches_grid_oracle():
    worst = 0.0
    for caps in leakage_instances(100):
        worst = max(worst, abs(information_leakage(caps) - leakage_grid_oracle(caps)))
    assert worst <= 1e-4


caps_strategy = st.tuples(*(st.floats(0.0, 1.2) for _ in range(4)))


@settings(max_examples=60, deadline=None)
@given(caps_strategy, st.integers(0, 3), st.floats(0.0, 0.5))
def test_leakage_monotone_in_caps(caps, which, bump):
    if sum(caps) < 1.0:
        caps = tuple(c + (1.0 - sum(caps)) / 4 + 1e-9 for c in caps)
    larger = list(caps)
    larger[which] += bump
    a = information_leakage(LeakageCaps(*caps, 1.0))
    b = information_leakage(LeakageCaps(*larger, 1.0))
    assert 0.0 <= a <= 1.0
    assert b >= a - 1e-7


# -- key rate and reference bound ---------------------------------------------

def test_rate_examples():
    assert secret_key_rate(0.01, 0.0, 0.0) == pytest.approx(0.01, rel=1e-15)
    h = binary_entropy(0.03)
    assert secret_key_rate(0.01, 0.03, 1.0) == pytest.approx(-0.01 * 1.15 * h, rel=1e-14)
    assert secret_key_rate(0.01, 0.03, 0.2, 1.15) == pytest.approx(
        0.01 * (1 - 1.15 * 0.19439 - 0.2), abs=1e-7)


@given(st.floats(0.0, 1.0), st.floats(0.0, 0.5), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_rate_linear_in_leakage(q, er, i1, i2):
    r1 = secret_key_rate(q, er, i1)
    r2 = secret_key_rate(q, er, i2)
    assert r1 - r2 == pytest.approx(-q * (i1 - i2), abs=1e-15)
    assert r1 <= q


def test_plob_examples():
    assert plob_bound(0.5) == pytest.approx(1.0, abs=1e-15)
    assert plob_bound(0.1) == pytest.approx(0.15200, abs=1e-5)
    assert plob_bound(1e-9) == pytest.approx(1e-9 / math.log(2), rel=1e-8)
    assert plob_bound(0.0) == 0.0
    with pytest.raises(DomainError):
        plob_bound(1.0)
    with pytest.raises(DomainError):
        plob_bound(-0.1)


def test_plob_increasing():
    etas = np.linspace(0.0, 0.99, 50)
    vals = [plob_bound(e) for e in etas]
    assert all(b > a for a, b in zip(vals, vals[1:]))
