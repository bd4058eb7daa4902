import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rhpe.exceptions import DegenerateRegularizationError, InvalidInputError
from rhpe.hpe_core import (
    TRACE_COLUMNS,
    HpeCertificate,
    RateConstants,
    Trace,
    extragradient_update,
    gamma_from_stepsizes,
    gamma_sequence,
    lemma_sandwich,
    pointwise_rate_bounds,
    theta,
    verify_hpe_condition,
)


def cert(y, v, eps=0.0, lam=1.0):
    y, v = np.atleast_1d(np.asarray(y, float)), np.atleast_1d(np.asarray(v, float))
    return HpeCertificate(y=y, v=v, b=v, eps=eps, lam=lam)


def test_verify_examples():
    ok, lhs, rhs = verify_hpe_condition([1.0], cert(0.5, 0.5), 0.0)
    assert ok and lhs == 0.0 and rhs == 0.0
    ok, lhs, rhs = verify_hpe_condition([1.0], cert(0.5, 0.6), 0.5)
    assert ok and lhs == pytest.approx(0.01, abs=1e-15) and rhs == 0.0625
    ok, lhs, rhs = verify_hpe_condition([1.0], cert(0.5, 0.6), 0.1)
    assert not ok and lhs == pytest.approx(0.01, abs=1e-15) and rhs == pytest.approx(0.0025, abs=1e-15)


def test_verify_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        verify_hpe_condition([1.0, 2.0], cert(0.5, 0.5), 0.5)
    with pytest.raises(InvalidInputError):
        verify_hpe_condition([1.0], cert(0.5, 0.5, eps=-1.0), 0.5)
    with pytest.raises(InvalidInputError):
        verify_hpe_condition([np.nan], cert(0.5, 0.5), 0.5)


def test_extragradient_examples():
    assert np.array_equal(extragradient_update([1.0, 0.0], 0.5, [2.0, 0.0]), [0.0, 0.0])
    assert np.array_equal(extragradient_update([1.0, 3.0], 0.5, [0.0, 0.0]), [1.0, 3.0])
    assert np.array_equal(extragradient_update([1.0], 1.0, [0.5]), [0.5])


def test_theta_examples():
    assert theta(1.0, 0.5, 0.0) == 0.5
    assert theta(1.0, 1.0, math.sqrt(0.5)) == pytest.approx(0.4, rel=1e-15)
    assert theta(1e12, 1.0, 0.0) == pytest.approx(1.0, rel=1e-11)
    with pytest.raises(DegenerateRegularizationError):
        theta(1.0, 0.0, 0.5)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(0, 0.99), st.floats(1.01, 4))
def test_theta_range_and_monotone(lam, mu, sigma, f):
    t = theta(lam, mu, sigma)
    assert 0 < t < 1
    assert theta(lam * f, mu, sigma) >= t
    assert theta(lam, mu * f, sigma) >= t
    assert RateConstants.from_params(lam, mu, sigma).theta == t


def test_rate_bound_examples():
    v, e, x = pointwise_rate_bounds(1, 1.0, 1.0, 0.5, 0.0)
    assert v == 1.0 and e == 0.0 and x == pytest.approx(math.sqrt(0.5), rel=1e-15)
    v3, e3, _ = pointwise_rate_bounds(3, 1.0, 1.0, 0.5, 0.0)
    assert v3 == pytest.approx(0.5, rel=1e-15) and e3 == 0.0


@given(st.integers(1, 50), st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.01, 0.95))
def test_rate_bounds_geometric(k, lam, mu, sigma):
    r = math.sqrt(1 - theta(lam, mu, sigma))
    a = pointwise_rate_bounds(k, 1.0, lam, mu, sigma)
    b = pointwise_rate_bounds(k + 1, 1.0, lam, mu, sigma)
    assert b[0] == pytest.approx(a[0] * r, rel=1e-12)
    assert b[1] == pytest.approx(a[1] * r * r, rel=1e-12)
    assert b[2] == pytest.approx(a[2] * r, rel=1e-12)


def test_gamma_examples():
    g = gamma_sequence([0.5, 0.5])
    assert g[0] == pytest.approx(math.sqrt(0.5), abs=1e-15) and g[1] == pytest.approx(0.5, abs=1e-15)
    # theta_1 for lam=1, mu=0.1, sigma=0 is (1/0.2 + 1)^-1 = 1/6
    t1 = theta(1.0, 0.1, 0.0)
    assert t1 == pytest.approx(1 / 6, rel=1e-15)
    assert gamma_sequence([t1])[0] == pytest.approx(math.sqrt(5 / 6), rel=1e-15)
    assert gamma_from_stepsizes([1.0], 0.1, 0.0)[0] == pytest.approx(math.sqrt(5 / 6), rel=1e-15)


@given(st.floats(1e-6, 1 - 1e-6), st.integers(1, 300))
def test_gamma_constant_theta(t, n):
    g = gamma_sequence([t] * n)
    k = np.arange(1, n + 1)
    assert np.max(np.abs(g - (1 - t) ** (k / 2))) <= 1e-14


@given(st.lists(st.floats(1e-6, 1 - 1e-6), min_size=1, max_size=40))
def test_gamma_decreasing_and_bounded(ts):
    g = gamma_sequence(ts)
    assert np.all(np.diff(g) < 0)
    k = np.arange(1, len(ts) + 1)
    assert np.all(g <= (1 - min(ts)) ** (k / 2) * (1 + 1e-12))


@pytest.mark.parametrize("bad", [[0.0], [1.0], [0.5, 1.2], [np.nan]])
def test_gamma_rejects(bad):
    with pytest.raises(InvalidInputError):
        gamma_sequence(bad)


def test_gamma_unregularized_is_one():
    assert np.array_equal(gamma_from_stepsizes([0.5, 0.5], 0.0, 0.5), [1.0, 1.0])


@given(st.floats(0, 0.99), st.floats(-5, 5), st.floats(0.01, 5))
def test_sandwich_holds_for_valid_steps(sigma, x, lam):
    # y at distance 1 from x; choose lam v so that the residual has norm exactly sigma
    y = np.array([x + 1.0])
    v = (np.array([x]) - y) / lam + sigma / lam
    c = HpeCertificate(y, v, v, 0.0, lam)
    assert verify_hpe_condition([x], c, sigma)[0]
    assert lemma_sandwich(np.array([x]), c, sigma)


def test_trace_roundtrip(tmp_path):
    cols = {"lam": [0.5, 0.5], "lhs": [0.1, 0.2], "rhs": [0.3, 0.4], "v_norm": [1.0, 0.5],
            "b_norm": [1.0, 0.5], "eps": [0.0, 0.0], "y_dist_x0": [0.0, 0.1], "gamma": [0.9, 0.8]}
    pts = {k: np.zeros((2, 1)) for k in ("x_prev", "x_next", "y")}
    t = Trace(cols, pts)
    assert len(t) == 2 and t.all_pass()
    assert t[-1].k == 2 and t[0].gamma == 0.9 and t[1].x_prev.shape == (1,)
    assert [r.k for r in t] == [1, 2]
    with pytest.raises(IndexError):
        t[2]
    both = Trace.concat([t, Trace(), t])
    assert len(both) == 4 and both.points["y"].shape == (4, 1)
    p = tmp_path / "t.csv"
    t.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert lines[1].split(",")[0] == "1" and float(lines[2].split(",")[3]) == 0.4


def test_trace_rejects_ragged():
    with pytest.raises(InvalidInputError):
        Trace({"lam": [1.0], "lhs": [1.0, 2.0]})
