import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchor_deploy.ranging import (
    CHARACTERISATION_TABLE,
    RangingNoiseModel,
    fit_bias_model,
    propagated_sigma_eta,
    range_deployed_anchor,
    range_true_anchor,
    read_calibration_csv,
)

TINY = 1e-12


def test_noiseless_range():
    m = RangingNoiseModel(TINY)
    assert range_true_anchor(m, (0, 0), (3, 4)) == pytest.approx(5.0, abs=1e-9)


def test_model_validation():
    with pytest.raises(ValueError):
        RangingNoiseModel(0.0)
    with pytest.raises(ValueError):
        RangingNoiseModel(0.1, sigma_table=((1.0, 0.0),))
    with pytest.raises(ValueError):
        range_true_anchor(RangingNoiseModel(0.1), (1, 1), (1, 1))


@pytest.mark.parametrize("rho, mean, std", [(3.0, 3.10, 0.0231), (7.0, 7.18, 0.16), (1.0, 1.06, 0.029)])
def test_characterised_model_reproduces_table(rho, mean, std):
    m = RangingNoiseModel.from_characterisation(seed=1)
    x = np.array([range_true_anchor(m, (0, 0), (rho, 0)) for _ in range(3000)])
    # model mean sits on the fitted line, a few mm off the tabulated mean
    model_mean = rho + m.bias_at(rho)
    se = std / math.sqrt(len(x))
    assert abs(x.mean() - model_mean) < 3 * se
    assert model_mean == pytest.approx(mean, abs=0.005)
    assert abs(x.std(ddof=1) - std) < 3 * std / math.sqrt(2 * (len(x) - 1))


def test_same_seed_same_stream():
    a = RangingNoiseModel(0.05, seed=42).measure(np.full(100, 5.0))
    b = RangingNoiseModel(0.05, seed=42).measure(np.full(100, 5.0))
    c = RangingNoiseModel(0.05, seed=43).measure(np.full(100, 5.0))
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != c.tobytes()


def test_sigma_interpolation_flat_beyond_table():
    m = RangingNoiseModel(0.05, sigma_table=((1.0, 0.01), (3.0, 0.03)))
    np.testing.assert_allclose(m.sigma_at([0.5, 2.0, 10.0]), [0.01, 0.02, 0.03])


def test_compensation_inverts_bias():
    m = RangingNoiseModel(TINY, bias_intercept=0.04, bias_slope=0.02)
    rho = np.array([1.0, 4.0, 9.0])
    np.testing.assert_allclose(m.compensate(m.measure(rho)), rho, atol=1e-9)


# --- deployed anchors ------------------------------------------------------------


def test_zero_offset_matches_true_anchor():
    a = RangingNoiseModel(0.05, seed=3)
    b = RangingNoiseModel(0.05, seed=3)
    for s in [(1, 2), (7, -3), (0.5, 9)]:
        assert range_deployed_anchor(a, (4, 4), (0, 0), s) == range_true_anchor(b, (4, 4), s)


def test_deployed_offset_hand_value():
    m = RangingNoiseModel(TINY)
    got = range_deployed_anchor(m, (5, 5), (0.15, 0.05), (0, 0))
    assert got == pytest.approx(math.hypot(4.85, 4.95), abs=1e-9)
    assert got == pytest.approx(6.930, abs=5e-4)


def test_deployed_first_order_expansion():
    m = RangingNoiseModel(TINY)
    a_hat = np.array([5.0, 5.0])
    s = np.array([0.0, 0.0])
    F = (a_hat - s) / np.linalg.norm(a_hat - s)
    for scale in [1e-1, 1e-2, 1e-3]:
        delta = scale * np.array([0.6, -0.8])
        exact = range_deployed_anchor(m, a_hat, delta, s)
        # moving the anchor by -delta changes the range by -F.delta to first order
        linear = np.linalg.norm(s - a_hat) - F @ delta
        assert abs(exact - linear) < 2 * scale**2


# --- calibration fit ----------------------------------------------------------------


def test_fit_table_means():
    c0, c1 = fit_bias_model([(r, r + b) for r, b, _ in CHARACTERISATION_TABLE])
    # closed-form LS through (1, .06), (3, .10), (7, .18)
    x = np.array([1.0, 3.0, 7.0])
    y = np.array([0.06, 0.10, 0.18])
    slope = ((x - x.mean()) @ (y - y.mean())) / ((x - x.mean()) @ (x - x.mean()))
    assert c1 == pytest.approx(slope, rel=1e-12)
    assert c0 == pytest.approx(y.mean() - slope * x.mean(), rel=1e-12)
    # the three means are collinear
    assert c1 == pytest.approx(0.02, abs=1e-12)
    assert c0 == pytest.approx(0.04, abs=1e-12)


def test_fit_exact_line_and_zero_bias():
    assert fit_bias_model([(1, 1.5), (2, 2.7), (5, 6.3)]) == pytest.approx((0.3, 0.2))
    rng = np.random.default_rng(0)
    rho = rng.uniform(1, 10, 2000)
    c0, c1 = fit_bias_model(np.column_stack([rho, rho + rng.normal(0, 0.01, rho.size)]))
    assert abs(c0) < 3e-3 and abs(c1) < 5e-4


def test_fit_needs_distinct_distances():
    with pytest.raises(ValueError):
        fit_bias_model([(2, 2.1), (2, 2.2)])


def test_calibration_csv(tmp_path):
    f = tmp_path / "cal.csv"
    f.write_text("true_distance,measured\n1,1.06\n3,3.10\n")
    assert read_calibration_csv(f) == [(1.0, 1.06), (3.0, 3.10)]
    f.write_text("d,m\n1,1\n")
    with pytest.raises(ValueError):
        read_calibration_csv(f)


# --- propagated variance --------------------------------------------------------------


def test_propagated_sigma_examples():
    assert propagated_sigma_eta(0.05, (1, 0), np.zeros((2, 2))) == pytest.approx(0.0025)
    assert propagated_sigma_eta(0.05, (1, 0), np.diag([0.01, 0.02])) == pytest.approx(0.0125)
    r = 1 / math.sqrt(2)
    assert propagated_sigma_eta(0.05, (r, r), np.diag([0.3, 0.3])) == pytest.approx(0.0025 + 0.3)


def test_propagated_sigma_rejects_bad_covariance():
    with pytest.raises(ValueError):
        propagated_sigma_eta(0.05, (1, 0), [[1, 0.5], [0, 1]])
    with pytest.raises(ValueError):
        propagated_sigma_eta(0.05, (1, 0), [[1, 0], [0, -1]])


def _psd(seed):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(2, 2))
    return L @ L.T


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1), st.floats(0, 2 * math.pi), st.floats(0.001, 1))
def test_propagated_sigma_monotone(s1, s2, angle, sigma):
    X1 = _psd(s1)
    X2 = X1 + _psd(s2)  # X1 <= X2 in the PSD order
    F = (math.cos(angle), math.sin(angle))
    v1 = propagated_sigma_eta(sigma, F, X1)
    assert v1 >= sigma**2 - 1e-15
    assert v1 <= propagated_sigma_eta(sigma, F, X2) + 1e-12
