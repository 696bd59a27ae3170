import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from largestep.dataset import Dataset, generate_random
from largestep.engine import (default_horizon, evaluate_points, gd_step, gradient,
                              logistic_losses, loss, potential, run, sigmoid_weights,
                              write_trajectory_csv)
from largestep.exceptions import NumericalError, TheoryViolation
from largestep.lowerbound import hard_dataset_stable, hard_certificate

mpmath.mp.dps = 50


def _mp_loss(a):
    return float(mpmath.log1p(mpmath.exp(-mpmath.mpf(a))))


def _mp_sigma(a):
    return float(1 / (mpmath.exp(mpmath.mpf(a)) + 1))


@settings(max_examples=300, deadline=None)
@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_pointwise_loss_and_weight_match_high_precision(a):
    assert logistic_losses(a) == pytest.approx(_mp_loss(a), rel=4e-16, abs=1e-300)
    assert sigmoid_weights(a) == pytest.approx(_mp_sigma(a), rel=4e-16, abs=1e-300)


def test_loss_at_zero_is_log2():
    ds, _ = generate_random(3, 7, 0.3, 0)
    assert loss(np.zeros(3), ds) == pytest.approx(math.log(2.0), rel=1e-15)
    assert potential(np.zeros(3), ds) == 0.5


def test_loss_no_overflow_at_large_margins():
    ds = Dataset([[1.0, 0.0]])
    assert loss(np.array([800.0, 0.0]), ds) == 0.0
    assert loss(np.array([-800.0, 0.0]), ds) == pytest.approx(800.0, rel=1e-15)
    g = gradient(np.array([-800.0, 0.0]), ds)
    np.testing.assert_allclose(g, [-1.0, 0.0])


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_loss_non_finite_is_an_error():
    ds = Dataset([[-0.7, -0.7]])
    with pytest.raises(NumericalError):
        loss(np.array([1.7e308, 1.7e308]), ds)
    with pytest.raises(ValueError):
        loss(np.array([np.nan, 0.0]), ds)


def test_first_step_is_half_mean_of_rows():
    ds, _ = generate_random(2, 5, 0.25, 4)
    eta = 37.5
    w1 = gd_step(np.zeros(2), eta, ds)
    np.testing.assert_allclose(w1, eta / (2 * ds.n) * ds.points.sum(axis=0), rtol=1e-15)


def _central_difference(ds, w, h=1e-6):
    g = np.empty_like(w)
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = h
        g[j] = (loss(w + e, ds) - loss(w - e, ds)) / (2 * h)
    return g


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for probe in range(50):
        d = int(rng.integers(2, 6))
        n = int(rng.integers(1, 12))
        ds, _ = generate_random(d, n, float(rng.uniform(0.05, 0.9)), probe)
        w = rng.normal(size=d) * rng.uniform(0.1, 3.0)
        g = gradient(w, ds)
        fd = _central_difference(ds, w)
        worst = max(worst, np.linalg.norm(fd - g) / np.linalg.norm(g))
    assert worst <= 1e-6


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 5), st.integers(1, 20), st.floats(0.05, 0.95), st.integers(0, 10**9),
       st.floats(-50, 50), st.floats(-50, 50))
def test_gradient_norm_below_loss(d, n, gamma, seed, s1, s2):
    ds, _ = generate_random(d, n, gamma, seed)
    w = np.zeros(d)
    w[0], w[-1] = s1, s2
    assert np.linalg.norm(gradient(w, ds)) <= loss(w, ds) * (1 + 1e-12) + 1e-300


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5), st.integers(1, 20), st.floats(0.05, 0.95), st.integers(0, 10**9),
       st.floats(0, 100))
def test_loss_at_most_twice_potential_when_all_margins_positive(d, n, gamma, seed, c):
    ds, cert = generate_random(d, n, gamma, seed)
    w = c * cert.w_star
    assert loss(w, ds) <= 2 * potential(w, ds) * (1 + 1e-12) + 1e-300


def test_potential_decreases_along_max_margin_ray():
    ds, cert = generate_random(2, 6, 0.3, 8)
    vals = [potential(c * cert.w_star, ds) for c in np.linspace(0, 200, 41)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_default_horizon_value():
    g, n = 0.2, 8
    assert default_horizon(n, g) == math.ceil(4 * (2 + 4 * n / g
                                                   + 142 * math.log(2 / g**2) / g**2))


def test_run_zero_steps():
    ds, cert = generate_random(2, 3, 0.3, 1)
    tr = run(ds, cert, 10.0, t_max=0)
    assert tr.T == 0 and len(tr) == 1
    assert tr.F[0] == pytest.approx(math.log(2.0))


def test_run_one_point_one_step():
    ds = Dataset([[1.0, 0.0]])
    tr = run(ds, None, 100.0, t_max=1)
    np.testing.assert_array_equal(tr.w[1], [50.0, 0.0])
    assert tr.F[1] == pytest.approx(math.log1p(math.exp(-50.0)), rel=1e-15)
    assert tr.F[1] <= 1 / 800


def test_run_is_bit_reproducible(tmp_path):
    ds, cert = generate_random(2, 8, 0.2, 42)
    a = run(ds, cert, 5000.0, t_max=300, record_margins=True)
    b = run(ds, cert, 5000.0, t_max=300, record_margins=True)
    assert np.array_equal(a.w, b.w) and np.array_equal(a.margins, b.margins)
    write_trajectory_csv(a, tmp_path / "a.csv")
    write_trajectory_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_run_matches_repeated_gd_step():
    ds, cert = generate_random(3, 5, 0.3, 9)
    tr = run(ds, cert, 123.0, t_max=20)
    w = np.zeros(3)
    for t in range(20):
        w = gd_step(w, 123.0, ds)
        np.testing.assert_array_equal(w, tr.w[t + 1])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10), st.floats(0.05, 0.9), st.integers(0, 10**6), st.floats(0.1, 1e5))
def test_steps_move_at_most_eta(n, gamma, seed, eta):
    ds, cert = generate_random(2, n, gamma, seed)
    tr = run(ds, cert, eta, t_max=30)
    assert np.all(np.linalg.norm(np.diff(tr.w, axis=0), axis=1) <= eta * (1 + 1e-12))


def test_trajectory_metrics_consistent():
    ds, cert = generate_random(2, 4, 0.25, 3)
    tr = run(ds, cert, 900.0, t_max=40, record_margins=True)
    np.testing.assert_allclose(tr.w_hat**2 + tr.w_tilde**2,
                               np.sum(tr.w**2, axis=1), rtol=1e-9, atol=1e-9)
    assert np.all((tr.G >= 0) & (tr.G <= 1)) and np.all(tr.F >= 0)
    np.testing.assert_array_equal(tr.min_margin, tr.margins.min(axis=1))
    avg = tr.running_average_potential()
    assert avg[0] == tr.G[0] and avg[-1] == pytest.approx(tr.G.mean())


def test_margins_only_kept_on_request():
    ds, cert = generate_random(2, 4, 0.25, 3)
    tr = run(ds, cert, 10.0, t_max=5)
    assert not tr.has_margins
    assert tr.all_margins().shape == (6, 4)


def test_stop_threshold_and_grace():
    ds, cert = generate_random(2, 4, 0.25, 3)
    eta = 5000.0
    thr = 1 / (8 * eta)
    tr = run(ds, cert, eta, stop_threshold=thr, grace_steps=7)
    first = int(np.flatnonzero(tr.F <= thr)[0])
    assert tr.T == first + 7


def test_theory_violation_warning_when_horizon_too_short():
    ds, params = hard_dataset_stable(2, 1 / 12)
    cert = hard_certificate(1 / 12)
    with pytest.warns(TheoryViolation):
        run(ds, cert, params.eta, t_max=3, stop_threshold=1 / (8 * params.eta),
            eta0=params.eta)
    with warnings.catch_warnings():
        warnings.simplefilter("error", TheoryViolation)
        run(ds, cert, params.eta, t_max=3, stop_threshold=1 / (8 * params.eta),
            eta0=10 * params.eta)


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_run_reports_offending_step():
    ds = Dataset([[-0.7, -0.7]])
    with pytest.raises(NumericalError) as info:
        run(ds, None, 1.0, t_max=2, w0=np.array([1.7e308, 1.7e308]))
    assert info.value.step == 0


def test_run_requires_horizon_without_certificate():
    with pytest.raises(ValueError):
        run(Dataset([[1.0, 0.0]]), None, 1.0)
    with pytest.raises(ValueError):
        run(Dataset([[1.0, 0.0]]), None, -1.0, t_max=3)


def test_evaluate_points_probe_set():
    ds, cert = generate_random(2, 5, 0.3, 1)
    probes = np.random.default_rng(0).normal(size=(10, 2)) * 5
    tr = evaluate_points(ds, probes, cert)
    for k in range(10):
        assert tr.F[k] == pytest.approx(loss(probes[k], ds), rel=1e-14)


def test_trajectory_csv_format(tmp_path):
    ds, cert = generate_random(2, 3, 0.3, 1)
    tr = run(ds, cert, 50.0, t_max=3)
    path = tmp_path / "t.csv"
    write_trajectory_csv(tr, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,F,G,grad_norm,w_hat,w_tilde,min_margin"
    assert len(lines) == 5
    assert float(lines[1].split(",")[1]) == tr.F[0]
