import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from largestep.dataset import CertificateKind, Dataset, MarginCertificate, generate_random
from largestep.diagnostics import (DerivedConstants, OscillationEvent, decompose,
                                   detect_oscillations, detect_oscillations_general, eta0, eta1,
                                   index_sets, stable_rate_check, transition_time,
                                   write_oscillations_csv)
from largestep.engine import Trajectory, run

from conftest import random_run


def test_constants_closed_forms():
    k = DerivedConstants(eta=1000.0, gamma=0.2, n=8)
    assert k.lambda_upper == pytest.approx(math.log(1 / (math.exp(1 / 8000) - 1)) / 0.2,
                                           rel=1e-9)
    assert k.lambda_tilde == pytest.approx(math.log(8000) / 0.2)
    assert k.eta0 == pytest.approx(max(8, 32 / 0.04 * math.log(256 / 0.04)))
    assert k.eta1 == pytest.approx(max(8, 32 / 0.04 * math.log(3 / 0.2)))
    assert k.tau_threshold == 1 / 8000 and k.loose_threshold == 2 / 1000
    assert k.threshold("two") == k.loose_threshold
    with pytest.raises(ValueError):
        k.threshold("half")


def test_lambda_keeps_digits_at_huge_eta():
    k = DerivedConstants(eta=1e12, gamma=0.5, n=2)
    # log(1/(exp(x) - 1)) ~ -log(x) - x/2 for tiny x
    x = 1 / 8e12
    assert k.lambda_upper == pytest.approx((-math.log(x) - x / 2) / 0.5, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0, 1e9), st.floats(0.01, 0.99), st.integers(1, 1000))
def test_lambda_below_lambda_tilde(eta, gamma, n):
    k = DerivedConstants(eta=eta, gamma=gamma, n=n)
    assert k.lambda_upper <= k.lambda_tilde


@settings(max_examples=100, deadline=None)
@given(st.floats(0.001, 1 / 6), st.integers(1, 10**6))
def test_eta0_dominates_eta1_for_small_gamma(gamma, n):
    assert eta0(n, gamma) >= eta1(n, gamma)


def test_decompose_orthonormal_basis():
    cert = MarginCertificate(0.3, [0.6, 0.8], CertificateKind.NOMINAL)
    w = 2 * cert.w_star + 3 * cert.v_star
    hat, tilde = decompose(w, cert)
    assert hat == pytest.approx(2.0) and tilde == pytest.approx(3.0)
    assert decompose(np.zeros(2), cert) == (0.0, 0.0)


def test_decompose_higher_dimension_returns_projection():
    cert = MarginCertificate(0.3, [1.0, 0.0, 0.0], CertificateKind.NOMINAL)
    hat, perp = decompose(np.array([1.0, 2.0, 3.0]), cert)
    assert hat == 1.0
    np.testing.assert_array_equal(perp, [0.0, 2.0, 3.0])


def _synthetic(F, w_hat, w_tilde, eta=10.0):
    F = np.asarray(F, float)
    T1 = F.size
    cert = MarginCertificate(0.5, [1.0, 0.0], CertificateKind.NOMINAL)
    W = np.column_stack([w_hat, w_tilde]).astype(float)
    z = np.zeros(T1)
    return Trajectory(dataset=Dataset([[0.5, 0.5]]), certificate=cert, eta=eta, w=W,
                      grad=np.zeros((T1, 2)), F=F, G=z, grad_norm=z, min_margin=z,
                      w_hat=np.asarray(w_hat, float), w_tilde=np.asarray(w_tilde, float))


def test_synthetic_two_step_oscillation():
    eta = 10.0
    k = DerivedConstants(eta=eta, gamma=0.5, n=1)
    lam = k.lambda_upper
    tr = _synthetic([1 / eta, 1 / eta], [2 * lam, 2 * lam], [1.0, -1.0], eta)
    events = detect_oscillations(tr, k)
    assert [e.t for e in events] == [0]
    assert events[0].growth_ratio == 1.0


@pytest.mark.parametrize("F, w_hat_scale, w_tilde", [
    ([1.0, 1e-9], 2.0, [1.0, -1.0]),    # second loss below threshold
    ([1.0, 1.0], 0.5, [1.0, -1.0]),     # w_hat below lambda
    ([1.0, 1.0], 2.0, [1.0, 0.0]),      # exact zero breaks the strict flip
    ([1.0, 1.0], 2.0, [1.0, 2.0]),      # no sign change
])
def test_synthetic_non_oscillations(F, w_hat_scale, w_tilde):
    k = DerivedConstants(eta=10.0, gamma=0.5, n=1)
    lam = k.lambda_upper
    tr = _synthetic(F, [w_hat_scale * lam] * 2, w_tilde)
    assert detect_oscillations(tr, k) == []


def test_no_events_once_loss_is_small():
    ds = Dataset([[1.0, 0.0]])
    cert = MarginCertificate(1.0, [1.0, 0.0], CertificateKind.EXACT_2D)
    tr = run(ds, cert, 100.0, t_max=20)
    assert detect_oscillations(tr, DerivedConstants(100.0, 1.0, 1)) == []


def test_transition_one_point():
    ds = Dataset([[1.0, 0.0]])
    tr = run(ds, None, 100.0, t_max=3)
    assert transition_time(tr, 1 / 800) == 1
    assert transition_time(tr, 1e-300) is None
    with pytest.raises(ValueError):
        transition_time(tr, 0.0)


def test_transition_at_least_one_for_eta_at_least_one():
    ds, cert = generate_random(2, 5, 0.3, 0)
    for eta in (1.0, 10.0, 1e4):
        tr = run(ds, cert, eta, t_max=50)
        tau = transition_time(tr, 1 / (8 * eta))
        assert tau is None or tau >= 1


def test_general_detector_matches_2d_detector():
    for seed in range(20):
        _, cert, k, tr = random_run(0.2, 8, 1, seed, grace_steps=5, record_margins=False)
        assert detect_oscillations(tr, k) == detect_oscillations_general(tr, cert, k)


def test_general_detector_cross_check_in_four_dimensions():
    total = 0
    for seed in range(30):
        ds, cert = generate_random(4, 4, 0.25, seed)
        k = DerivedConstants(eta=eta0(4, 0.25), gamma=0.25, n=4)
        tr = run(ds, cert, k.eta, stop_threshold=k.tau_threshold, grace_steps=3)
        perp = tr.w - np.outer(tr.w @ cert.w_star, cert.w_star)
        for ev in detect_oscillations_general(tr, cert, k):
            u = perp[ev.t] / np.linalg.norm(perp[ev.t])
            assert perp[ev.t + 1] @ u < 0
            assert ev.w_tilde_before == pytest.approx(np.linalg.norm(perp[ev.t]))
            total += 1
    assert total > 0


def test_general_detector_empty_without_half_space_change():
    ds = Dataset([[0.5, 0.3, 0.1], [0.5, 0.2, 0.2]])
    cert = MarginCertificate(0.5, [1.0, 0.0, 0.0], CertificateKind.NOMINAL)
    tr = run(ds, cert, 1.0, t_max=30)
    assert detect_oscillations_general(tr, cert, DerivedConstants(1.0, 0.5, 2)) == []


def test_detect_oscillations_needs_2d():
    ds, cert = generate_random(3, 3, 0.3, 0)
    tr = run(ds, cert, 10.0, t_max=3)
    with pytest.raises(ValueError):
        detect_oscillations(tr, DerivedConstants(10.0, 0.3, 3))


def test_events_satisfy_their_definition():
    for seed in range(40):
        _, _, k, tr = random_run(0.25, 4, 1, seed, grace_steps=2, record_margins=False)
        for ev in detect_oscillations(tr, k):
            assert ev.w_tilde_before * ev.w_tilde_after < 0
            assert tr.F[ev.t] > k.tau_threshold and tr.F[ev.t + 1] > k.tau_threshold
            assert ev.w_hat_before >= k.lambda_upper
            assert ev.w_hat_after >= (1 + 0.25**2) * ev.w_hat_before
            assert ev.w_hat_before <= k.eta / 0.25


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([0.2, 0.25, 0.3]), st.integers(2, 8), st.integers(0, 10**6),
       st.sampled_from([1, 3, 10]))
def test_complement_sign_constant_between_oscillations(gamma, n, seed, mult):
    _, _, k, tr = random_run(gamma, n, mult, seed, grace_steps=0, record_margins=False)
    tau = transition_time(tr, k.tau_threshold)
    events = {e.t for e in detect_oscillations(tr, k)}
    wt = tr.w_tilde
    for t in range(1, tau - 1):
        if wt[t] * wt[t + 1] < 0:
            assert t in events


def test_index_sets_partition():
    _, _, k, tr = random_run(0.25, 8, 1, 5, grace_steps=2)
    for t in range(tr.T + 1):
        dp, dm, bt = index_sets(tr, t)
        assert sorted(np.concatenate([dp, dm]).tolist()) == list(range(8))
        assert set(bt) <= set(dm) | set(dp)
        if tr.w_hat[t] > 0:
            assert set(bt) <= set(dm)


def test_index_sets_need_margins():
    _, _, _, tr = random_run(0.25, 4, 1, 0, grace_steps=0, record_margins=False)
    with pytest.raises(ValueError):
        index_sets(tr, 1)


def test_stable_rate_check():
    _, cert, k, tr = random_run(0.25, 4, 1, 1, grace_steps=100, record_margins=False)
    tau = transition_time(tr, k.tau_threshold)
    rep = stable_rate_check(tr, tau, cert, k.eta)
    assert rep.passed and not rep.skipped and rep.checked_count == 200  # rate rows t > tau plus monotone rows t >= tau
    # the tau row itself never enters the rate
    pure = stable_rate_check(tr, tr.T, cert, k.eta)
    assert pure.skipped


def test_stable_rate_check_flags_a_bump():
    e = 100.0
    F = np.array([1.0, 0.001, 0.0005, 0.0009, 0.0001])
    tr = _synthetic(F, np.zeros(5), np.zeros(5), eta=e)
    rep = stable_rate_check(tr, 1, tr.certificate, e)
    assert not rep.passed and rep.worst_t == 2


def test_oscillation_csv(tmp_path):
    ev = OscillationEvent(3, 1.0, 2.0, 0.5, -0.25)
    path = tmp_path / "o.csv"
    write_oscillations_csv([ev], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,w_hat_before,w_hat_after,w_tilde_before,w_tilde_after,growth_ratio"
    assert lines[1] == "3,1,2,0.5,-0.25,2"
