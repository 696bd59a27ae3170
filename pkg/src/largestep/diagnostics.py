"""Decomposition along the max-margin direction, oscillations and transition time."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive


@dataclass(frozen=True)
class DerivedConstants:
    """Step-size dependent constants for a dataset of size ``n`` and margin ``gamma``."""

    eta: float
    gamma: float
    n: int

    @property
    def lambda_upper(self):
        # expm1 keeps digits when 1/(8 eta) is tiny
        return -math.log(math.expm1(1.0 / (8.0 * self.eta))) / self.gamma

    @property
    def lambda_tilde(self):
        return math.log(8.0 * self.eta) / self.gamma

    @property
    def eta0(self):
        return eta0(self.n, self.gamma)

    @property
    def eta1(self):
        return eta1(self.n, self.gamma)

    @property
    def tau_threshold(self):
        return 1.0 / (8.0 * self.eta)

    @property
    def loose_threshold(self):
        return 2.0 / self.eta

    def threshold(self, kind="eighth"):
        if kind in ("eighth", "1/8eta"):
            return self.tau_threshold
        if kind in ("two", "two_over_eta", "2/eta"):
            return self.loose_threshold
        raise ValueError(f"unknown threshold kind {kind!r}")

    @property
    def tau_upper_bound(self):
        g = self.gamma
        return 2.0 + 4.0 * self.n / g + 142.0 * math.log(2.0 / g**2) / g**2

    @property
    def gap_bound(self):
        """Slack ``1 + 4n/gamma + 96/gamma^2`` between an iteration and the next oscillation."""
        return 1.0 + 4.0 * self.n / self.gamma + 96.0 / self.gamma**2

    def as_dict(self):
        return {
            "eta": self.eta, "gamma": self.gamma, "n": self.n,
            "lambda_upper": self.lambda_upper, "lambda_tilde": self.lambda_tilde,
            "eta0": self.eta0, "eta1": self.eta1,
            "tau_threshold": self.tau_threshold, "loose_threshold": self.loose_threshold,
        }


def eta0(n, gamma):
    """Smallest step size covered by the transition-time upper bound."""
    return max(float(n), 32.0 / gamma**2 * math.log(256.0 / gamma**2))


def eta1(n, gamma):
    """Smallest step size covered by the lower-bound constructions."""
    return max(float(n), 32.0 / gamma**2 * math.log(3.0 / gamma))


def constants_for(trajectory):
    return DerivedConstants(eta=trajectory.eta, gamma=trajectory.certificate.gamma,
                            n=trajectory.dataset.n)


def decompose(w, certificate):
    """Coordinates of ``w`` along ``w_star`` and orthogonal to it.

    In 2-D the second value is the scalar ``<w, v_star>``; otherwise it is
    the projection vector ``(I - w* w*^T) w``.
    """
    w = np.asarray(w, dtype=np.float64)
    w_hat = float(w @ certificate.w_star)
    if certificate.v_star is not None:
        return w_hat, float(w @ certificate.v_star)
    return w_hat, w - w_hat * certificate.w_star


@dataclass(frozen=True)
class OscillationEvent:
    t: int
    w_hat_before: float
    w_hat_after: float
    w_tilde_before: float
    w_tilde_after: float

    @property
    def growth_ratio(self):
        return self.w_hat_after / self.w_hat_before

    def as_row(self):
        return (self.t, self.w_hat_before, self.w_hat_after, self.w_tilde_before,
                self.w_tilde_after, self.growth_ratio)


def _oscillation_mask(F, w_hat, constants, flips):
    high = F > constants.tau_threshold
    return (w_hat[:-1] >= constants.lambda_upper) & high[:-1] & high[1:] & flips


def _events(mask, w_hat, tilde):
    return [OscillationEvent(int(t), float(w_hat[t]), float(w_hat[t + 1]),
                             float(tilde[t]), float(tilde[t + 1]))
            for t in np.flatnonzero(mask)]


def detect_oscillations(trajectory, constants):
    """Steps ``t`` where the iterate jumps across the low-loss sublevel set.

    All three must hold: ``w_hat_t >= lambda``, both ``F(w_t)`` and
    ``F(w_{t+1})`` exceed ``1/(8 eta)``, and ``w_tilde`` strictly changes
    sign from ``t`` to ``t+1``.
    """
    if trajectory.certificate is None or trajectory.certificate.v_star is None:
        raise ValueError("detect_oscillations needs a 2-D certificate; "
                         "use detect_oscillations_general")
    wt = trajectory.w_tilde
    flips = wt[:-1] * wt[1:] < 0
    mask = _oscillation_mask(trajectory.F, trajectory.w_hat, constants, flips)
    return _events(mask, trajectory.w_hat, wt)


def detect_oscillations_general(trajectory, certificate, constants):
    """Oscillations with the sign flip replaced by ``<w~_{t+1}, w~_t> < 0``.

    Events carry the norms of the orthogonal projections as the
    ``w_tilde`` fields (signed scalars in 2-D, where the test reduces to
    the scalar sign flip).
    """
    W = trajectory.w
    w_hat = W @ certificate.w_star
    if certificate.v_star is not None:
        tilde = W @ certificate.v_star
        flips = tilde[:-1] * tilde[1:] < 0
    else:
        perp = W - np.outer(w_hat, certificate.w_star)
        flips = np.einsum("ij,ij->i", perp[:-1], perp[1:]) < 0
        tilde = np.linalg.norm(perp, axis=1)
    mask = _oscillation_mask(trajectory.F, w_hat, constants, flips)
    return _events(mask, w_hat, tilde)


def transition_time(trajectory, threshold):
    """First step with ``F(w_t) <= threshold``, or ``None`` within the horizon."""
    threshold = check_positive(threshold, "threshold")
    hits = np.flatnonzero(trajectory.F <= threshold)
    return int(hits[0]) if hits.size else None


def index_sets(trajectory, t):
    """``(D_plus, D_minus, B_t)`` at step ``t`` as index arrays.

    Requires per-example margins to have been recorded.
    """
    if not trajectory.has_margins:
        raise ValueError("index sets need per-example margins (record_margins=True)")
    cert = trajectory.certificate
    x_tilde = trajectory.dataset.points @ cert.v_star
    prod = x_tilde * trajectory.w_tilde[t]
    gamma = cert.gamma
    d_plus = np.flatnonzero(prod >= 0)
    d_minus = np.flatnonzero(prod < 0)
    b_t = np.flatnonzero(prod <= -0.5 * gamma * trajectory.w_hat[t])
    return d_plus, d_minus, b_t


def stable_rate_check(trajectory, tau, certificate, eta):
    """Check ``F(w_t) <= 8 / (eta gamma^2 (t - tau))`` for ``t > tau`` and monotone decrease.

    Returns a :class:`largestep.theory.LemmaReport` for the rate; the
    monotonicity slack is folded into the same report (worst of the two).
    """
    from .theory import LemmaId, check_stable_rate, check_monotone_after_tau, combine

    rate = check_stable_rate(trajectory.F, tau, certificate.gamma, eta)
    mono = check_monotone_after_tau(trajectory.F, tau)
    return combine(LemmaId.StableRate, [rate, mono])


def write_oscillations_csv(events, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "w_hat_before", "w_hat_after", "w_tilde_before", "w_tilde_after",
                    "growth_ratio"])
        for ev in events:
            row = ev.as_row()
            w.writerow([row[0]] + [format(float(v), ".17g") for v in row[1:]])
