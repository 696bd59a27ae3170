"""Executable checks of the inequalities governing large-step GD on separable data.

Every checker computes a signed slack ``LHS - RHS`` oriented so that a
non-negative value means the inequality holds. A check passes when each
evaluated slack is at least ``-tol`` with

    tol = 1e-9 * max(1, |operands|) + n * 2**-52,

where ``operands`` are the magnitudes entering the comparison (both sides,
plus the raw terms of any difference such as ``w_hat_{t+1} - w_hat_t``).
"""

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .diagnostics import DerivedConstants, detect_oscillations, transition_time
from .engine import logistic_losses, sigmoid_weights
from .exceptions import PreconditionUnmet

REL_TOL = 1e-9
EPS = 2.0**-52


class LemmaId(str, enum.Enum):
    PotentialLB = "PotentialLB"
    GradUB = "GradUB"
    GradLB = "GradLB"
    ObjPotUB = "ObjPotUB"
    StableDescent = "StableDescent"
    MarginPotentialStep = "MarginPotentialStep"
    MaxMarginGrowth = "MaxMarginGrowth"
    SmallComplement = "SmallComplement"
    ActivePotSandwich = "ActivePotSandwich"
    OscGrowth = "OscGrowth"
    OscMarginBound = "OscMarginBound"
    ARecursion = "ARecursion"
    ComplementUB = "ComplementUB"
    TimeToOscillateGap = "TimeToOscillateGap"
    InBetweenGrowth = "InBetweenGrowth"
    TauUpper = "TauUpper"
    StableRate = "StableRate"
    MonotoneAfterTau = "MonotoneAfterTau"


UNCONDITIONAL = frozenset({
    LemmaId.PotentialLB, LemmaId.GradUB, LemmaId.GradLB, LemmaId.ObjPotUB,
    LemmaId.StableDescent, LemmaId.MarginPotentialStep,
})
NEEDS_MARGINS = frozenset({LemmaId.ARecursion, LemmaId.ActivePotSandwich})

STATEMENTS = {
    LemmaId.PotentialLB: "G(w) >= (1 - exp(-n F(w))) / n",
    LemmaId.GradUB: "|grad F(w)| <= F(w)",
    LemmaId.GradLB: "|grad F(w)| >= (gamma/2) F(w) when all margins >= 0",
    LemmaId.ObjPotUB: "F(w) <= 2 G(w) when all margins >= 0",
    LemmaId.StableDescent: "F(w') <= F(w) + <grad F(w), w'-w> + 4 F(w) |w'-w|^2 when |w'-w| <= 1",
    LemmaId.MarginPotentialStep: "w_hat_{t+1} - w_hat_t >= eta gamma G(w_t)",
    LemmaId.MaxMarginGrowth: "w_hat_t >= gamma eta/2 + gamma (t-1)/16 (1 <= t <= tau), "
                             "w_hat_t >= 8 lambda~, w_hat strictly increasing",
    LemmaId.SmallComplement: "F(w_t) > 1/(8 eta), t >= 1  =>  |w_tilde_t| > gamma w_hat_t / 2",
    LemmaId.ActivePotSandwich: "(1 - 16/eta^3) G <= (1/n) sum_{B_t} sigma <= G for 1 <= t < tau",
    LemmaId.OscGrowth: "w_hat_{t+1} >= (1 + gamma^2) w_hat_t at oscillations",
    LemmaId.OscMarginBound: "w_hat_t <= eta / gamma at oscillations",
    LemmaId.ARecursion: "a_{t+1}^i - a_t^i >= max(eta |x_i|^2 / (2n (e^a + 1)), eta gamma^2 G / 2)",
    LemmaId.ComplementUB: "|w_tilde_t| <= eta for t < tau",
    LemmaId.TimeToOscillateGap: "next oscillation or tau after t is <= t + 1 + 4n/gamma + 96/gamma^2",
    LemmaId.InBetweenGrowth: "w_hat_{t+1} >= (1 + gamma^2/2) w_hat_t before the last oscillation",
    LemmaId.TauUpper: "tau <= 2 + 4n/gamma + 142 log(2/gamma^2)/gamma^2",
    LemmaId.StableRate: "F(w_t) <= 8 / (eta gamma^2 (t - tau)) for t > tau",
    LemmaId.MonotoneAfterTau: "F(w_{t+1}) <= F(w_t) for t >= tau",
}


@dataclass(frozen=True)
class LemmaReport:
    id: LemmaId
    passed: bool
    worst_slack: float
    worst_t: int | None
    checked_count: int
    tolerance: float = 0.0
    skipped: bool = False
    note: str = ""

    @property
    def status(self):
        if self.skipped:
            return "skipped"
        return "passed" if self.passed else "failed"

    @property
    def failed(self):
        return not self.skipped and not self.passed

    def to_dict(self):
        return {
            "id": self.id.value,
            "status": self.status,
            "passed": bool(self.passed),
            "skipped": bool(self.skipped),
            "worst_slack": _json_float(self.worst_slack),
            "worst_t": self.worst_t,
            "checked_count": int(self.checked_count),
            "tolerance": _json_float(self.tolerance),
            "note": self.note,
        }

    def line(self):
        slack = "n/a" if not math.isfinite(self.worst_slack) else f"{self.worst_slack:+.3e}"
        return (f"{self.status.upper():7s} {self.id.value:20s} slack={slack} "
                f"t={self.worst_t} checked={self.checked_count}")


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else None


def skipped(lemma_id, note):
    return LemmaReport(lemma_id, passed=True, worst_slack=math.nan, worst_t=None,
                       checked_count=0, skipped=True, note=note)


def slack_report(lemma_id, slack, scale, ts, n=1, note=""):
    """Build a report from per-check slacks, magnitudes and step indices.

    An empty check set yields a skipped report (no qualifying steps).
    """
    slack = np.asarray(slack, dtype=np.float64).ravel()
    if slack.size == 0:
        return skipped(lemma_id, note or "no qualifying steps")
    scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), slack.shape)
    ts = np.broadcast_to(np.asarray(ts), slack.shape)
    tol = REL_TOL * np.maximum(1.0, np.abs(scale)) + n * EPS
    margin = slack + tol
    nan = ~np.isfinite(slack)
    if np.any(nan):
        k = int(np.flatnonzero(nan)[0])
        return LemmaReport(lemma_id, False, float(slack[k]), int(ts[k]), slack.size,
                           float(tol[k]), note="non-finite slack")
    k = int(np.argmin(margin))
    return LemmaReport(lemma_id, bool(margin[k] >= 0.0), float(slack[k]), int(ts[k]),
                       slack.size, float(tol[k]), note=note)


def combine(lemma_id, reports):
    """Merge sub-checks of one inequality family into a single report."""
    live = [r for r in reports if not r.skipped]
    if not live:
        return skipped(lemma_id, "; ".join(r.note for r in reports if r.note))
    worst = min(live, key=lambda r: r.worst_slack + r.tolerance)
    return LemmaReport(lemma_id, all(r.passed for r in live), worst.worst_slack,
                       worst.worst_t, sum(r.checked_count for r in live), worst.tolerance,
                       note=worst.note)


def _amax(*arrays):
    out = np.abs(np.asarray(arrays[0], dtype=np.float64))
    for a in arrays[1:]:
        out = np.maximum(out, np.abs(a))
    return out


def potential_lower_bound(c, n):
    """``(1 - exp(-n c)) / n``: the least gradient potential compatible with ``F >= c``."""
    if c < 0 or n < 1:
        raise ValueError("need c >= 0 and n >= 1")
    return -math.expm1(-n * c) / n


# -- pointwise checks (need only F, G, |grad F| and min margins) -------------

def check_potential_lb(F, G, n, ts=None):
    F, G = np.asarray(F, float), np.asarray(G, float)
    rhs = -np.expm1(-n * F) / n
    ts = np.arange(F.size) if ts is None else ts
    return slack_report(LemmaId.PotentialLB, G - rhs, _amax(G, rhs), ts, n)


def potential_lb_from_margins(A):
    """Potential lower bound evaluated directly on a (m, n) array of margins."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    F = np.mean(logistic_losses(A), axis=1)
    G = np.mean(sigmoid_weights(A), axis=1)
    return check_potential_lb(F, G, A.shape[1])


def check_grad_ub(F, grad_norm, n=1, ts=None):
    F, gn = np.asarray(F, float), np.asarray(grad_norm, float)
    ts = np.arange(F.size) if ts is None else ts
    return slack_report(LemmaId.GradUB, F - gn, _amax(F, gn), ts, n)


def check_grad_lb(F, grad_norm, min_margin, gamma, n=1):
    F, gn, mm = (np.asarray(x, float) for x in (F, grad_norm, min_margin))
    sel = np.flatnonzero(mm >= 0)
    rhs = 0.5 * gamma * F[sel]
    return slack_report(LemmaId.GradLB, gn[sel] - rhs, _amax(gn[sel], rhs), sel, n,
                        note="" if sel.size else "no step with all margins >= 0")


def check_obj_pot_ub(F, G, min_margin, n=1):
    F, G, mm = (np.asarray(x, float) for x in (F, G, min_margin))
    sel = np.flatnonzero(mm >= 0)
    return slack_report(LemmaId.ObjPotUB, 2 * G[sel] - F[sel], _amax(2 * G[sel], F[sel]), sel,
                        n, note="" if sel.size else "no step with all margins >= 0")


def check_stable_descent(dataset, W, W_next):
    """Modified descent inequality on explicit pairs ``(w, w')`` with ``|w - w'| <= 1``."""
    from .engine import build_trajectory

    W = np.atleast_2d(W)
    W_next = np.atleast_2d(W_next)
    a = build_trajectory(dataset, None, math.nan, W)
    b = build_trajectory(dataset, None, math.nan, W_next)
    return _stable_descent(a.F, a.grad, W, b.F, W_next, dataset.n, np.arange(W.shape[0]))


def _stable_descent(F, grad, W, F_next, W_next, n, ts):
    delta = W_next - W
    dist = np.linalg.norm(delta, axis=1)
    sel = np.flatnonzero(dist <= 1.0)
    lin = np.einsum("ij,ij->i", grad[sel], delta[sel])
    quad = 4.0 * F[sel] * dist[sel] ** 2
    rhs = F[sel] + lin + quad
    return slack_report(LemmaId.StableDescent, rhs - F_next[sel],
                        _amax(F[sel], lin, quad, F_next[sel]), np.asarray(ts)[sel], n,
                        note="" if sel.size else "no step with |w' - w| <= 1")


def check_stable_rate(F, tau, gamma, eta, n=1):
    F = np.asarray(F, float)
    if tau is None:
        return skipped(LemmaId.StableRate, "transition not reached")
    t = np.arange(tau + 1, F.size)
    rhs = 8.0 / (eta * gamma**2 * (t - tau))
    return slack_report(LemmaId.StableRate, rhs - F[t], _amax(rhs, F[t]), t, n,
                        note="" if t.size else "no steps after tau")


def check_monotone_after_tau(F, tau, n=1):
    F = np.asarray(F, float)
    if tau is None:
        return skipped(LemmaId.MonotoneAfterTau, "transition not reached")
    t = np.arange(tau, F.size - 1)
    return slack_report(LemmaId.MonotoneAfterTau, F[t] - F[t + 1], _amax(F[t], F[t + 1]), t,
                        n, note="" if t.size else "no steps after tau")


# -- trajectory-level checks ---------------------------------------------------

class _Context:
    """Quantities shared by the checkers for one trajectory."""

    def __init__(self, trajectory, certificate, constants):
        self.tr = trajectory
        self.cert = certificate
        self.k = constants
        self.n = trajectory.dataset.n
        self.gamma = certificate.gamma
        self.eta = constants.eta
        X = trajectory.dataset.points
        self.w_hat = trajectory.w @ certificate.w_star
        self.w_tilde = None if certificate.v_star is None else trajectory.w @ certificate.v_star
        self.x_tilde = None if certificate.v_star is None else X @ certificate.v_star
        self.tau = transition_time(trajectory, constants.tau_threshold)
        self.T = trajectory.T
        # steps 0..stop-1 precede the transition (or the whole horizon)
        self.pre_stop = self.tau if self.tau is not None else self.T + 1
        self._osc = None

    @property
    def oscillations(self):
        if self._osc is None:
            self._osc = np.array([e.t for e in detect_oscillations(self.tr, self.k)], dtype=int)
        return self._osc


def _pre_tau_steps(ctx, start=1, need_next=False):
    stop = ctx.pre_stop
    if need_next:
        stop = min(stop, ctx.T)
    return np.arange(start, stop)


def _margin_potential_step(ctx):
    t = np.arange(ctx.T)
    inc = ctx.w_hat[t + 1] - ctx.w_hat[t]
    rhs = ctx.eta * ctx.gamma * ctx.tr.G[t]
    return slack_report(LemmaId.MarginPotentialStep, inc - rhs,
                        _amax(ctx.w_hat[t + 1], ctx.w_hat[t], rhs), t, ctx.n)


def _max_margin_growth(ctx):
    g, eta = ctx.gamma, ctx.eta
    last = ctx.tau if ctx.tau is not None else ctx.T
    t = np.arange(1, last + 1)
    rhs = g * eta / 2 + g * (t - 1) / 16
    linear = slack_report(LemmaId.MaxMarginGrowth, ctx.w_hat[t] - rhs,
                          _amax(ctx.w_hat[t], rhs), t, ctx.n)
    t1 = np.arange(1, ctx.T + 1)
    floor = 8 * ctx.k.lambda_tilde
    above = slack_report(LemmaId.MaxMarginGrowth, ctx.w_hat[t1] - floor,
                         _amax(ctx.w_hat[t1], floor), t1, ctx.n)
    t0 = np.arange(min(last, ctx.T))
    inc = ctx.w_hat[t0 + 1] - ctx.w_hat[t0]
    # strict increase: a zero increment counts against the check
    strict = slack_report(LemmaId.MaxMarginGrowth, np.where(inc > 0, inc, -np.inf), 0.0, t0,
                          0) if t0.size else skipped(LemmaId.MaxMarginGrowth, "")
    return combine(LemmaId.MaxMarginGrowth, [linear, above, strict])


def _small_complement(ctx):
    t = np.arange(1, ctx.T + 1)
    t = t[ctx.tr.F[t] > ctx.k.tau_threshold]
    lhs = np.abs(ctx.w_tilde[t])
    rhs = 0.5 * ctx.gamma * ctx.w_hat[t]
    return slack_report(LemmaId.SmallComplement, lhs - rhs, _amax(lhs, rhs), t, ctx.n)


def _active_set(ctx, t):
    prod = ctx.x_tilde[None, :] * ctx.w_tilde[t][:, None]
    return prod <= -0.5 * ctx.gamma * ctx.w_hat[t][:, None]


def _active_pot_sandwich(ctx):
    t = _pre_tau_steps(ctx)
    if t.size == 0:
        return skipped(LemmaId.ActivePotSandwich, "no steps with 1 <= t < tau")
    S = sigmoid_weights(ctx.tr.margins[t])
    B = _active_set(ctx, t)
    sb = np.sum(np.where(B, S, 0.0), axis=1) / ctx.n
    G = ctx.tr.G[t]
    lo = (1.0 - 16.0 / ctx.eta**3) * G
    lower = slack_report(LemmaId.ActivePotSandwich, sb - lo, _amax(sb, lo), t, ctx.n)
    upper = slack_report(LemmaId.ActivePotSandwich, G - sb, _amax(G, sb), t, ctx.n)
    return combine(LemmaId.ActivePotSandwich, [lower, upper])


def _osc_growth(ctx):
    t = ctx.oscillations
    rhs = (1 + ctx.gamma**2) * ctx.w_hat[t]
    return slack_report(LemmaId.OscGrowth, ctx.w_hat[t + 1] - rhs, _amax(ctx.w_hat[t + 1], rhs),
                        t, ctx.n, note="" if t.size else "no oscillations")


def _osc_margin_bound(ctx):
    t = ctx.oscillations
    rhs = ctx.eta / ctx.gamma
    return slack_report(LemmaId.OscMarginBound, rhs - ctx.w_hat[t], _amax(ctx.w_hat[t], rhs), t,
                        ctx.n, note="" if t.size else "no oscillations")


def _a_recursion(ctx):
    t = _pre_tau_steps(ctx, need_next=True)
    # steps where w_tilde changes sign sit on an oscillation boundary
    wt = ctx.w_tilde
    t = t[np.sign(wt[t]) == np.sign(wt[t + 1])]
    if t.size == 0:
        return skipped(LemmaId.ARecursion, "no qualifying steps")
    A = ctx.tr.margins
    d_minus = ctx.x_tilde[None, :] * wt[t][:, None] < 0
    rows, cols = np.nonzero(d_minus)
    if rows.size == 0:
        return skipped(LemmaId.ARecursion, "D_t^- empty at every qualifying step")
    ts = t[rows]
    a_now, a_next = A[ts, cols], A[ts + 1, cols]
    sq = np.sum(ctx.tr.dataset.points**2, axis=1)[cols]
    first = ctx.eta * sq * sigmoid_weights(a_now) / (2 * ctx.n)
    second = 0.5 * ctx.eta * ctx.gamma**2 * ctx.tr.G[ts]
    rhs = np.maximum(first, second)
    return slack_report(LemmaId.ARecursion, (a_next - a_now) - rhs,
                        _amax(a_next, a_now, rhs), ts, ctx.n)


def _complement_ub(ctx):
    t = _pre_tau_steps(ctx, start=0)
    lhs = np.abs(ctx.w_tilde[t])
    return slack_report(LemmaId.ComplementUB, ctx.eta - lhs, _amax(lhs, ctx.eta), t, ctx.n)


def _time_to_oscillate_gap(ctx):
    c = ctx.k.gap_bound
    events = ctx.oscillations
    if ctx.tau is not None:
        events = np.append(events, ctx.tau)
    t = _pre_tau_steps(ctx)
    if t.size == 0:
        return skipped(LemmaId.TimeToOscillateGap, "no steps with 1 <= t < tau")
    pos = np.searchsorted(events, t, side="left")
    found = pos < events.size
    nxt = np.where(found, events[np.minimum(pos, max(events.size - 1, 0))] if events.size else 0,
                   ctx.T + 1).astype(float)
    slack = t + c - nxt
    # unresolved steps (no event within the horizon yet) only count once they are overdue
    keep = found | (slack < 0)
    return slack_report(LemmaId.TimeToOscillateGap, slack[keep], _amax(t[keep] + c, nxt[keep]),
                        t[keep], 1)


def _in_between_growth(ctx):
    osc = ctx.oscillations
    if osc.size == 0:
        return skipped(LemmaId.InBetweenGrowth, "no oscillations")
    t = np.arange(1, osc.max())
    rhs = (1 + ctx.gamma**2 / 2) * ctx.w_hat[t]
    return slack_report(LemmaId.InBetweenGrowth, ctx.w_hat[t + 1] - rhs,
                        _amax(ctx.w_hat[t + 1], rhs), t, ctx.n,
                        note="" if t.size else "first oscillation at t <= 1")


def _tau_upper(ctx):
    bound = ctx.k.tau_upper_bound
    if ctx.tau is None:
        if ctx.T + 1 > bound:
            return LemmaReport(LemmaId.TauUpper, False, bound - (ctx.T + 1), ctx.T, 1,
                               note="transition not reached before the bound")
        return skipped(LemmaId.TauUpper, "horizon shorter than the bound")
    return slack_report(LemmaId.TauUpper, [bound - ctx.tau], [bound], [ctx.tau], 0)


def _unconditional(lemma_id, tr, cert, n):
    if lemma_id is LemmaId.PotentialLB:
        return check_potential_lb(tr.F, tr.G, n)
    if lemma_id is LemmaId.GradUB:
        return check_grad_ub(tr.F, tr.grad_norm, n)
    if lemma_id is LemmaId.GradLB:
        return check_grad_lb(tr.F, tr.grad_norm, tr.min_margin, cert.gamma, n)
    if lemma_id is LemmaId.ObjPotUB:
        return check_obj_pot_ub(tr.F, tr.G, tr.min_margin, n)
    if lemma_id is LemmaId.StableDescent:
        return _stable_descent(tr.F[:-1], tr.grad[:-1], tr.w[:-1], tr.F[1:], tr.w[1:], n,
                               np.arange(tr.T))
    raise KeyError(lemma_id)


_CONDITIONAL = {
    LemmaId.MarginPotentialStep: _margin_potential_step,
    LemmaId.MaxMarginGrowth: _max_margin_growth,
    LemmaId.SmallComplement: _small_complement,
    LemmaId.ActivePotSandwich: _active_pot_sandwich,
    LemmaId.OscGrowth: _osc_growth,
    LemmaId.OscMarginBound: _osc_margin_bound,
    LemmaId.ARecursion: _a_recursion,
    LemmaId.ComplementUB: _complement_ub,
    LemmaId.TimeToOscillateGap: _time_to_oscillate_gap,
    LemmaId.InBetweenGrowth: _in_between_growth,
    LemmaId.TauUpper: _tau_upper,
    LemmaId.StableRate: None,
    LemmaId.MonotoneAfterTau: None,
}


def _check_preconditions(lemma_id, trajectory, certificate, constants):
    if lemma_id in UNCONDITIONAL:
        return
    if certificate.v_star is None:
        raise PreconditionUnmet(f"{lemma_id.value} is only stated for d = 2")
    if constants.eta < constants.eta0:
        raise PreconditionUnmet(f"{lemma_id.value} needs eta >= eta0 "
                                f"({constants.eta:.6g} < {constants.eta0:.6g})")
    if lemma_id in NEEDS_MARGINS and not trajectory.has_margins:
        raise PreconditionUnmet(f"{lemma_id.value} needs recorded per-example margins")
    if np.any(trajectory.w[0] != 0.0):
        raise PreconditionUnmet(f"{lemma_id.value} assumes w_0 = 0")


def verify_lemma(lemma_id, trajectory, certificate=None, constants=None, _ctx=None):
    """Check one inequality along ``trajectory`` and return its :class:`LemmaReport`.

    Raises :class:`PreconditionUnmet` when the inequality does not apply
    (step size below ``eta0``, d != 2, margins not recorded, w_0 != 0).
    A violated inequality is reported, never raised.
    """
    lemma_id = LemmaId(lemma_id)
    certificate = certificate if certificate is not None else trajectory.certificate
    if certificate is None:
        raise PreconditionUnmet("a margin certificate is required")
    if constants is None:
        constants = DerivedConstants(eta=trajectory.eta, gamma=certificate.gamma,
                                     n=trajectory.dataset.n)
    n = trajectory.dataset.n
    if lemma_id in UNCONDITIONAL and lemma_id is not LemmaId.MarginPotentialStep:
        return _unconditional(lemma_id, trajectory, certificate, n)
    _check_preconditions(lemma_id, trajectory, certificate, constants)
    if lemma_id is LemmaId.MarginPotentialStep and (
            certificate.v_star is None or constants.eta < constants.eta0):
        # holds for any eta and any d; no decomposition beyond w_hat needed
        ctx = _ctx or _Context(trajectory, certificate, constants)
        return _margin_potential_step(ctx)
    ctx = _ctx or _Context(trajectory, certificate, constants)
    if lemma_id is LemmaId.StableRate:
        return check_stable_rate(trajectory.F, ctx.tau, ctx.gamma, ctx.eta, n)
    if lemma_id is LemmaId.MonotoneAfterTau:
        return check_monotone_after_tau(trajectory.F, ctx.tau, n)
    return _CONDITIONAL[lemma_id](ctx)


def verify_all(trajectory, certificate=None, constants=None):
    """One report per :class:`LemmaId`, in declaration order; inapplicable ids are skipped."""
    certificate = certificate if certificate is not None else trajectory.certificate
    if constants is None:
        constants = DerivedConstants(eta=trajectory.eta, gamma=certificate.gamma,
                                     n=trajectory.dataset.n)
    ctx = _Context(trajectory, certificate, constants)
    reports = []
    for lemma_id in LemmaId:
        try:
            reports.append(verify_lemma(lemma_id, trajectory, certificate, constants, _ctx=ctx))
        except PreconditionUnmet as exc:
            reports.append(skipped(lemma_id, str(exc)))
    return reports


def reports_to_json(reports, indent=2):
    return json.dumps([r.to_dict() for r in reports], indent=indent)
