"""Worst-case 2-D datasets on which large-step GD needs many steps to stabilize.

Two families are built here:

* the *classification* instance, where one point sits below the max-margin
  direction and stays misclassified for ``n/(16 gamma)`` steps;
* the *stability* instance, ``k = ceil(n/2)`` copies of ``(gamma, -delta*)``
  plus copies of ``(gamma, sqrt(1 - gamma^2))``, with ``delta*`` tuned so the
  first GD step lands exactly one unit short of the low-loss region.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_count, check_gamma, check_positive
from .dataset import CertificateKind, Dataset, MarginCertificate
from .diagnostics import eta1, transition_time
from .engine import default_horizon, run
from .exceptions import NegativeDiscriminant

GAMMA_MAX = 1.0 / 6.0


def hard_certificate(gamma, support=()):
    """Margin ``gamma`` attained by ``w* = e1``, exact by construction."""
    return MarginCertificate(gamma=gamma, w_star=np.array([1.0, 0.0]),
                             kind=CertificateKind.EXACT_2D, support=tuple(support))


def _check_regime(n, gamma, eta, n_min):
    n = check_count(n, "n", minimum=n_min)
    gamma = check_gamma(gamma, upper=GAMMA_MAX, inclusive_upper=True)
    floor = eta1(n, gamma)
    eta = floor if eta is None else check_positive(eta, "eta")
    if eta < floor:
        raise ValueError(f"eta = {eta:.6g} is below eta1 = {floor:.6g}")
    return n, gamma, eta


def hard_dataset_classify(n, gamma):
    """``x_1 = (gamma, -gamma)`` and ``n - 1`` copies of ``(gamma, sqrt(1 - gamma^2))``."""
    n = check_count(n, "n", minimum=6)
    gamma = check_gamma(gamma, upper=GAMMA_MAX, inclusive_upper=True)
    pts = np.empty((n, 2))
    pts[0] = (gamma, -gamma)
    pts[1:] = (gamma, math.sqrt(1.0 - gamma * gamma))
    return Dataset(pts)


@dataclass(frozen=True)
class StableHardParams:
    n: int
    gamma: float
    eta: float
    k: int
    delta_star: float
    lambda_lb: float
    discriminant: float
    residual: float

    @property
    def ratio(self):
        return self.n / self.k

    @property
    def delta_bracket(self):
        return (4.0 / 3.0) * self.gamma**2, 7.0 * self.gamma**2

    def in_bracket(self):
        lo, hi = self.delta_bracket
        return lo <= self.delta_star <= hi

    @property
    def v1(self):
        return np.array([self.gamma, -self.delta_star])

    @property
    def v2(self):
        return np.array([self.gamma, math.sqrt(1.0 - self.gamma**2)])

    def as_dict(self):
        return {"n": self.n, "gamma": self.gamma, "eta": self.eta, "k": self.k,
                "delta_star": self.delta_star, "lambda_lb": self.lambda_lb,
                "discriminant": self.discriminant, "residual": self.residual}


def _quadratic(n, gamma, eta):
    k = math.ceil(n / 2)
    r = n / k
    lam = -math.log(math.expm1(2.0 * n / (k * eta)))
    b = (r - 1.0) * math.sqrt(1.0 - gamma * gamma)
    c = r * gamma * gamma - (2.0 * r / eta) * (lam - 1.0)
    return k, lam, b, c


def delta_star(n, gamma, eta=None, *, check_regime=True):
    """Smaller root of ``delta^2 - (n/k - 1) sqrt(1 - gamma^2) delta + c = 0``.

    ``c = (n/k) gamma^2 - (2n/(eta k)) (lambda - 1)`` with
    ``lambda = -log(expm1(2n/(k eta)))``. The root is taken in the form
    ``2c / (b + sqrt(b^2 - 4c))``, which avoids cancelling ``b`` against
    ``sqrt(disc)`` when ``c`` is small. ``eta`` defaults to ``eta1``.
    Set ``check_regime=False`` to evaluate outside ``gamma <= 1/6``,
    ``eta >= eta1`` (the discriminant may then be negative).
    """
    if check_regime:
        n, gamma, eta = _check_regime(n, gamma, eta, 2)
    else:
        n = check_count(n, "n", minimum=2)
        gamma = check_gamma(gamma)
        eta = eta1(n, gamma) if eta is None else check_positive(eta, "eta")
    k, lam, b, c = _quadratic(n, gamma, eta)
    disc = b * b - 4.0 * c
    if not disc > 0.0:
        raise NegativeDiscriminant(
            f"discriminant {disc:.6g} <= 0 at n={n}, gamma={gamma:.6g}, eta={eta:.6g}")
    root = 2.0 * c / (b + math.sqrt(disc))
    residual = root * root - b * root + c
    return StableHardParams(n=n, gamma=gamma, eta=eta, k=k, delta_star=root, lambda_lb=lam,
                            discriminant=disc, residual=residual)


def hard_dataset_stable(n, gamma, eta=None):
    params = delta_star(n, gamma, eta)
    pts = np.empty((params.n, 2))
    pts[:params.k] = params.v1
    pts[params.k:] = params.v2
    return Dataset(pts), params


def theorem2_bound(n, gamma):
    """Floor ``(n/gamma + 1/gamma^2) / 118`` on the worst-case transition time."""
    n = check_count(n, "n")
    gamma = check_positive(gamma, "gamma")
    return (n / gamma + 1.0 / gamma**2) / 118.0


@dataclass
class BoundReport:
    """Outcome of a lower-bound verification run.

    ``time`` is ``t_c`` (classification) or ``t_s`` (stability), ``None``
    when the horizon ran out first. ``checks`` maps each sub-claim to a
    boolean; ``passed`` is the headline claim only.
    """

    kind: str
    params: dict
    time: int | None
    bound: float
    passed: bool
    checks: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    tau: int | None = None
    trajectory: object = None
    trajectory_csv_path: str | None = None

    @property
    def all_passed(self):
        return self.passed and all(self.checks.values())

    def to_dict(self):
        key = "t_c" if self.kind == "classify" else "t_s"
        return {
            "kind": self.kind,
            "params": self.params,
            key: self.time,
            "bound": self.bound,
            "passed": self.passed,
            "all_passed": self.all_passed,
            "checks": self.checks,
            "values": self.values,
            "tau": self.tau,
            "trajectory_csv_path": self.trajectory_csv_path,
        }


def _first(mask):
    hits = np.flatnonzero(mask)
    return int(hits[0]) if hits.size else None


def measure_tau(dataset, certificate, eta, t_max=None):
    """Transition time at threshold ``1/(8 eta)`` (``None`` if not reached)."""
    if t_max is None:
        t_max = default_horizon(dataset.n, certificate.gamma)
    thr = 1.0 / (8.0 * eta)
    tr = run(dataset, certificate, eta, t_max=t_max, stop_threshold=thr)
    return transition_time(tr, thr)


def verify_classify_bound(n, gamma, eta=None, *, t_max=None, with_tau=True):
    """Simulate GD on the classification instance and check its lower bound.

    Checks: ``t_c > n/(16 gamma)`` (headline), ``t_c >= 1 + n/(16 gamma)``,
    some margin negative at every ``1 <= t <= n/(16 gamma)``, ``x_1`` the
    misclassified point before ``t_c``, and ``a_1^1 <= -eta gamma / 8``.
    """
    n, gamma, eta = _check_regime(n, gamma, eta, 6)
    ds = hard_dataset_classify(n, gamma)
    cert = hard_certificate(gamma, support=range(n))
    bound = n / (16.0 * gamma)
    horizon = t_max if t_max is not None else max(math.ceil(10 * bound), 2)
    tr = run(ds, cert, eta, t_max=horizon, record_margins=True)
    A = tr.margins
    # t = 0 has every margin exactly 0, so the count starts at 1
    all_ok = np.all(A >= 0.0, axis=1)
    all_ok[0] = False
    t_c = _first(all_ok)
    stop = t_c if t_c is not None else tr.T + 1
    window = np.arange(1, min(math.floor(bound), tr.T) + 1)
    a11 = float(A[1, 0])
    pre = np.arange(1, stop)
    checks = {
        "negative_margin_through_bound": bool(np.all(np.any(A[window] < 0.0, axis=1))),
        "strong_form": t_c is None or t_c >= 1 + bound,
        "first_point_misclassified": bool(np.all(A[pre, 0] < 0.0)),
        "a11_below": a11 <= -eta * gamma / 8.0,
    }
    report = BoundReport(
        kind="classify", params={"n": n, "gamma": gamma, "eta": eta}, time=t_c, bound=bound,
        passed=t_c is None or t_c > bound, checks=checks,
        values={"a11": a11, "a11_bound": -eta * gamma / 8.0, "horizon": horizon},
        trajectory=tr)
    if with_tau:
        report.tau = measure_tau(ds, cert, eta)
    return report


def verify_stable_bound(n, gamma, eta=None, *, t_max=None, with_tau=True):
    """Simulate GD on the stability instance and check its lower bound.

    Headline: ``F(w_t) > 2/eta`` for every ``t <= 1 + 1/(59 gamma^2)``.
    Sub-checks cover the ``delta*`` bracket, the first-step identities, the
    geometry of ``v_1, v_2`` and the slow, monotone growth of
    ``<w_t, v_1>`` until it first reaches ``lambda``.
    """
    n, gamma, eta = _check_regime(n, gamma, eta, 2)
    ds, p = hard_dataset_stable(n, gamma, eta)
    cert = hard_certificate(gamma, support=range(n))
    bound = 1.0 + 1.0 / (59.0 * gamma**2)
    horizon = t_max if t_max is not None else math.ceil(10 * bound)
    tr = run(ds, cert, eta, t_max=horizon)
    loose = 2.0 / eta
    t_s = _first(tr.F <= loose)
    head = np.arange(0, min(math.floor(bound), tr.T) + 1)
    v1, v2 = p.v1, p.v2
    proj = tr.w @ v1
    lam = p.lambda_lb
    w1v1, w1v2 = float(proj[1]), float(tr.w[1] @ v2)
    v1v2 = float(v1 @ v2)
    # step until <w_t, v1> first reaches lambda (F > 2/eta before it)
    t_v = _first(proj >= lam)
    t_v = t_v if t_v is not None else tr.T
    steps = np.arange(1, t_v)
    inc = proj[steps + 1] - proj[steps] if steps.size else np.array([])
    growth_cap = 59.0 * gamma**2
    checks = {
        "delta_in_bracket": p.in_bracket(),
        "quadratic_residual": abs(p.residual) <= 1e-9 * p.ratio,
        "w1_v1_identity": abs(w1v1 - (lam - 1.0)) <= 1e-9 * max(1.0, abs(lam)),
        "w1_v2_large": w1v2 >= eta / 24.0,
        "v1_v2_range": -6.0 * gamma**2 <= v1v2 <= 0.0,
        "lambda_small": lam <= eta * gamma**2 / 6.0,
        "lambda_above_one": lam > 1.0,
        "v1_increasing": bool(np.all(inc > 0.0)),
        "v1_growth_capped": bool(np.all(inc <= growth_cap)),
    }
    values = {"w1_v1": w1v1, "lambda_lb": lam, "w1_v2": w1v2, "v1_v2": v1v2,
              "t_v": t_v, "max_v1_growth": float(inc.max()) if inc.size else None,
              "growth_cap": growth_cap, "horizon": horizon, **p.as_dict()}
    report = BoundReport(
        kind="stable", params={"n": n, "gamma": gamma, "eta": eta}, time=t_s, bound=bound,
        passed=bool(np.all(tr.F[head] > loose)), checks=checks, values=values, trajectory=tr)
    if with_tau:
        report.tau = measure_tau(ds, cert, eta)
    return report


def binding_tau(n, gamma, eta=None):
    """Largest measured ``tau`` over the hard instances defined for ``n``.

    Returns ``(tau, floor)``; the classification instance only enters
    for ``n >= 6``.
    """
    taus = [verify_stable_bound(n, gamma, eta).tau]
    if n >= 6:
        taus.append(verify_classify_bound(n, gamma, eta).tau)
    if any(t is None for t in taus):
        return None, theorem2_bound(n, gamma)
    return max(taus), theorem2_bound(n, gamma)
