"""Logistic loss, gradient, gradient potential and the gradient-descent loop.

All per-example quantities go through the ``|a|`` branch formulas so the
loop survives step sizes around 1e6, where margins far exceed the
``exp`` overflow point.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import check_count, check_positive, check_vector
from .exceptions import NumericalError, TheoryViolation

LOG2 = math.log(2.0)


def logistic_losses(a):
    """Per-example ``log(1 + exp(-a))``, elementwise and overflow-free."""
    a = np.asarray(a, dtype=np.float64)
    return np.maximum(-a, 0.0) + np.log1p(np.exp(-np.abs(a)))


def sigmoid_weights(a):
    """Per-example ``1 / (exp(a) + 1)``, i.e. ``|l'(a)|``."""
    a = np.asarray(a, dtype=np.float64)
    e = np.exp(-np.abs(a))
    return np.where(a >= 0, e / (1.0 + e), 1.0 / (1.0 + e))


def margins(w, dataset):
    return dataset.points @ w


def loss(w, dataset):
    """Mean logistic loss ``F(w)``."""
    w = check_vector(w, dataset.d)
    val = float(np.mean(logistic_losses(margins(w, dataset))))
    if not math.isfinite(val):
        raise NumericalError(f"non-finite loss {val}")
    return val


def gradient(w, dataset):
    """``grad F(w) = -(1/n) sum_i x_i / (exp(<w, x_i>) + 1)``."""
    w = check_vector(w, dataset.d)
    s = sigmoid_weights(margins(w, dataset))
    g = -(s @ dataset.points) / dataset.n
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite gradient")
    return g


def potential(w, dataset):
    """Gradient potential ``G(w)``: mean of ``|l'|`` over the data, in [0, 1]."""
    w = check_vector(w, dataset.d)
    return float(np.mean(sigmoid_weights(margins(w, dataset))))


def gd_step(w, eta, dataset):
    eta = check_positive(eta, "eta")
    w_next = np.asarray(w, dtype=np.float64) - eta * gradient(w, dataset)
    if not np.all(np.isfinite(w_next)):
        raise NumericalError("non-finite iterate")
    return w_next


def default_horizon(n, gamma):
    """Four times the proven transition-time bound, rounded up."""
    return math.ceil(4.0 * (2.0 + 4.0 * n / gamma
                            + 142.0 * math.log(2.0 / gamma**2) / gamma**2))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Per-step record of a GD run started from ``w[0]``.

    Arrays are indexed by step ``t = 0..T``. ``margins`` (shape (T+1, n))
    is only kept when requested at run time. ``w_hat`` / ``w_tilde`` are
    the coordinates along ``w_star`` / ``v_star`` when a certificate was
    supplied; for d > 2 ``w_tilde`` holds the norm of the orthogonal
    projection and ``w_perp`` the projection itself.
    """

    dataset: object
    certificate: object
    eta: float
    w: np.ndarray
    grad: np.ndarray
    F: np.ndarray
    G: np.ndarray
    grad_norm: np.ndarray
    min_margin: np.ndarray
    margins: np.ndarray | None = None
    w_hat: np.ndarray | None = None
    w_tilde: np.ndarray | None = None
    w_perp: np.ndarray | None = None

    @property
    def T(self):
        return self.F.shape[0] - 1

    def __len__(self):
        return self.F.shape[0]

    @property
    def has_margins(self):
        return self.margins is not None

    def all_margins(self):
        """Per-example margins, recomputed from the iterates if not recorded."""
        if self.margins is not None:
            return self.margins
        return self.w @ self.dataset.points.T

    def running_average_potential(self):
        """``(1/t) sum_{s<t} G(w_s)`` for ``t = 1..T+1``."""
        return np.cumsum(self.G) / np.arange(1, len(self.G) + 1)


def _decompose_rows(W, certificate):
    w_hat = W @ certificate.w_star
    if certificate.v_star is not None:
        return w_hat, W @ certificate.v_star, None
    perp = W - np.outer(w_hat, certificate.w_star)
    return w_hat, np.linalg.norm(perp, axis=1), perp


def build_trajectory(dataset, certificate, eta, W, record_margins=False):
    """Evaluate every per-step metric for a stack of iterates ``W`` (T+1, d)."""
    W = np.ascontiguousarray(W, dtype=np.float64)
    A = W @ dataset.points.T
    S = sigmoid_weights(A)
    F = np.mean(logistic_losses(A), axis=1)
    G = np.mean(S, axis=1)
    grad = -(S @ dataset.points) / dataset.n
    gn = np.linalg.norm(grad, axis=1)
    for arr in (W, A, grad):
        arr.setflags(write=False)
    extra = {}
    if certificate is not None:
        w_hat, w_tilde, perp = _decompose_rows(W, certificate)
        extra = {"w_hat": w_hat, "w_tilde": w_tilde, "w_perp": perp}
    return Trajectory(dataset=dataset, certificate=certificate, eta=eta, w=W, grad=grad,
                      F=F, G=G, grad_norm=gn, min_margin=np.min(A, axis=1),
                      margins=A if record_margins else None, **extra)


def run(dataset, certificate, eta, t_max=None, record_margins=False, *,
        w0=None, stop_threshold=None, grace_steps=0, eta0=None):
    """Run GD from ``w0`` (default 0) for at most ``t_max`` steps.

    With ``stop_threshold`` set, the run halts ``grace_steps`` steps after
    the first iterate whose loss is at most the threshold. ``t_max``
    defaults to :func:`default_horizon` for the certificate's margin. If a
    threshold is given, the horizon is exhausted without reaching it and
    ``eta >= eta0``, a :class:`TheoryViolation` warning is emitted.
    """
    eta = check_positive(eta, "eta")
    if t_max is None:
        if certificate is None:
            raise ValueError("t_max is required when no certificate is given")
        t_max = default_horizon(dataset.n, certificate.gamma)
    t_max = check_count(t_max, "t_max", minimum=0)
    X = dataset.points
    n = dataset.n
    w = np.zeros(dataset.d) if w0 is None else check_vector(w0, dataset.d, "w0").copy()
    W = [w]
    reached = None
    for t in range(t_max):
        a = X @ w
        if stop_threshold is not None and reached is None:
            f = float(np.mean(logistic_losses(a)))
            if f <= stop_threshold:
                reached = t
        if reached is not None and t >= reached + grace_steps:
            break
        w = w - eta * (-(sigmoid_weights(a) @ X) / n)
        if not np.all(np.isfinite(w)):
            raise NumericalError("non-finite iterate", step=t + 1)
        W.append(w)
    traj = build_trajectory(dataset, certificate, eta, np.array(W), record_margins)
    if not np.all(np.isfinite(traj.F)):
        bad = int(np.flatnonzero(~np.isfinite(traj.F))[0])
        raise NumericalError("non-finite loss", step=bad)
    if (stop_threshold is not None and eta0 is not None and eta >= eta0
            and not np.any(traj.F <= stop_threshold)):
        warnings.warn(f"loss never reached {stop_threshold:.3e} within {t_max} steps "
                      f"at eta={eta:.6g} >= eta0={eta0:.6g}", TheoryViolation, stacklevel=2)
    return traj


def evaluate_points(dataset, points, certificate=None, record_margins=True):
    """Metrics at arbitrary probe points, packaged like a trajectory (no eta)."""
    return build_trajectory(dataset, certificate, float("nan"),
                            np.atleast_2d(points), record_margins)


def write_trajectory_csv(traj, path):
    """CSV columns ``t,F,G,grad_norm,w_hat,w_tilde,min_margin`` at 17 significant digits."""
    nan = np.full(len(traj), np.nan)
    w_hat = traj.w_hat if traj.w_hat is not None else nan
    w_tilde = traj.w_tilde if traj.w_tilde is not None else nan
    with open(path, "w", newline="") as fh:
        fh.write("t,F,G,grad_norm,w_hat,w_tilde,min_margin\n")
        for t in range(len(traj)):
            vals = (traj.F[t], traj.G[t], traj.grad_norm[t], w_hat[t], w_tilde[t],
                    traj.min_margin[t])
            fh.write(str(t) + "," + ",".join(format(float(v), ".17g") for v in vals) + "\n")
