"""Datasets satisfying the separable, bounded, single-label setting.

Rows are stored with labels folded in (``y_i * x_i``), so every effective
label is +1 and the logistic objective only sees the stored rows.
"""

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_count, check_gamma, check_labels, check_points
from .exceptions import NonSeparableError, ParseError

NORM_SLACK = 1e-12


class CertificateKind(str, enum.Enum):
    EXACT_2D = "Exact2D"
    GRID = "Grid"
    NOMINAL = "Nominal"


@dataclass(frozen=True)
class Dataset:
    """``points`` is the (n, d) matrix of label-folded rows."""

    points: np.ndarray

    def __post_init__(self):
        pts = check_points(self.points)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def max_norm(self):
        return float(np.max(np.linalg.norm(self.points, axis=1)))

    def is_bounded(self):
        return self.max_norm() <= 1.0 + NORM_SLACK

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    __hash__ = None


@dataclass(frozen=True)
class MarginCertificate:
    """Margin ``gamma`` with unit max-margin direction ``w_star``.

    ``v_star`` is the unit direction orthogonal to ``w_star`` (2-D only),
    fixed as ``w_star`` rotated by +90 degrees.
    """

    gamma: float
    w_star: np.ndarray
    kind: CertificateKind
    v_star: np.ndarray | None = None
    support: tuple = field(default=())

    def __post_init__(self):
        w = np.asarray(self.w_star, dtype=np.float64).copy()
        w.setflags(write=False)
        object.__setattr__(self, "w_star", w)
        if self.v_star is None and w.shape == (2,):
            object.__setattr__(self, "v_star", rotate90(w))
        elif self.v_star is not None:
            v = np.asarray(self.v_star, dtype=np.float64).copy()
            v.setflags(write=False)
            object.__setattr__(self, "v_star", v)
        object.__setattr__(self, "kind", CertificateKind(self.kind))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def d(self):
        return self.w_star.shape[0]

    def to_dict(self):
        out = {
            "gamma": self.gamma,
            "w_star": self.w_star.tolist(),
            "kind": self.kind.value,
        }
        if self.v_star is not None:
            out["v_star"] = self.v_star.tolist()
        if self.support:
            out["support"] = list(self.support)
        return out


def rotate90(w):
    w = np.asarray(w, dtype=np.float64)
    r = np.empty(2)
    r[0] = 0.0 - w[1]  # avoids emitting -0.0
    r[1] = w[0]
    r.setflags(write=False)
    return r


def normalize(raw_points, labels=None):
    """Fold labels into the rows and scale by the largest row norm.

    Raises ``ValueError`` on empty input and ``NonSeparableError`` when a
    row is identically zero, since no margin can then be positive.
    """
    pts = check_points(raw_points, name="raw_points")
    if labels is not None:
        pts = pts * check_labels(labels, pts.shape[0])[:, None]
    norms = np.linalg.norm(pts, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise NonSeparableError(f"row {bad} has zero norm; the margin is undefined")
    scale = np.max(norms)
    # already at unit scale up to rounding: leave bits untouched (idempotence)
    if abs(scale - 1.0) <= 2 * np.finfo(float).eps:
        return Dataset(pts)
    return Dataset(pts / scale)


def _min_margins(points, directions):
    # directions: (m, d) -> per-direction min margin, shape (m,)
    return np.min(points @ directions.T, axis=0)


def max_margin_2d(dataset):
    """Exact 2-D max-margin direction by candidate enumeration.

    The min of finitely many linear functions on the unit circle peaks
    either at some normalized ``x_i`` or where two margins tie, so those
    directions are the only candidates. Ties between candidates go to the
    smallest angle in ``[0, 2*pi)``.
    """
    X = dataset.points
    if dataset.d != 2:
        raise ValueError(f"max_margin_2d needs d = 2, got d = {dataset.d}")
    n = dataset.n
    norms = np.linalg.norm(X, axis=1)
    cands = [X / norms[:, None]]
    if n > 1:
        i, j = np.triu_indices(n, k=1)
        diff = X[i] - X[j]
        dn = np.linalg.norm(diff, axis=1)
        keep = dn > 0
        perp = np.column_stack([-diff[keep, 1], diff[keep, 0]]) / dn[keep, None]
        cands.extend([perp, -perp])
    C = np.concatenate(cands, axis=0)
    margins = _min_margins(X, C)
    best = float(np.max(margins))
    if not best > 0.0:
        raise NonSeparableError(f"best min-margin is {best:.3e} <= 0")
    tied = np.flatnonzero(margins >= best - 4 * np.finfo(float).eps * max(1.0, best))
    angles = np.mod(np.arctan2(C[tied, 1], C[tied, 0]), 2 * np.pi)
    pick = tied[np.argmin(angles)]
    w = C[pick]
    w = w / np.linalg.norm(w)
    gamma = float(np.min(X @ w))
    a = X @ w
    support = tuple(int(k) for k in np.flatnonzero(a <= gamma + 1e-12))
    return MarginCertificate(gamma=gamma, w_star=w, kind=CertificateKind.EXACT_2D,
                             support=support)


def max_margin_grid(dataset, resolution=1_000_000, chunk=200_000):
    """Brute-force oracle: best min-margin over ``resolution`` equally spaced angles."""
    if dataset.d != 2:
        raise ValueError(f"max_margin_grid needs d = 2, got d = {dataset.d}")
    resolution = check_count(resolution, "resolution")
    X = dataset.points
    best, best_k = -np.inf, 0
    for start in range(0, resolution, chunk):
        k = np.arange(start, min(start + chunk, resolution))
        theta = 2 * np.pi * k / resolution
        D = np.column_stack([np.cos(theta), np.sin(theta)])
        m = _min_margins(X, D)
        idx = int(np.argmax(m))
        if m[idx] > best:
            best, best_k = float(m[idx]), int(k[idx])
    if not best > 0.0:
        raise NonSeparableError(f"best grid min-margin is {best:.3e} <= 0")
    theta = 2 * np.pi * best_k / resolution
    return MarginCertificate(gamma=best, w_star=np.array([math.cos(theta), math.sin(theta)]),
                             kind=CertificateKind.GRID)


def _uniform_ball(rng, n, dim, radius):
    if dim == 1:
        return radius * rng.uniform(-1.0, 1.0, size=(n, 1))
    g = rng.standard_normal(size=(n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / dim)
    return g * r


def generate_random(d, n, gamma, seed):
    """Random dataset with ``<x_i, e_1> = gamma`` and the rest uniform in a ball.

    The orthogonal part of each row is uniform over the (d-1)-ball of radius
    ``sqrt(1 - gamma^2)``, so every row has norm at most 1. The returned
    certificate is nominal: ``e_1`` attains at least ``gamma``, the true
    margin may be larger.
    """
    d = check_count(d, "d", minimum=2)
    n = check_count(n, "n")
    gamma = check_gamma(gamma)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))
    radius = math.sqrt(1.0 - gamma * gamma)
    pts = np.empty((n, d))
    pts[:, 0] = gamma
    pts[:, 1:] = _uniform_ball(rng, n, d - 1, radius)
    w_star = np.zeros(d)
    w_star[0] = 1.0
    return Dataset(pts), MarginCertificate(gamma=gamma, w_star=w_star,
                                           kind=CertificateKind.NOMINAL)


def save_csv(dataset, path):
    """Write ``x1,...,xd,y`` rows at 17 significant digits; stored rows carry y = +1."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(dataset.d)] + ["y"])
        for row in dataset.points:
            w.writerow([format(float(v), ".17g") for v in row] + ["1"])


def load_csv(path, normalize_rows=False):
    """Read a dataset CSV written by :func:`save_csv` (or by hand).

    Labels are always folded into the rows. With ``normalize_rows`` the
    rows are also rescaled by the largest norm; without it, a row of norm
    above 1 is an error.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[-1] != "y":
            raise ParseError(f"{path}: header must be x1,...,xd,y; got {header}")
        d = len(header) - 1
        if header[:-1] != [f"x{j + 1}" for j in range(d)]:
            raise ParseError(f"{path}: header must be x1,...,xd,y; got {header}")
        rows, labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != d + 1:
                raise ParseError(f"{path}:{lineno}: expected {d + 1} fields, got {len(rec)}")
            try:
                vals = [float(c) for c in rec]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if vals[-1] not in (-1.0, 1.0):
                raise ParseError(f"{path}:{lineno}: label must be -1 or +1, got {rec[-1]!r}")
            if not all(math.isfinite(v) for v in vals[:-1]):
                raise ParseError(f"{path}:{lineno}: non-finite coordinate")
            rows.append(vals[:-1])
            labels.append(vals[-1])
    if not rows:
        raise ParseError(f"{path}: no data rows")
    pts = np.array(rows, dtype=np.float64)
    y = np.array(labels)
    if normalize_rows:
        return normalize(pts, y)
    ds = Dataset(pts * y[:, None])
    if not ds.is_bounded():
        raise ParseError(f"{path}: max row norm {ds.max_norm():.17g} exceeds 1; "
                         "load with normalization enabled")
    return ds
