"""Transition-time sweeps over (d, eta), stable-phase rate tables and SVG output."""

import json
import math
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._validation import check_count, check_gamma, check_positive
from .dataset import generate_random
from .diagnostics import transition_time
from .engine import default_horizon, run

THRESHOLDS = ("eighth", "two_over_eta")


def _threshold_name(kind):
    if kind in ("eighth", "1/8eta"):
        return "eighth"
    if kind in ("two", "two_over_eta", "2/eta"):
        return "two_over_eta"
    raise ValueError(f"unknown threshold {kind!r}; expected one of {THRESHOLDS}")


def threshold_value(kind, eta):
    return 1.0 / (8.0 * eta) if _threshold_name(kind) == "eighth" else 2.0 / eta


@dataclass(frozen=True)
class SweepConfig:
    """Grid of ``(d, eta)`` cells, each with ``datasets_per_cell`` random datasets.

    ``n_rule`` is ``"equal_to_d"`` or ``{"fixed": n}``. ``t_max = None``
    uses the default horizon for each cell's ``n``.
    """

    dims: tuple = (2, 4, 8)
    etas: tuple = tuple(float(2**k) for k in range(2, 10))
    gamma: float = 0.2
    datasets_per_cell: int = 256
    n_rule: object = "equal_to_d"
    seed: int = 0
    threshold: str = "two_over_eta"
    t_max: int | None = None

    def __post_init__(self):
        dims = tuple(check_count(d, "d", minimum=2) for d in self.dims)
        etas = tuple(check_positive(e, "eta") for e in self.etas)
        if not dims or not etas:
            raise ValueError("dims and etas must be nonempty")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "etas", etas)
        object.__setattr__(self, "gamma", check_gamma(self.gamma))
        object.__setattr__(self, "datasets_per_cell",
                           check_count(self.datasets_per_cell, "datasets_per_cell"))
        object.__setattr__(self, "threshold", _threshold_name(self.threshold))
        object.__setattr__(self, "seed", int(self.seed))
        if self.t_max is not None:
            object.__setattr__(self, "t_max", check_count(self.t_max, "t_max"))
        rule = self.n_rule
        if isinstance(rule, dict):
            if set(rule) != {"fixed"}:
                raise ValueError(f"n_rule dict must be {{'fixed': n}}, got {rule}")
            rule = {"fixed": check_count(rule["fixed"], "n")}
        elif rule != "equal_to_d":
            raise ValueError(f"n_rule must be 'equal_to_d' or {{'fixed': n}}, got {rule!r}")
        object.__setattr__(self, "n_rule", rule)

    def n_for(self, d):
        return d if self.n_rule == "equal_to_d" else self.n_rule["fixed"]

    def horizon_for(self, d):
        return self.t_max if self.t_max is not None else default_horizon(self.n_for(d),
                                                                          self.gamma)

    def cells(self):
        return [(d, eta) for d in sorted(set(self.dims)) for eta in sorted(set(self.etas))]

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self):
        out = asdict(self)
        out["dims"], out["etas"] = list(self.dims), list(self.etas)
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown sweep config keys: {sorted(extra)}")
        data = dict(data)
        for key in ("dims", "etas"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _eta_bits(eta):
    return struct.unpack("<Q", struct.pack("<d", float(eta)))[0]


def dataset_seed(seed, d, eta, index):
    """64-bit seed for dataset ``index`` of cell ``(d, eta)``, independent of scheduling."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(d), _eta_bits(eta), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SweepRow:
    d: int
    eta: float
    worst_tau: int | None
    mean_tau: float
    num_not_transitioned: int
    wall_time: float = field(default=0.0, compare=False)

    def csv_fields(self):
        worst = "" if self.worst_tau is None else str(self.worst_tau)
        return [str(self.d), format(self.eta, ".17g"), worst, format(self.mean_tau, ".17g"),
                str(self.num_not_transitioned)]


def cell_taus(config, d, eta):
    """Transition time of every dataset in one cell (``None`` = not reached)."""
    n = config.n_for(d)
    horizon = config.horizon_for(d)
    thr = threshold_value(config.threshold, eta)
    taus = []
    for idx in range(config.datasets_per_cell):
        ds, cert = generate_random(d, n, config.gamma, dataset_seed(config.seed, d, eta, idx))
        tr = run(ds, cert, eta, t_max=horizon, stop_threshold=thr)
        taus.append(transition_time(tr, thr))
    return taus


def _run_cell(args):
    config, d, eta = args
    start = time.perf_counter()
    taus = cell_taus(config, d, eta)
    done = [t for t in taus if t is not None]
    return SweepRow(d=d, eta=eta, worst_tau=max(done) if done else None,
                    mean_tau=float(np.mean(done)) if done else math.nan,
                    num_not_transitioned=len(taus) - len(done),
                    wall_time=time.perf_counter() - start)


def sweep_tau_vs_eta(config, workers=1):
    """One :class:`SweepRow` per ``(d, eta)`` cell, sorted by ``(d, eta)``.

    Cells fan out over ``workers`` processes; results do not depend on the
    worker count because every dataset seed is derived from its cell and index.
    """
    workers = check_count(workers, "workers")
    jobs = [(config, d, eta) for d, eta in config.cells()]
    if workers == 1:
        return [_run_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, jobs))


SWEEP_HEADER = "d,eta,worst_tau,mean_tau,not_transitioned\n"


def sweep_csv_text(rows):
    return SWEEP_HEADER + "".join(",".join(r.csv_fields()) + "\n" for r in rows)


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as fh:
        fh.write(sweep_csv_text(rows))


def worst_tau_by_d(rows):
    out = {}
    for r in rows:
        out.setdefault(r.d, []).append((r.eta, r.worst_tau))
    return {d: sorted(v) for d, v in out.items()}


@dataclass(frozen=True)
class RateRow:
    eta: float
    tau: int | None
    max_normalized: float
    final_loss: float
    flagged: bool


def rate_experiment(dataset, certificate, etas, t_budget):
    """For each ``eta``: ``tau`` and ``max_{t > tau} F(w_t) eta gamma^2 (t - tau)``.

    Each run lasts exactly ``t_budget`` steps so final losses are comparable
    across step sizes. Rows whose run never reaches ``1/(8 eta)`` are flagged.
    """
    t_budget = check_count(t_budget, "t_budget")
    g2 = certificate.gamma**2
    rows = []
    for eta in etas:
        eta = check_positive(eta, "eta")
        tr = run(dataset, certificate, eta, t_max=t_budget)
        tau = transition_time(tr, 1.0 / (8.0 * eta))
        if tau is None:
            rows.append(RateRow(eta, None, math.nan, float(tr.F[-1]), True))
            continue
        t = np.arange(tau + 1, tr.T + 1)
        norm = tr.F[t] * eta * g2 * (t - tau)
        rows.append(RateRow(eta, tau, float(norm.max()) if t.size else 0.0, float(tr.F[-1]),
                            False))
    return rows


# -- SVG ------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
            "#17becf")


def _fmt(x):
    return f"{x:.2f}"


def emit_svg(rows, axes_spec=None):
    """Worst transition time against ``log2(eta)``, one polyline per ``d``.

    ``axes_spec`` may set ``width``, ``height``, ``title``, ``y_label`` and
    ``y_max``. Cells where no dataset transitioned are left out of the lines.
    Output depends only on the inputs.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("emit_svg needs at least one row")
    spec = {"width": 640, "height": 400, "title": "worst-case transition time",
            "y_label": "worst tau", "y_max": None}
    spec.update(axes_spec or {})
    W, H = int(spec["width"]), int(spec["height"])
    left, right, top, bottom = 60, 110, 40, 50
    series = worst_tau_by_d(rows)
    xs = [math.log2(r.eta) for r in rows]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    taus = [r.worst_tau for r in rows if r.worst_tau is not None]
    y_hi = spec["y_max"] if spec["y_max"] is not None else max(taus + [1]) * 1.1
    y_hi = max(float(y_hi), 1.0)

    def px(lx):
        return left + (lx - x_lo) / (x_hi - x_lo) * (W - left - right)

    def py(v):
        return H - bottom - v / y_hi * (H - top - bottom)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W // 2}" y="20" text-anchor="middle" font-family="sans-serif" '
           f'font-size="14">{spec["title"]}</text>']
    x0, x1, y0, y1 = left, W - right, H - bottom, top
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    for k in range(math.ceil(x_lo), math.floor(x_hi) + 1):
        x = _fmt(px(k))
        out.append(f'<line x1="{x}" y1="{y0}" x2="{x}" y2="{y0 + 4}" stroke="black"/>')
        out.append(f'<text x="{x}" y="{y0 + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">2^{k}</text>')
    for j in range(5):
        v = y_hi * j / 4
        y = _fmt(py(v))
        out.append(f'<line x1="{x0 - 4}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{y}" text-anchor="end" dominant-baseline="middle" '
                   f'font-family="sans-serif" font-size="11">{v:.0f}</text>')
    out.append(f'<text x="{(x0 + x1) // 2}" y="{H - 12}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">eta (log2 scale)</text>')
    out.append(f'<text x="16" y="{(y0 + y1) // 2}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 16 {(y0 + y1) // 2})">{spec["y_label"]}</text>')
    for idx, (d, pts) in enumerate(sorted(series.items())):
        color = _PALETTE[idx % len(_PALETTE)]
        coords = " ".join(f"{_fmt(px(math.log2(e)))},{_fmt(py(t))}"
                          for e, t in pts if t is not None)
        if coords:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" '
                       f'points="{coords}"/>')
        ly = top + 16 * idx + 10
        out.append(f'<line x1="{W - right + 10}" y1="{ly}" x2="{W - right + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - right + 35}" y="{ly}" dominant-baseline="middle" '
                   f'font-family="sans-serif" font-size="11">d = {d}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
