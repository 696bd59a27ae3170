"""Command-line entry point: ``largestep {gen,margin,run,sweep,lowerbound,verify}``.

Settings come from an optional JSON file (``--config``) and are then
overridden by flags. Every subcommand prints a JSON summary on stdout and
writes its artifacts under ``--out``.
"""

import argparse
import json
import logging
import math
import os
import sys
import warnings

from . import dataset as dsmod
from . import engine, experiments, lowerbound, theory
from .diagnostics import (DerivedConstants, detect_oscillations, detect_oscillations_general,
                          transition_time, write_oscillations_csv)
from .exceptions import LargeStepError, TheoryViolation

log = logging.getLogger("largestep")

DEFAULTS = {"d": 2, "n": 4, "gamma": 0.25, "seed": 0, "eta": None, "eta_multiplier": 1.0,
            "threshold": "eighth", "t_max": None, "out": "out", "grace_steps": 0}
FLAG_KEYS = ("eta", "gamma", "n", "d", "seed", "threshold", "t_max", "out")


def _add_common(p):
    p.add_argument("--config", help="JSON file with settings (flags override it)")
    p.add_argument("--eta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", choices=("eighth", "two"))
    p.add_argument("--t-max", dest="t_max", type=int)
    p.add_argument("--out", help="output directory")


def _settings(args, defaults=DEFAULTS):
    cfg = dict(defaults)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg.update(json.load(fh))
    for key in FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _outdir(cfg):
    os.makedirs(cfg["out"], exist_ok=True)
    return cfg["out"]


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, allow_nan=False, default=_json_default)
    sys.stdout.write("\n")


def _json_default(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _clean(obj):
    """Replace non-finite floats by ``None`` so the JSON stays strict."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _load_problem(args, cfg):
    """Dataset plus certificate from ``--data`` or from the random generator."""
    if getattr(args, "data", None):
        ds = dsmod.load_csv(args.data, normalize_rows=args.normalize)
        if ds.d != 2:
            raise LargeStepError("loaded datasets need d = 2 to compute a margin certificate")
        return ds, dsmod.max_margin_2d(ds)
    ds, cert = dsmod.generate_random(cfg["d"], cfg["n"], cfg["gamma"], cfg["seed"])
    if getattr(args, "exact_margin", False) and ds.d == 2:
        cert = dsmod.max_margin_2d(ds)
    return ds, cert


def _eta(cfg, ds, cert):
    if cfg.get("eta") is not None:
        return float(cfg["eta"])
    return float(cfg.get("eta_multiplier", 1.0)) * DerivedConstants(1.0, cert.gamma, ds.n).eta0


def _threshold_kind(cfg):
    return "eighth" if cfg["threshold"] in ("eighth", "1/8eta") else "two"


def _simulate(args, cfg, record_margins=False):
    ds, cert = _load_problem(args, cfg)
    eta = _eta(cfg, ds, cert)
    k = DerivedConstants(eta=eta, gamma=cert.gamma, n=ds.n)
    thr = k.threshold(_threshold_kind(cfg))
    grace = int(args.grace_steps if args.grace_steps is not None else cfg.get("grace_steps", 0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TheoryViolation)
        tr = engine.run(ds, cert, eta, t_max=cfg.get("t_max"), record_margins=record_margins,
                        stop_threshold=thr if not getattr(args, "full", False) else None,
                        grace_steps=grace, eta0=k.eta0)
    notes = [str(w.message) for w in caught if issubclass(w.category, TheoryViolation)]
    for msg in notes:
        log.warning("theory violation: %s", msg)
    return ds, cert, k, thr, tr, notes


def cmd_gen(args):
    cfg = _settings(args)
    out = _outdir(cfg)
    if args.kind == "random":
        ds, cert = dsmod.generate_random(cfg["d"], cfg["n"], cfg["gamma"], cfg["seed"])
        extra = {}
    elif args.kind == "classify":
        ds = lowerbound.hard_dataset_classify(cfg["n"], cfg["gamma"])
        cert = lowerbound.hard_certificate(cfg["gamma"], support=range(ds.n))
        extra = {}
    else:
        ds, params = lowerbound.hard_dataset_stable(cfg["n"], cfg["gamma"], cfg.get("eta"))
        cert = lowerbound.hard_certificate(cfg["gamma"], support=range(ds.n))
        extra = {"stable_params": params.as_dict()}
    path = os.path.join(out, "dataset.csv")
    dsmod.save_csv(ds, path)
    _emit(_clean({"dataset_csv_path": path, "n": ds.n, "d": ds.d,
                  "certificate": cert.to_dict(), **extra}))
    return 0


def cmd_margin(args):
    ds = dsmod.load_csv(args.data, normalize_rows=args.normalize)
    cert = dsmod.max_margin_grid(ds, args.grid) if args.grid else dsmod.max_margin_2d(ds)
    _emit(cert.to_dict())
    return 0


def _trajectory_outputs(out, tr, cert, k):
    traj_path = os.path.join(out, "trajectory.csv")
    engine.write_trajectory_csv(tr, traj_path)
    if cert.v_star is not None:
        events = detect_oscillations(tr, k)
    else:
        events = detect_oscillations_general(tr, cert, k)
    osc_path = os.path.join(out, "oscillations.csv")
    write_oscillations_csv(events, osc_path)
    return traj_path, osc_path, events


def cmd_run(args):
    cfg = _settings(args)
    out = _outdir(cfg)
    ds, cert, k, thr, tr, notes = _simulate(args, cfg)
    traj_path, osc_path, events = _trajectory_outputs(out, tr, cert, k)
    _emit(_clean({
        "n": ds.n, "d": ds.d, "eta": k.eta, "threshold": thr,
        "tau": transition_time(tr, thr), "steps": tr.T, "final_loss": float(tr.F[-1]),
        "oscillations": len(events), "constants": k.as_dict(),
        "certificate": cert.to_dict(), "trajectory_csv_path": traj_path,
        "oscillations_csv_path": osc_path, "theory_violations": notes,
    }))
    return 0


def cmd_verify(args):
    cfg = _settings(args)
    out = _outdir(cfg)
    ds, cert, k, thr, tr, notes = _simulate(args, cfg, record_margins=True)
    reports = theory.verify_all(tr, cert, k)
    path = os.path.join(out, "lemmas.json")
    with open(path, "w") as fh:
        fh.write(theory.reports_to_json(reports) + "\n")
    engine.write_trajectory_csv(tr, os.path.join(out, "trajectory.csv"))
    for r in reports:
        log.info(r.line())
    failed = [r.id.value for r in reports if r.failed]
    _emit(_clean({"eta": k.eta, "tau": transition_time(tr, k.tau_threshold),
                  "lemma_json_path": path, "failed": failed,
                  "skipped": [r.id.value for r in reports if r.skipped],
                  "theory_violations": notes}))
    return 1 if failed else 0


SWEEP_KEYS = set(experiments.SweepConfig.__dataclass_fields__)


def cmd_sweep(args):
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
    out_dir = args.out or raw.pop("out", "out")
    raw.pop("out", None)
    cfg = experiments.SweepConfig.from_dict({k: v for k, v in raw.items() if k in SWEEP_KEYS})
    over = {"gamma": args.gamma, "seed": args.seed, "t_max": args.t_max}
    if args.d is not None:
        over["dims"] = (args.d,)
    if args.eta is not None:
        over["etas"] = (args.eta,)
    if args.n is not None:
        over["n_rule"] = {"fixed": args.n}
    if args.threshold is not None:
        over["threshold"] = "eighth" if args.threshold == "eighth" else "two_over_eta"
    if args.datasets_per_cell is not None:
        over["datasets_per_cell"] = args.datasets_per_cell
    cfg = cfg.with_overrides(**over)
    os.makedirs(out_dir, exist_ok=True)
    rows = experiments.sweep_tau_vs_eta(cfg, workers=args.workers)
    csv_path = os.path.join(out_dir, "sweep.csv")
    svg_path = os.path.join(out_dir, "sweep.svg")
    experiments.write_sweep_csv(rows, csv_path)
    with open(svg_path, "w") as fh:
        fh.write(experiments.emit_svg(rows))
    worst = [r.worst_tau for r in rows if r.worst_tau is not None]
    _emit(_clean({"config": cfg.to_dict(), "sweep_csv_path": csv_path, "svg_path": svg_path,
                  "max_worst_tau": max(worst) if worst else None,
                  "not_transitioned": sum(r.num_not_transitioned for r in rows),
                  "wall_time": sum(r.wall_time for r in rows)}))
    return 0


def cmd_lowerbound(args):
    defaults = dict(DEFAULTS, n=6, gamma=0.125)
    cfg = _settings(args, defaults)
    out = _outdir(cfg)
    fn = (lowerbound.verify_classify_bound if args.kind == "classify"
          else lowerbound.verify_stable_bound)
    report = fn(cfg["n"], cfg["gamma"], cfg.get("eta"), t_max=cfg.get("t_max"))
    path = os.path.join(out, f"lowerbound_{args.kind}.csv")
    engine.write_trajectory_csv(report.trajectory, path)
    report.trajectory_csv_path = path
    body = report.to_dict()
    body["theorem2_floor"] = lowerbound.theorem2_bound(cfg["n"], cfg["gamma"])
    _emit(_clean(body))
    return 0 if report.all_passed else 1


def build_parser():
    p = argparse.ArgumentParser(prog="largestep",
                                description="Large-step gradient descent on separable "
                                            "logistic regression.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a random or hard-instance dataset CSV")
    _add_common(g)
    g.add_argument("--kind", choices=("random", "classify", "stable"), default="random")
    g.set_defaults(func=cmd_gen)

    m = sub.add_parser("margin", help="max-margin certificate of a 2-D dataset CSV")
    m.add_argument("data")
    m.add_argument("--normalize", action="store_true", help="rescale rows by the max norm")
    m.add_argument("--grid", type=int, default=0, help="use the angle-grid oracle instead")
    m.set_defaults(func=cmd_margin)

    for name, func, text in (("run", cmd_run, "simulate GD and write the trajectory"),
                             ("verify", cmd_verify, "simulate GD and check every inequality")):
        r = sub.add_parser(name, help=text)
        _add_common(r)
        r.add_argument("--data", help="dataset CSV (default: random dataset from --d/--n/...)")
        r.add_argument("--normalize", action="store_true")
        r.add_argument("--exact-margin", action="store_true",
                       help="refine a generated 2-D dataset's certificate with the exact solver")
        r.add_argument("--grace-steps", dest="grace_steps", type=int,
                       default=0 if name == "run" else 100,
                       help="steps kept after the threshold is reached")
        r.add_argument("--full", action="store_true",
                       help="run all t_max steps instead of stopping at the threshold")
        r.set_defaults(func=func)

    s = sub.add_parser("sweep", help="worst transition time over a (d, eta) grid")
    _add_common(s)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--datasets-per-cell", dest="datasets_per_cell", type=int)
    s.set_defaults(func=cmd_sweep)

    lb = sub.add_parser("lowerbound", help="simulate a hard instance and check its bound")
    _add_common(lb)
    lb.add_argument("--kind", choices=("classify", "stable"), default="classify")
    lb.set_defaults(func=cmd_lowerbound)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (LargeStepError, ValueError, ArithmeticError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
