"""Command-line front end: ``dsre alpha | simulate | figures | diagnose``."""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import __version__
from .diagnostics import (
    DiagnosticsReport,
    JointExceedanceSink,
    MarginalTopSink,
    first_passage,
    stationarity_check,
    tilted_drift,
    write_curve_csv,
)
from .engine import (
    DEFAULT_BURN_IN,
    TrajectoryRecorder,
    TrajectoryStream,
    simulate,
    write_dump,
)
from .exceptions import (
    CaseOrderingViolated,
    ConfigError,
    DimensionError,
    InsufficientExceedances,
    NonIntegrable,
    NoRootInRange,
    StationarityViolated,
    TiltNotNormalized,
)
from .models import (
    CCCGeneralModel,
    RunConfig,
    block_partition,
    figure_model,
    load_config,
    model_hash,
    tail_profile,
)
from .output import RunManifest, bar_chart_svg, line_chart_svg, stamp_csv
from .vsrv import ExceedanceSink, angular_histogram, block_mass, spectral_recursion_test

EXIT_OK, EXIT_MODEL, EXIT_CONFIG, EXIT_DATA = 0, 2, 3, 4
DEFAULT_LENGTH = 10_000_000
DEFAULT_SEED = 2024
DEFAULT_GRID = (0.99, 0.999, 0.9999, 1 - 1e-5)
DUMP_MAX = 1_000_000
# spawn-key prefix for auxiliary Monte Carlo streams, disjoint from engine blocks
AUX_STREAM = 1 << 40


def aux_rng(seed, tag):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(AUX_STREAM, tag))))


# ---------------------------------------------------------------------------
# argument parsing


def _run_flags():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--length", type=int, help="observations kept after burn-in")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--burn-in", type=int, dest="burn_in", help="discarded initial steps")
    p.add_argument("--quantile", type=float, default=1e-5,
                   help="tail probability of the radius threshold (default 1e-5)")
    p.add_argument("--bins", type=int, default=100, help="angular histogram bins")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--absolute", dest="absolute", action="store_true", default=True,
                   help="angles of |theta| in [0, pi/2] (default)")
    g.add_argument("--signed", dest="absolute", action="store_false",
                   help="signed angles in [-pi/2, pi/2]")
    p.add_argument("--workers", type=int, default=1, help="simulation threads")
    p.add_argument("--force", action="store_true", help="simulate even if non-stationary")
    p.add_argument("--outdir", default="dsre_out", help="output directory")
    return p


def _model_source(p):
    p.add_argument("config", nargs="?", help="model config file")
    p.add_argument("--figure", type=int, choices=range(1, 7), metavar="N",
                   help="use the built-in model of simulation figure N instead of a config")


def build_parser():
    parser = argparse.ArgumentParser(prog="dsre", description="Diagonal SRE simulation and extremal diagnostics.")
    parser.add_argument("--version", action="version", version="dsre " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = _run_flags()

    p = sub.add_parser("alpha", help="solve the per-coordinate tail indices")
    _model_source(p)

    p = sub.add_parser("simulate", parents=[run], help="simulate and collect exceedances")
    _model_source(p)
    p.add_argument("--dump", action="store_true", help="write the raw trajectory (length <= %d)" % DUMP_MAX)
    p.add_argument("--window", type=int, default=1, help="forward window kept per exceedance")
    p.add_argument("--hill-k", type=int, default=2000, dest="hill_k")

    p = sub.add_parser("figures", parents=[run], help="reproduce a simulation-study figure")
    p.add_argument("which", type=int, choices=range(1, 7), metavar="N", help="figure number 1..6")
    p.add_argument("--hill-k", type=int, default=2000, dest="hill_k")

    p = sub.add_parser("diagnose", parents=[run], help="asymptotic independence diagnostics")
    _model_source(p)
    p.add_argument("--pair", default="1,2", help="1-based coordinate pair, e.g. 1,2")
    p.add_argument("--grid", default=",".join(repr(g) for g in DEFAULT_GRID),
                   help="comma-separated quantile levels of the joint exceedance curve")
    p.add_argument("--first-passage", action="store_true", dest="first_passage")
    p.add_argument("--replicas", type=int, default=10_000)
    p.add_argument("--C", type=float, default=2.0, dest="C", help="first-passage window constant")
    p.add_argument("--u-grid", default="1e3,1e4,1e5", dest="u_grid")
    p.add_argument("--hill-k", type=int, default=2000, dest="hill_k")
    return parser


def _floats(text, what):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("%s must be comma-separated numbers" % what) from None


# ---------------------------------------------------------------------------
# helpers


def _resolve(args) -> RunConfig:
    if getattr(args, "figure", None) is not None:
        if args.config:
            raise ConfigError("give either a config file or --figure, not both")
        cfg = RunConfig(figure_model(args.figure), DEFAULT_SEED, DEFAULT_LENGTH, DEFAULT_BURN_IN)
    elif getattr(args, "config", None):
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise ConfigError("cannot read config: %s" % exc) from None
    else:
        raise ConfigError("a config file or --figure is required")
    for key in ("seed", "length", "burn_in"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if cfg.length < 0 or cfg.burn_in < 0:
        raise ConfigError("length and burn-in must be non-negative")
    return cfg


def _gate(model, force):
    bad = [i + 1 for i, v in enumerate(model.log_moments()) if v >= 0]
    if bad and not force:
        raise StationarityViolated(
            "E log|b_i + c_i M| >= 0 on coordinate(s) %s; use --force to simulate anyway" % bad, bad
        )


def _radius_alpha(model, force):
    """Tail indices for the radius, or unit indices when none exist.

    A model without solvable indices (a light-tailed point-mass law, or a
    forced non-stationary run) falls back to the plain max-norm radius.
    """
    try:
        return tail_profile(model).alpha, True
    except NoRootInRange as exc:
        reason = str(exc)
    except StationarityViolated as exc:
        if not force:
            raise
        reason = str(exc)
    print("warning: no tail indices (%s); radius uses unit indices" % reason, file=sys.stderr)
    return (1.0,) * model.d, False


def _level(args):
    if not 0 < args.quantile < 1:
        raise ConfigError("--quantile is a tail probability in (0, 1)")
    return 1.0 - args.quantile


def _manifest(args, cfg, command, options):
    m = RunManifest(
        config_path=getattr(args, "config", None),
        model_hash=model_hash(cfg.model),
        seed=int(cfg.seed),
        length=int(cfg.length),
        burn_in=int(cfg.burn_in),
        command=command,
        options=options,
        outdir=os.path.abspath(args.outdir),
        version=__version__,
    )
    m.write()
    return m


def _csv_rows(path, header, rows, digest):
    with open(path, "w", newline="") as fh:
        fh.write("# manifest=%s\n" % digest)
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _histogram_outputs(exc, args, model, prefix, digest, title, solved=True):
    hist = angular_histogram(exc, args.bins, args.absolute)
    path = os.path.join(args.outdir, prefix + "histogram.csv")
    hist.to_csv(path)
    stamp_csv(path, digest)
    marks = ()
    if solved and not isinstance(model, CCCGeneralModel) and args.absolute:
        marks = block_partition(model).angular_atoms()
    bar_chart_svg(
        hist.edges, hist.mass, os.path.join(args.outdir, prefix + "histogram.svg"),
        title=title, xlabel="arctan(theta1/theta2) [rad]", ylabel="mass",
        marks=marks, note="manifest=%s" % digest,
    )
    return hist


def _curve_svg(rows, path, digest, title):
    if not rows:
        return
    line_chart_svg(
        [r["u"] for r in rows],
        {"P(X2>x2 | X1>x1)": [r["conditional"] for r in rows], "u P(both)": [r["joint_scaled"] for r in rows]},
        path, title=title, xlabel="u = 1/(1-p)", ylabel="probability", note="manifest=%s" % digest,
    )


def _say(msg):
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# commands


def cmd_alpha(args):
    cfg = _resolve(args)
    prof = tail_profile(cfg.model)
    for i, (a, r, lm) in enumerate(zip(prof.alpha, prof.residual, prof.log_moment)):
        _say("alpha_%d = %.12g  residual = %.3g  E log|b+cM| = %.6g" % (i + 1, a, r, lm))
    return EXIT_OK


def _collect(cfg, args, window, hill_k, pair=None, grid=DEFAULT_GRID):
    model = cfg.model
    alpha, solved = _radius_alpha(model, args.force)
    exc = ExceedanceSink(alpha, cfg.length, _level(args), window=window)
    tops = MarginalTopSink(model.d, k_max=max(hill_k + 1, 5001))
    sinks = [exc, tops]
    joint = None
    if pair is not None:
        joint = JointExceedanceSink(pair, cfg.length, grid=grid)
        sinks.append(joint)
    stream = TrajectoryStream(model, cfg.seed, cfg.burn_in, cfg.length)
    simulate(stream, sinks, workers=args.workers, force=args.force)
    return exc, tops, joint


def _hill(tops, k, n):
    if not 0 < k < min(n, tops.top.shape[0]):
        return [math.nan] * tops.d
    return tops.hill(k)


def cmd_simulate(args):
    cfg = _resolve(args)
    _gate(cfg.model, args.force)
    if args.dump and cfg.length > DUMP_MAX:
        raise ConfigError("--dump is limited to length <= %d" % DUMP_MAX)
    options = {"quantile": args.quantile, "window": args.window, "hill_k": args.hill_k,
               "bins": args.bins, "absolute": args.absolute, "dump": args.dump}
    man = _manifest(args, cfg, "simulate", options)
    digest = man.digest
    model = cfg.model
    alpha, solved = _radius_alpha(model, args.force)
    exc = ExceedanceSink(alpha, cfg.length, _level(args), window=args.window)
    tops = MarginalTopSink(model.d, k_max=max(args.hill_k + 1, 5001))
    sinks = [exc, tops]
    rec = TrajectoryRecorder() if args.dump else None
    if rec is not None:
        sinks.append(rec)
    simulate(TrajectoryStream(model, cfg.seed, cfg.burn_in, cfg.length), sinks,
             workers=args.workers, force=args.force)
    if rec is not None:
        write_dump(os.path.join(args.outdir, "trajectory.bin"), rec.path)
    hill = _hill(tops, args.hill_k, cfg.length)
    _csv_rows(os.path.join(args.outdir, "hill.csv"), ["coordinate", "k", "hill", "alpha"],
              [(i + 1, args.hill_k, float(h), float(a)) for i, (h, a) in enumerate(zip(hill, alpha))], digest)
    es = exc.finalize()
    path = os.path.join(args.outdir, "exceedances.csv")
    es.to_csv(path)
    stamp_csv(path, digest)
    if model.d == 2:
        _histogram_outputs(es, args, model, "", digest, "angular measure", solved)
    _say("%d exceedances above %.6g written to %s" % (len(es), es.threshold, args.outdir))
    return EXIT_OK


def cmd_figures(args):
    model = figure_model(args.which)
    cfg = RunConfig(model, DEFAULT_SEED, DEFAULT_LENGTH, DEFAULT_BURN_IN)
    for key in ("seed", "length", "burn_in"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    args.config = None
    options = {"figure": args.which, "quantile": args.quantile, "bins": args.bins,
               "absolute": args.absolute, "hill_k": args.hill_k}
    man = _manifest(args, cfg, "figures", options)
    digest = man.digest
    general = isinstance(model, CCCGeneralModel)
    exc, tops, joint = _collect(cfg, args, 0 if general else 1, args.hill_k, pair=(0, 1))
    es = exc.finalize()
    prefix = "fig%d_" % args.which
    path = os.path.join(args.outdir, prefix + "exceedances.csv")
    es.to_csv(path)
    stamp_csv(path, digest)
    hist = _histogram_outputs(es, args, model, prefix, digest, "figure %d angular measure" % args.which)
    rows = joint.curve()
    write_curve_csv(rows, os.path.join(args.outdir, prefix + "curve.csv"))
    stamp_csv(os.path.join(args.outdir, prefix + "curve.csv"), digest)
    _curve_svg(rows, os.path.join(args.outdir, prefix + "curve.svg"), digest,
               "figure %d joint exceedances" % args.which)

    alpha = tail_profile(model).alpha
    diag = [("n_observations", "", es.n_observations), ("threshold", "", es.threshold),
            ("n_exceedances", "", len(es))]
    diag += [("alpha", str(i + 1), float(a)) for i, a in enumerate(alpha)]
    diag += [("hill", str(i + 1), float(h)) for i, h in enumerate(_hill(tops, args.hill_k, cfg.length))]
    fr, leak = block_mass(es, model.blocks)
    diag += [("block_fraction", "+".join(str(i + 1) for i in blk), float(f)) for blk, f in zip(model.blocks, fr)]
    diag.append(("block_leakage", "", leak))
    for r in rows:
        diag.append(("joint_conditional", repr(r["quantile"]), float(r["conditional"])))
        diag.append(("joint_scaled", repr(r["quantile"]), float(r["joint_scaled"])))
    if args.absolute:
        diag.append(("mass_near_axes_0.1", "", hist.mass_near([0.0, 0.5 * math.pi], 0.1)))
        if not general:
            for a in block_partition(model).angular_atoms():
                diag.append(("mass_near_prediction_0.05", repr(a), hist.mass_near([a], 0.05)))
    if not general:
        pv = spectral_recursion_test(es, model, aux_rng(cfg.seed, 1))
        diag += [("ks_pvalue_lag1", str(i + 1), p) for i, p in enumerate(pv)]
    _csv_rows(os.path.join(args.outdir, prefix + "diagnostics.csv"), ["quantity", "index", "value"], diag, digest)
    _say("figure %d: %d exceedances, outputs in %s" % (args.which, len(es), args.outdir))
    return EXIT_OK


def cmd_diagnose(args):
    cfg = _resolve(args)
    _gate(cfg.model, args.force)
    model = cfg.model
    try:
        pair = tuple(int(v) - 1 for v in args.pair.split(","))
    except ValueError:
        raise ConfigError("--pair must look like 1,2") from None
    if len(pair) != 2 or pair[0] == pair[1] or not all(0 <= i < model.d for i in pair):
        raise DimensionError("--pair needs two distinct coordinates in 1..%d" % model.d)
    grid = tuple(_floats(args.grid, "--grid"))
    if not grid or not all(0 < p < 1 for p in grid):
        raise ConfigError("--grid levels must lie in (0, 1)")
    options = {"pair": list(pair), "grid": list(grid), "first_passage": args.first_passage,
               "replicas": args.replicas, "C": args.C, "u_grid": args.u_grid, "hill_k": args.hill_k,
               "quantile": args.quantile}
    man = _manifest(args, cfg, "diagnose", options)
    digest = man.digest

    alpha, solved = _radius_alpha(model, args.force)
    st = stationarity_check(model)
    report = DiagnosticsReport(alpha=list(alpha) if solved else [], stationarity={
        "log_moment": st.log_moment, "passes": st.passes,
        "closed_form": st.closed_form, "closed_form_passes": st.closed_form_passes, "agree": st.agree,
    })
    i, j = sorted(pair, key=lambda k: (-alpha[k], k))
    f1, fj = model.factors[i], model.factors[j]
    if solved and not isinstance(model, CCCGeneralModel):
        td = tilted_drift(f1, fj, alpha[i], alpha[j], rng=aux_rng(cfg.seed, 2))
        report.drifts = {"tilt_coordinate": i + 1, "other_coordinate": j + 1, **td.__dict__}

    if cfg.length > 0:
        exc, tops, joint = _collect(cfg, args, 0, args.hill_k, pair=pair, grid=grid)
        report.curve = joint.curve()
        report.hill = _hill(tops, args.hill_k, cfg.length)
        try:
            es = exc.finalize()
            fr, leak = block_mass(es, model.blocks)
            report.block_mass = {"blocks": [list(b) for b in model.blocks], "fractions": fr.tolist(),
                                 "leakage": leak}
        except InsufficientExceedances as exc_err:
            report.block_mass = {"error": str(exc_err)}
        write_curve_csv(report.curve, os.path.join(args.outdir, "curve.csv"))
        stamp_csv(os.path.join(args.outdir, "curve.csv"), digest)
        _curve_svg(report.curve, os.path.join(args.outdir, "curve.svg"), digest, "joint exceedances")

    if args.first_passage and solved:
        if isinstance(model, CCCGeneralModel):
            q_sampler = _const_sampler(model.a[i])
        else:
            q_sampler = _marginal_sampler(model.q_law, i)
        stats = first_passage(f1, alpha[i], q_sampler, _floats(args.u_grid, "--u-grid"),
                              replicas=args.replicas, C=args.C, rng=aux_rng(cfg.seed, 3))
        report.first_passage = [
            {"u": s.u, "window_violation_rate": s.window_violation_rate, "center": s.center,
             "halfwidth": s.halfwidth, "mean_passage_time": float(np.mean(s.passage_times))}
            for s in stats
        ]
    with open(os.path.join(args.outdir, "diagnostics.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    if report.drifts:
        _say("jensen gap = %.6g (tilt by coordinate %d)" % (report.drifts["jensen_gap"], i + 1))
    for r in report.curve:
        _say("p = %-8g conditional = %.4g" % (r["quantile"], r["conditional"]))
    return EXIT_OK


def _marginal_sampler(q_law, i):
    def draw(rng, n):
        return q_law.marginal_sample(i, rng, n)

    return draw


def _const_sampler(v):
    def draw(rng, n):
        return np.full(n, v)

    return draw


COMMANDS = {"alpha": cmd_alpha, "simulate": cmd_simulate, "figures": cmd_figures, "diagnose": cmd_diagnose}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (StationarityViolated, CaseOrderingViolated, NoRootInRange, NonIntegrable,
            TiltNotNormalized, DimensionError, ValueError) as exc:
        print("invalid model: %s" % exc, file=sys.stderr)
        return EXIT_MODEL
    except InsufficientExceedances as exc:
        print("insufficient data: %s" % exc, file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
