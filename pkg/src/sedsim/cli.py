"""Command-line entry point: ``sedsim run|sample|field-check|analyze|resume``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import conjecture as cj
from .config import ConfigError, load_config
from .ensemble import pooled_histograms, summarize
from .field import correlation_survey
from .integrator import Trajectory
from .io import read_record, write_histogram, write_json, write_record
from .record import detect_ionisation

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ALL_IONISED, EXIT_ABORT = 0, 1, 2, 3, 4


def _cmd_run(args) -> int:
    from .ensemble import run_ensemble

    cfg = load_config(args.config)
    if args.workers:
        cfg = cfg.replace(workers=args.workers)
    result = run_ensemble(cfg, args.output)
    for s in result.summaries:
        print(f"trajectory {s.index}: {s.status}, t={s.t_total:.6g}, orbits={s.n_orbit_actual}"
              + (f", ionised at {s.ionisation_time:.6g}" if s.ionisation_time is not None else ""))
    return result.exit_code


def _cmd_sample(args) -> int:
    rng = np.random.Generator(np.random.Philox(args.seed))
    shapes = cj.sample_shapes(args.n, rng)
    checks = {
        "R": (shapes["R"], cj.pdf_R, cj.cdf_R),
        "kappa": (shapes["kappa"], cj.pdf_kappa, cj.cdf_kappa),
        "eps": (shapes["eps"], cj.pdf_eps, cj.cdf_eps),
        "E": (shapes["E"], cj.pdf_E, cj.cdf_E),
    }
    out = Path(args.output) if args.output else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    ok = True
    for key, (x, pdf, cdf) in checks.items():
        rep = cj.histogram_compare(x, pdf, args.bins, cdf=cdf)
        ok &= rep.passes
        print(f"{key:6s} KS={rep.ks_statistic:.5f} critical(1%)={rep.ks_critical_1pct:.5f} "
              f"{'pass' if rep.passes else 'FAIL'}")
        if out:
            write_histogram(rep, out / f"sample_{key}.csv")
    mean_R = float(np.mean(shapes["R"]))
    ok &= abs(mean_R / cj.MEAN_R - 1.0) < 0.01
    print(f"mean R = {mean_R:.5f} (target {cj.MEAN_R})")
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_field_check(args) -> int:
    res = correlation_survey(args.N, args.seeds, args.max_mode, args.cutoff_scale, args.lags,
                             args.origins, args.seed)
    ok = True
    for kind in ("E", "A"):
        r = res[kind]
        for lag, emp, th, err in zip(res["lags"], r["empirical"], r["theory"], r["relative_error"]):
            good = err < args.tolerance
            ok &= good
            print(f"C_{kind}{kind}(t={lag:g}): empirical {emp:.6e} theory {th:.6e} "
                  f"rel.err {err:.4f} {'pass' if good else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_analyze(args) -> int:
    records = [read_record(p) for p in args.records]
    for path, rec in zip(args.records, records):
        t_ion = detect_ionisation(rec, threshold=args.threshold, dwell=args.dwell)
        print(f"{path}: status={rec.status} samples={len(rec)} orbits={rec.orbits} "
              f"ionisation={'none' if t_ion is None else format(t_ion, '.6g')}")
    hists = pooled_histograms(records, args.bins)
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        for key, rep in hists.items():
            write_histogram(rep, out / f"hist_{key}.csv")
    for key, rep in hists.items():
        print(f"{key:4s} n={rep.n} KS={rep.ks_statistic:.4f}")
    return EXIT_OK


def _cmd_resume(args) -> int:
    traj = Trajectory.from_checkpoint(args.checkpoint)
    rec = traj.run(args.t_max, args.max_orbits, checkpoint_path=args.checkpoint,
                   checkpoint_every=args.checkpoint_every)
    write_record(rec, args.output, args.format)
    s = summarize(rec, traj.constants)
    print(f"{s.status}: t={s.t_total:.6g}, orbits={s.n_orbit_actual}")
    if rec.status in ("singular", "nonfinite"):
        return EXIT_ABORT
    return EXIT_ALL_IONISED if rec.status == "ionised" else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sedsim", description="Stochastic-field hydrogen orbit simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an ensemble from a TOML config")
    run.add_argument("config")
    run.add_argument("--output", help="output directory (default from config)")
    run.add_argument("--workers", type=int, default=0)
    run.set_defaults(func=_cmd_run)

    smp = sub.add_parser("sample", help="sampler self-test against the conjectured laws")
    smp.add_argument("--n", type=int, default=100_000)
    smp.add_argument("--seed", type=int, default=0)
    smp.add_argument("--bins", type=int, default=60)
    smp.add_argument("--output")
    smp.set_defaults(func=_cmd_sample)

    fc = sub.add_parser("field-check", help="field correlation check against the closed forms")
    fc.add_argument("--N", type=int, default=1000)
    fc.add_argument("--seeds", type=int, default=200)
    fc.add_argument("--max-mode", type=int, default=50_000)
    fc.add_argument("--cutoff-scale", type=float, default=8.0)
    fc.add_argument("--lags", type=float, nargs="+", default=[0.0, 0.5, 1.0, 5.0])
    fc.add_argument("--origins", type=int, default=100)
    fc.add_argument("--seed", type=int, default=0)
    fc.add_argument("--tolerance", type=float, default=0.05)
    fc.set_defaults(func=_cmd_field_check)

    an = sub.add_parser("analyze", help="re-histogram stored trajectory records")
    an.add_argument("records", nargs="+")
    an.add_argument("--output")
    an.add_argument("--bins", type=int, default=60)
    an.add_argument("--threshold", type=float, default=-0.05)
    an.add_argument("--dwell", type=float, default=1e7)
    an.set_defaults(func=_cmd_analyze)

    rs = sub.add_parser("resume", help="continue a trajectory from a checkpoint")
    rs.add_argument("checkpoint")
    rs.add_argument("--t-max", type=float, required=True)
    rs.add_argument("--max-orbits", type=int)
    rs.add_argument("--checkpoint-every", type=int, default=0)
    rs.add_argument("--output", required=True)
    rs.add_argument("--format", choices=("csv", "binary"), default="csv")
    rs.set_defaults(func=_cmd_resume)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
