"""Command-line interface: ``grushin {classify,simulate,estimate,paper-suite}``.

Exit codes: 0 success, 2 configuration error, 3 acceptance failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from .acceptance import CRITERIA, Settings, run_all
from .diffusion import simulate_batch
from .estimators import (Timer, absorption_cdf, append_record, averaging_pair_check, estimate_absorption_cdf,
                         estimate_hitting, estimate_occupation_fraction, estimate_semigroup, estimate_theta_qv,
                         excursion_sign_stats, occupation_oracle, result_record)
from .bessel import besq0_absorption_prob, zero_hitting_cdf
from .exceptions import ConfigurationError, GrushinError
from .extensions import Cone, CylinderSymmetric, spec_to_dict
from .geometry import AlphaGeometry, classify_boundary

EXIT_OK, EXIT_CONFIG, EXIT_ACCEPTANCE = 0, 2, 3
_NEVER = 1e12


def cmd_classify(args) -> int:
    try:
        geom = AlphaGeometry(args.alpha)
    except GrushinError as exc:
        raise ConfigurationError(str(exc), "alpha") from None
    classify_boundary(args.alpha)
    print(geom.summary())
    return EXIT_OK


def _load(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer", "--seed")
        cfg = replace(cfg, sim=replace(cfg.sim, seed=args.seed))
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out_dir = Path(args.out or cfg.output.csv_dir or "trajectories")
    out_dir.mkdir(parents=True, exist_ok=True)
    start = cfg.experiment.start or (0.0, 0.0)
    batch = simulate_batch(cfg.geometry, cfg.extension, cfg.sim.sim_config(), start, cfg.sim.n_paths,
                           cfg.sim.seed, record=2, threads=args.threads)
    width = max(5, len(str(cfg.sim.n_paths - 1)))
    for i, tr in enumerate(batch.trajectories):
        tr.to_csv(out_dir / f"path_{i:0{width}d}.csv")
    print(f"wrote {cfg.sim.n_paths} trajectories to {out_dir}")
    return EXIT_OK


def _params(cfg: cfgmod.ExperimentConfig, **extra) -> dict:
    d = {"alpha": cfg.alpha, "extension": spec_to_dict(cfg.extension),
         "sim": {k: v for k, v in cfgmod.to_dict(cfg)["sim"].items() if k != "seed"}}
    d.update(extra)
    return d


def run_experiment(cfg: cfgmod.ExperimentConfig, threads: int | None = None) -> list[dict]:
    """Run the configured estimator and return its JSON records."""
    geom, spec, exp, sim = cfg.geometry, cfg.extension, cfg.experiment, cfg.sim
    n, seed = sim.n_paths, sim.seed
    records = []
    with Timer() as tm:
        if exp.name == "hitting":
            r = estimate_hitting(geom, spec, exp.y, n, seed, sim.sim_config(horizon=_NEVER, track_theta=False),
                                 threads)
            target = getattr(spec, "a", 0.5) if isinstance(spec, (Cone, CylinderSymmetric)) else None
            out = [("hitting", r, _params(cfg, y=exp.y, oracle=target), None if target is None else r.z_score(target))]
        elif exp.name == "occupation":
            r = estimate_occupation_fraction(geom, spec, sim.sim_config(), n, seed, exp.start or (0.0, 0.0),
                                             threads)
            target = None
            if isinstance(spec, Cone) and sim.wall is not None and -1.0 < geom.alpha < 0.0:
                target = occupation_oracle(geom.alpha, spec.a, spec.gamma, sim.wall) if 0 < spec.a < 1 else None
            out = [("occupation", r, _params(cfg, oracle=target), None)]
        elif exp.name == "semigroup":
            r = estimate_semigroup(geom, spec, exp.f, exp.start, exp.t, n, seed, sim.sim_config(horizon=exp.t),
                                   threads)
            out = [("semigroup", r, _params(cfg, f=exp.f.to_dict(), start=list(exp.start), t=exp.t), None)]
        elif exp.name == "averaging_pair":
            pc = averaging_pair_check(geom, spec, exp.f, exp.g, exp.start, exp.t, n, seed,
                                      sim.sim_config(horizon=exp.t), threads)
            p = _params(cfg, f=exp.f.to_dict(), g=exp.g.to_dict(), start=list(exp.start), t=exp.t,
                        g_mean=pc.g.mean, g_stderr=pc.g.stderr)
            out = [("averaging_pair", pc.f, p, pc.z_score)]
        elif exp.name == "sign_stats":
            b = simulate_batch(geom, spec, sim.sim_config(), exp.start or (0.0, 0.0), n, seed, threads=threads)
            st = excursion_sign_stats(b)
            r = st.positive_fraction()
            out = [("sign_stats", r, _params(cfg, n_pos=st.n_pos, n_neg=st.n_neg,
                                             n_sign_changes=st.n_sign_changes), None)]
        elif exp.name == "theta_qv":
            wall = sim.wall if sim.wall is not None else 2.0 * abs(exp.start[0])
            r = estimate_theta_qv(geom, exp.start, n, seed, sim.sim_config(horizon=_NEVER, wall=wall), threads)
            out = [("theta_qv", r, _params(cfg, start=list(exp.start), wall=wall, **r.extra), None)]
        elif exp.name == "absorption_cdf":
            sc = sim.sim_config(horizon=max(exp.times), track_theta=False)
            if geom.alpha == 1.0:
                res = estimate_absorption_cdf(geom, exp.z0, exp.times, n, seed, sc, threads)
                oracle = [besq0_absorption_prob(exp.z0, t) for t in exp.times]
            else:
                if geom.alpha <= -1.0:
                    raise ConfigurationError("the singular set is never reached for alpha <= -1", "alpha")
                res = absorption_cdf(geom, math.sqrt(exp.z0), exp.times, n, seed, sc, threads)
                oracle = [float(zero_hitting_cdf(exp.z0, t, geom.bessel_dim)) if geom.alpha < 1.0 else None
                          for t in exp.times]
            out = [("absorption_cdf", r, _params(cfg, z0=exp.z0, t=t, oracle=o), None if o is None else r.z_score(o))
                   for t, r, o in zip(exp.times, res, oracle)]
        else:  # pragma: no cover - guarded by the config parser
            raise ConfigurationError(f"unknown experiment {exp.name!r}", "experiment.name")
    for name, r, params, z in out:
        if z is None and params.get("oracle") is not None:
            z = r.z_score(params["oracle"])
        records.append(result_record(name, params, r, seed, tm.elapsed, z))
    return records


def cmd_estimate(args) -> int:
    cfg = _load(args)
    if cfg.experiment is None:
        raise ConfigurationError("missing [experiment] table", "experiment")
    records = run_experiment(cfg, args.threads)
    target = args.out or cfg.output.json
    for rec in records:
        print(json.dumps(rec))
        if target:
            append_record(target, rec)
    return EXIT_OK


def cmd_paper_suite(args) -> int:
    keys = list(CRITERIA)
    if args.only:
        unknown = [k for k in args.only if k not in CRITERIA]
        if unknown:
            raise ConfigurationError(f"unknown criteria {unknown}; use --list", "--only")
        keys = args.only
    if args.list:
        for k in keys:
            print(k)
        return EXIT_OK
    settings = Settings(seed=args.seed if args.seed is not None else Settings.seed, threads=args.threads,
                        hold_normalization=args.dev_hold_normalization)

    def report(res):
        print(res.line(), flush=True)
        if args.verbose:
            for note in res.checks:
                print("      " + note)

    results = run_all(settings, keys, report)
    failed = [r.key for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_ACCEPTANCE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="grushin", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", help="boundary class, Bessel dimension and topology for alpha")
    c.add_argument("--alpha", type=float, required=True)
    c.set_defaults(func=cmd_classify)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="override sim.seed")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $GRUSHIN_THREADS, else all cores)")

    s = sub.add_parser("simulate", help="write trajectory CSV files for a config")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (default: output.csv_dir)")
    common(s)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="run the configured experiment and emit JSON records")
    e.add_argument("config")
    e.add_argument("--out", help="append records to this file (default: output.json)")
    common(e)
    e.set_defaults(func=cmd_estimate)

    a = sub.add_parser("paper-suite", help="run the acceptance battery")
    a.add_argument("--list", action="store_true", help="print criterion names and exit")
    a.add_argument("--only", nargs="+", metavar="KEY", help="run a subset of criteria")
    a.add_argument("-v", "--verbose", action="store_true", help="print every individual check")
    a.add_argument("--dev-hold-normalization", type=float, default=None, metavar="KAPPA",
                   help="developer flag: replace the hold normalization constant (mutation testing)")
    common(a)
    a.set_defaults(func=cmd_paper_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GrushinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
