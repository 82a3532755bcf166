"""Command-line harness: run experiments, compare policies, fit rates."""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    ExperimentConfig,
    SUCCESS_STATUSES,
    compare,
    fit_rate,
    read_trace_csv,
    render_comparison,
    run_experiment,
)


def parse_problem(spec: str) -> dict:
    """Parse ``name:key=val,key=val`` into a problem stanza."""
    name, _, rest = spec.partition(":")
    out = {"name": name}
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            if not key or not val:
                raise ValueError(f"bad problem parameter {item!r}")
            out[key] = val
    return out


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.problem:
        cfg.problem = parse_problem(args.problem)
    for name in ("method", "p", "H", "policy", "subsolver", "stop",
                 "max_iters", "target_gap", "seed", "out", "composite",
                 "x0", "zeta_policy", "inner_policy"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    if args.measure_time:
        cfg.measure_time = True
    return cfg


def _add_run_flags(sp):
    sp.add_argument("--config", help="JSON config file; flags override its fields")
    sp.add_argument("--problem", help="problem spec, e.g. logsumexp:n=100,m=600,mu=1")
    sp.add_argument("--method", choices=["monotone1", "monotone2", "averaging", "accelerated"])
    sp.add_argument("--p", type=int, choices=[1, 2])
    sp.add_argument("--H", help="fixed:<v> | lipschitz | linesearch:<v>")
    sp.add_argument("--policy", help="constant:C | power:C:ALPHA | adaptive:C:ALPHA[:D1]")
    sp.add_argument("--zeta-policy", dest="zeta_policy", help="outer tolerance schedule (accelerated)")
    sp.add_argument("--inner-policy", dest="inner_policy", help="inner tolerance schedule (accelerated)")
    sp.add_argument("--composite", help="power:MU:Q | quadratic:MU | none")
    sp.add_argument("--x0", choices=["ones", "zeros", "e1", "gauss"])
    sp.add_argument("--subsolver", choices=["exact", "fgm"])
    sp.add_argument("--stop", choices=["bound", "exact"])
    sp.add_argument("--max-iters", dest="max_iters", type=int)
    sp.add_argument("--target-gap", dest="target_gap", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--measure-time", dest="measure_time", action="store_true",
                    help="record per-row wall time (makes traces nondeterministic)")
    sp.add_argument("--out", help="output directory for config/trace/summary")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tensoropt",
                                     description="Inexact tensor-method experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    sp_run = sub.add_parser("run", help="execute one experiment")
    _add_run_flags(sp_run)

    sp_cmp = sub.add_parser("compare", help="run several configs on one instance")
    sp_cmp.add_argument("--configs", nargs="+", required=True, help="JSON config files")
    sp_cmp.add_argument("--out", help="output root; one subdirectory per run")

    sp_fit = sub.add_parser("fit", help="fit a rate slope to a trace")
    sp_fit.add_argument("--trace", required=True)
    sp_fit.add_argument("--fstar", required=True,
                        help="numeric optimum value, or 'auto' (best trace value)")
    sp_fit.add_argument("--window", help="k range lo:hi")
    sp_fit.add_argument("--exponent", type=float, default=1.5,
                        help="tail-ratio exponent (default (p+1)/2 for p=2)")

    args = parser.parse_args(argv)

    if args.command == "run":
        if args.config:
            cfg = ExperimentConfig.load(args.config)
        else:
            if not args.problem:
                parser.error("run needs --config or --problem")
            cfg = ExperimentConfig(problem=parse_problem(args.problem))
            args.problem = None
        cfg = _apply_overrides(cfg, args)
        run, summary = run_experiment(cfg)
        print(json.dumps(summary, indent=2, sort_keys=True))
        return 0 if run.status in SUCCESS_STATUSES else 2

    if args.command == "compare":
        configs = [ExperimentConfig.load(p) for p in args.configs]
        report = compare(configs, out_root=args.out)
        print(render_comparison(report))
        return 0

    if args.command == "fit":
        cols = read_trace_csv(args.trace)
        ks = [v for v in cols["k"]]
        Fs = [v for v in cols["F"]]
        if args.fstar == "auto":
            fstar = min(Fs)
            source = "trace-minimum"
        else:
            fstar = float(args.fstar)
            source = "given"
        window = None
        if args.window:
            lo, hi = args.window.split(":")
            window = (float(lo), float(hi))
        fit = fit_rate(ks, Fs, fstar, window=window, exponent=args.exponent,
                       fstar_source=source)
        print(json.dumps(fit.to_dict(), indent=2, sort_keys=True))
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
