"""Command-line front end: seeded, reproducible experiment runs writing
CSV curves and a deterministic report.json; exit code 0 iff every embedded
check passed."""

import argparse
import json
import sys
import time

from . import alignment, experiments, pivot, schottky, semigroup


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _resolve_spec(cfg, args):
    if args.fixture:
        return experiments.fixture(args.fixture)
    dist = cfg.get("distribution")
    if dist is None:
        if "fixture" in cfg:
            return experiments.fixture(cfg["fixture"])
        return experiments.fixture("FIX-SL2")
    return experiments.DistributionSpec(dist["kind"], dist["d"],
                                        dist.get("params", {}))


def _common(sub):
    sub.add_argument("--config", default=None)
    sub.add_argument("--fixture", default=None)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--trajectories", type=int, default=100)
    sub.add_argument("--steps", type=int, default=500)
    sub.add_argument("--out", default="out")
    sub.add_argument("--format", choices=("csv", "json"), default="csv")
    sub.add_argument("--threads", type=int, default=1)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="matpivot")
    sp = ap.add_subparsers(dest="cmd", required=True)
    for name in ("lambda12", "contraction", "coefficients", "spectral",
                 "rank", "mixing", "pivot-diagnostics", "schottky-build",
                 "lemma-suite"):
        _common(sp.add_parser(name))

    args = ap.parse_args(argv)
    cfg = _load_config(args.config)
    t0 = time.monotonic()
    ok = _dispatch(args, cfg)
    print(f"[matpivot] {args.cmd}: {'PASS' if ok else 'FAIL'} "
          f"({time.monotonic() - t0:.1f}s)", file=sys.stderr)
    return 0 if ok else 1


def _dispatch(args, cfg):
    spec = _resolve_spec(cfg, args)
    seed = args.seed
    T, N = args.trajectories, args.steps
    kw = dict(seed=seed, threads=args.threads)

    if args.cmd == "lambda12":
        rep = experiments.run_lambda12(spec, T, N, **kw)
    elif args.cmd == "contraction":
        x = cfg.get("x", [1.0] + [0.0] * (spec.d - 1))
        y = cfg.get("y", [0.0, 1.0] + [0.0] * (spec.d - 2))
        rep = experiments.run_contraction(spec, x, y, T, N, **kw)
    elif args.cmd == "coefficients":
        f = cfg.get("f", [1.0] + [0.0] * (spec.d - 1))
        v = cfg.get("v", [1.0] + [0.0] * (spec.d - 1))
        rep = experiments.run_coefficients(spec, f, v, T, N, **kw)
    elif args.cmd == "spectral":
        rep = experiments.run_spectral(spec, T, N, **kw)
    elif args.cmd == "rank":
        rep = experiments.run_rank_kernel(spec, T, N, **kw)
    elif args.cmd == "mixing":
        pts = cfg.get("initial_points",
                      [[1.0] + [0.0] * (spec.d - 1),
                       [0.0, 1.0] + [0.0] * (spec.d - 2)])
        rep = experiments.run_mixing(spec, pts, T, N, **kw)
    elif args.cmd == "lemma-suite":
        n = cfg.get("instances", max(T, 1000))
        results = alignment.run_all_suites(n, seed)
        alignment.export_suite_json(results, f"{args.out}.json" if not
                                    args.out.endswith(".json") else args.out)
        for r in results.values():
            print(f"{r.lemma:22s} instances={r.n_instances} "
                  f"violations={r.n_violations}")
        return all(r.passed for r in results.values())
    elif args.cmd == "schottky-build":
        try:
            model = schottky.build_schottky(
                spec.sample, spec.d, rho=cfg.get("rho", 1.0 / 6.0),
                seed=seed, samples=cfg.get("samples", 2**13),
                horizon=cfg.get("horizon", 40))
        except schottky.ConstructionError as e:
            print(f"construction failed: {e}")
            return False
        path = args.out if args.out.endswith(".json") \
            else f"{args.out}/schottky_model.json"
        import os
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        model.to_json(path)
        print(f"m={model.m} eps={model.eps} alpha={model.alpha:.5f} "
              f"worst={model.verify_report.get('worst_mass'):.4f}")
        return True
    elif args.cmd == "pivot-diagnostics":
        fixture_kind = cfg.get("pivot_model", "free_group")
        if fixture_kind == "free_group":
            inp = semigroup.free_group_input(
                alpha=cfg.get("alpha", 0.5),
                kappa=cfg.get("kappa", "uniform"), seed=seed)
        else:
            model = schottky.build_schottky(spec.sample, spec.d, seed=seed,
                                            samples=2**12,
                                            horizon=cfg.get("horizon", 20))
            inp = model.to_input()
        run = pivot.run_pipeline(inp, seed=seed,
                                 n_pairs=cfg.get("n_pairs", 3 * T * N // 100
                                                 or 3000))
        rep = pivot.diagnostics(run)
        run.m_trace_csv(f"{args.out}_mtrace.csv" if not args.out.endswith(
            ".csv") else args.out)
        run.to_event_json(f"{args.out}_events.json")
        for k, v in rep.items():
            if not isinstance(v, dict):
                print(f"{k}: {v}")
        keys = [k for k in rep if k.endswith("_ok") and rep[k] is not None]
        return all(rep[k] for k in keys)
    else:
        raise AssertionError(args.cmd)

    rep.write(args.out, fmt=args.format)
    for k, v in sorted(rep.checks.items()):
        print(f"check {k}: {'pass' if v else 'FAIL'}")
    return rep.passed


if __name__ == "__main__":
    sys.exit(main())
