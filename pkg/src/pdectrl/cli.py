"""Command line interface.

    pdectrl train     one configuration, several seeded runs
    pdectrl sweep     the learning-rate grid around it
    pdectrl gradcheck the finite-difference gradient suite
    pdectrl plot      render curve CSVs from a directory into one figure

Every command exits 0 on success and nonzero with a one-line diagnostic on
stderr otherwise. CSV output is byte-identical across repeated invocations
with the same seed.
"""

import argparse
import glob
import os
import sys

from . import gradcheck as gc
from . import harness
from .config import load_config
from .errors import PdectrlError


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--domain", choices=["pde-model", "heat-invader"], default="pde-model")
    p.add_argument("--variant", choices=["ddpg", "separate", "descriptor"], default="descriptor")
    p.add_argument("--k", type=int, default=0, help="action scalars (default: domain default)")
    p.add_argument("--d", type=int, default=0, help="PDE Model grid side (default: config)")
    p.add_argument("--airflow", choices=["uniform", "whirl"], default=None)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="INI config file (see configs/reference.cfg)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--workers", type=int, default=1)


def _spec_from_args(args, actor_lrs, multipliers) -> harness.ExperimentSpec:
    cfg = load_config(args.config)
    domain = args.domain.replace("-", "_")
    variant = {"ddpg": "vector"}.get(args.variant, args.variant)
    d = args.d or cfg.pde_model.d
    if args.k:
        k = args.k
    else:
        k = d * d if domain == "pde_model" else 25
    airflow = args.airflow or cfg.heat_invader.airflow
    return harness.ExperimentSpec(
        domain=domain, variant=variant, k=k, d=d, airflow=airflow,
        episodes=args.episodes, runs=args.runs,
        actor_lrs=tuple(actor_lrs), multipliers=tuple(multipliers),
        seed=args.seed, out_dir=args.out, workers=args.workers, config=cfg,
    )


def cmd_train(args) -> int:
    spec = _spec_from_args(args, [args.actor_lr], [args.critic_mult])
    curve = harness.train_experiment(spec)
    ev = harness.evaluate_window(curve, spec.domain,
                                 *harness.scaled_window(spec.domain, spec.episodes))
    print(f"trained {spec.variant} on {spec.domain} k={spec.k}: "
          f"evaluate={ev:.4f} over {spec.runs} run(s); outputs in {spec.out_dir}")
    return 0


def cmd_sweep(args) -> int:
    actor_lrs = [float(x) for x in args.actor_lrs.split(",")]
    mults = [float(x) for x in args.multipliers.split(",")]
    spec = _spec_from_args(args, actor_lrs, mults)
    result = harness.sweep(spec)
    print("actor_lr  multiplier  evaluate")
    for cell in result.cells:
        mark = " *" if cell == result.best else ""
        print(f"{cell[0]:<9g} {cell[1]:<11g} {result.evaluates[cell]:.4f}{mark}")
    print(f"best cell: actor_lr={result.best[0]:g} multiplier={result.best[1]:g}; "
          f"outputs in {spec.out_dir}")
    return 0


def cmd_gradcheck(args) -> int:
    results = gc.full_suite(n_configs=args.configs, seed=args.seed)
    worst = 0.0
    failed = 0
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{status:4s} {r.name}  max_rel_err={r.max_rel_err:.3e}")
        worst = max(worst, r.max_rel_err)
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed; worst {worst:.3e}")
    return 0 if failed == 0 else 1


def cmd_plot(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.in_dir, "**", "curve*.csv"), recursive=True))
    curves = []
    for p in paths:
        curves.extend(harness.read_curves(p))
    if not curves:
        print(f"error: no curve CSVs under {args.in_dir}", file=sys.stderr)
        return 1
    harness.render_curves(curves, args.out)
    print(f"rendered {len(curves)} curve(s) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdectrl",
                                     description="PDE control with descriptor DDPG")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one configuration")
    _add_common(p)
    p.add_argument("--actor-lr", type=float, default=1e-4)
    p.add_argument("--critic-mult", type=float, default=10.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="learning-rate grid sweep")
    _add_common(p)
    p.add_argument("--actor-lrs", default="0.000001,0.000005,0.00001,0.0001")
    p.add_argument("--multipliers", default="1,5,10,20,40")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--configs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("plot", help="render curve CSVs into one figure")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PdectrlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
