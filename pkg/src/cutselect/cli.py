"""Command-line entry point: ``cutselect <command> [options]``."""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import yaml

from . import bench
from .branchcut import SolveLimits, dumps_trace, solve
from .milp import KINDS, generate, load_dataset, read_instance, write_dataset
from .neural import checkpoint
from .policy import make_selector
from .train import TrainConfig, train

SELECTORS = ("nocuts", "random", "nv", "eff", "learned", "learned_order_sensitive")


def parse_seeds(text: str) -> list[int]:
    """``"1..10"`` (inclusive) or ``"0,3,7"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"no seeds in {text!r}")
    return out


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    g.add_argument("--limits-pivots", type=int, default=None, help="pivot budget per solve")
    g.add_argument("--horizon", type=int, default=None, help="PD-integral horizon in pivots")
    g.add_argument("--out", default=None, help="output file or directory (stdout if omitted)")
    g.add_argument("--config", default=None, help="YAML file with TrainConfig / SolveLimits keys")
    g.add_argument("--jobs", type=int, default=1, help="worker processes for eval/stability")


def _selector_args(p: argparse.ArgumentParser, multi: bool = False) -> None:
    if multi:
        p.add_argument("--selector", action="append", choices=SELECTORS, required=True)
    else:
        p.add_argument("--selector", choices=SELECTORS, required=True)
    p.add_argument("--checkpoint", help="parameter file for learned selectors")
    p.add_argument("--ratio", type=float, default=0.2, help="fixed ratio of heuristic selectors")
    p.add_argument("--pos-scale", type=float, default=1.0,
                   help="positional-encoding scale of learned_order_sensitive")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cutselect", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen", help="write a dataset of synthetic instances")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    _common(p)

    p = sub.add_parser("solve", help="solve one instance and print a trace summary")
    p.add_argument("--instance", required=True)
    p.add_argument("--shuffle-seed", type=int, default=0)
    _selector_args(p)
    _common(p)

    p = sub.add_parser("train", help="train the policy; writes log and checkpoints to --out")
    p.add_argument("--dataset", nargs="+", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--checkpoint-every", type=int)
    _common(p)

    p = sub.add_parser("eval", help="metrics table as CSV")
    p.add_argument("--dataset", nargs="+", required=True)
    p.add_argument("--seeds", type=parse_seeds, default=[0])
    _selector_args(p, multi=True)
    _common(p)

    p = sub.add_parser("stability", help="stability under pool shuffles as CSV")
    p.add_argument("--dataset", nargs="+", required=True)
    p.add_argument("--seeds", type=parse_seeds, default=parse_seeds("1..10"))
    _selector_args(p)
    _common(p)

    p = sub.add_parser("shuffle", help="per-seed work and PD integral of one instance as CSV")
    p.add_argument("--instance", required=True)
    p.add_argument("--seeds", type=parse_seeds, default=parse_seeds("1..10"))
    _selector_args(p)
    _common(p)

    p = sub.add_parser("selfcheck", help="run the oracle suites")
    p.add_argument("--full", action="store_true", help="full-size suites instead of quick ones")
    _common(p)
    return ap


def load_config(args) -> TrainConfig:
    """Config-file values, overridden by explicit command-line flags."""
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ValueError("config file must hold a mapping")
    flags = {"seed": args.seed, "max_pivots": args.limits_pivots, "horizon": args.horizon}
    for key in ("epochs", "batch_size", "lr", "checkpoint_every"):
        flags[key] = getattr(args, key, None)
    data.update({k: v for k, v in flags.items() if v is not None})
    return TrainConfig.from_dict(data)


def _selector(args, name: str):
    params = cfg = None
    if args.checkpoint:
        params, cfg, _ = checkpoint.load(args.checkpoint)
    return make_selector(name, params, cfg, ratio=args.ratio, pos_scale=args.pos_scale)


def _dataset_id(paths) -> str:
    return "+".join(Path(p).name or str(p) for p in paths)


def _emit(text: str, out) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def run(args) -> int:
    cfg = load_config(args)
    limits = cfg.limits
    horizon = cfg.horizon
    if args.command == "gen":
        if not args.out:
            raise ValueError("gen needs --out DIR")
        insts = [generate(args.kind, cfg.seed + k, args.n, args.m) for k in range(args.count)]
        for p in write_dataset(insts, args.out):
            print(p)
    elif args.command == "solve":
        inst = read_instance(args.instance)
        tr = solve(inst, _selector(args, args.selector), limits, cfg.seed,
                   shuffle_seed=args.shuffle_seed, horizon=horizon)
        print(f"instance {tr.instance}\nselector {tr.selector}\nstatus {tr.final_status}\n"
              f"work {tr.total_work}\nnodes {tr.nodes}\npool {len(tr.pool)}\n"
              f"selected {len(tr.selected_cuts)}\nprimal {tr.primal}\ndual {tr.dual:.17g}\n"
              f"pd_integral {tr.pd_integral:.17g}")
        if args.out:
            _emit(dumps_trace(tr), args.out)
    elif args.command == "train":
        if not args.out:
            raise ValueError("train needs --out DIR")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        insts = load_dataset(args.dataset)
        with open(out / "train.log", "w") as fh:
            res = train(insts, cfg, log_file=fh, checkpoint_dir=out)
        checkpoint.save(out / "final.npz", res.params, cfg.net,
                        extra={"train_config": dataclasses.asdict(cfg)})
        print(f"wrote {out / 'final.npz'} ({res.dropped} dropped episodes)")
    elif args.command == "eval":
        insts = load_dataset(args.dataset)
        rows = [bench.evaluate(insts, _selector(args, name), limits, args.seeds, horizon=horizon,
                               dataset_id=_dataset_id(args.dataset), jobs=args.jobs)
                for name in args.selector]
        _emit(bench.eval_csv(rows), args.out)
    elif args.command == "stability":
        insts = load_dataset(args.dataset)
        rep = bench.stability(insts, _selector(args, args.selector), args.seeds, limits,
                              rng_seed=cfg.seed, horizon=horizon,
                              dataset_id=_dataset_id(args.dataset), jobs=args.jobs)
        _emit(bench.stability_csv([rep]), args.out)
    elif args.command == "shuffle":
        inst = read_instance(args.instance)
        rows = bench.shuffle_experiment(inst, _selector(args, args.selector), args.seeds, limits,
                                        rng_seed=cfg.seed, horizon=horizon)
        _emit(bench.shuffle_csv(rows), args.out)
    elif args.command == "selfcheck":
        from .oracles import selfcheck
        results = selfcheck(quick=not args.full)
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        return 0 if all(ok for _, ok, _ in results) else 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cutselect {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
