"""Command-line driver: ``gntk {gram,cv,oracle,bound,mc} ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import cache
from .data import Graph, featurize, parse_dataset
from .experiment import ExperimentConfig, parse_grid, report, run_experiment
from .kernel import ArchConfig, arccos_expectations, normalize_gram
from .oracle import convergence_csv, convergence_table, mc_relu_expectations
from .theory import bound_report

log = logging.getLogger("gntk")


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _words(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_arch_flags(p: argparse.ArgumentParser, grid: bool) -> None:
    kind = "comma-separated list" if grid else "value"
    p.add_argument("--blocks", default="2", help=f"number of BLOCK operations L ({kind})")
    p.add_argument("--mlp-layers", default="1", help=f"ReLU layers per block R ({kind})")
    p.add_argument("--scale", default="sum", help=f"aggregation scaling sum|avg|norm ({kind})")
    p.add_argument("--jk", action="store_true", help="jumping-knowledge readout")
    p.add_argument("--c-sigma", type=float, default=2.0, help="ReLU normalisation constant")


def _add_data_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--dataset", required=required, help="dataset in the graph text format")
    p.add_argument("--feature-mode", choices=("tags", "degrees"), default="tags")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the result here instead of stdout")
    p.add_argument("--workers", type=int, default=1, help="processes for Gram computation")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gntk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gram", help="compute (and cache) a Gram matrix")
    _add_data_flags(p)
    _add_arch_flags(p, grid=False)
    _add_common(p)
    p.add_argument("--normalize-gram", action="store_true")
    p.add_argument("--cache-dir", help="cache directory keyed by dataset hash and architecture")
    p.add_argument("--format", choices=("json", "table"), default="table",
                   help="format of the summary printed to stdout")

    p = sub.add_parser("cv", help="cross-validated classification over an architecture grid")
    _add_data_flags(p)
    _add_arch_flags(p, grid=True)
    _add_common(p)
    p.add_argument("--classifier", choices=("svm", "regression", "both"), default="svm")
    p.add_argument("--c-grid", default="120:1e-2:1e4", help="COUNT:LO:HI or comma list")
    p.add_argument("--ridge-grid", default=None,
                   help="COUNT:LO:HI or comma list, in units of the mean training diagonal")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--selection", choices=("per-fold", "global"), default="per-fold")
    p.add_argument("--normalize-gram", action="store_true")
    p.add_argument("--cache-dir")
    p.add_argument("--format", choices=("json", "csv", "table"), default="table")

    p = sub.add_parser("oracle", help="finite-width empirical NTK vs analytic kernel")
    _add_data_flags(p, required=False)
    _add_arch_flags(p, grid=False)
    _add_common(p)
    p.add_argument("--widths", default="64,256,1024", help="comma-separated ascending widths")
    p.add_argument("--draws", type=int, default=16)
    p.add_argument("--pairs", type=int, default=1, help="random graph pairs to evaluate")
    p.add_argument("--max-nodes", type=int, default=6)
    p.add_argument("--feature-dim", type=int, default=3,
                   help="feature dimension of random graphs (ignored with --dataset)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("bound", help="generalisation-bound quantities under the theory kernel")
    _add_data_flags(p)
    _add_common(p)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--format", choices=("json", "table"), default="table")

    p = sub.add_parser("mc", help="Monte Carlo check of the ReLU Gaussian expectations")
    _add_common(p)
    p.add_argument("--cov", action="append",
                   help="VAR1,COV,VAR2 (repeatable); random covariances when omitted")
    p.add_argument("--count", type=int, default=10, help="random covariances to draw")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--format", choices=("json", "table"), default="table")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _load(args):
    return featurize(parse_dataset(args.dataset), args.feature_mode)


def _single_arch(args) -> ArchConfig:
    return ArchConfig(int(args.blocks), int(args.mlp_layers), args.scale, args.jk, args.c_sigma)


def cmd_gram(args) -> int:
    from .experiment import load_or_compute_gram

    ds = _load(args)
    arch = _single_arch(args)
    t0 = time.perf_counter()
    gm = load_or_compute_gram(ds, arch, args.cache_dir, args.workers)
    if args.normalize_gram:
        gm = normalize_gram(gm)
    elapsed = time.perf_counter() - t0
    if args.out:
        cache.save_gram(args.out, gm)
    eig = np.linalg.eigvalsh(gm.values)
    summary = {"dataset": ds.name, "arch": arch.label(), "n": len(ds), "seconds": elapsed,
               "trace": float(np.trace(gm.values)), "min_eig": float(eig[0]),
               "max_eig": float(eig[-1]), "normalized": gm.normalized,
               "written": args.out}
    if args.format == "json":
        sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    else:
        width = max(map(len, summary))
        for k, v in summary.items():
            sys.stdout.write(f"{k:<{width}}  {v}\n")
    return 0


def cmd_cv(args) -> int:
    jk = [True] if args.jk else [False]
    cfg = ExperimentConfig(
        dataset=args.dataset, feature_mode=args.feature_mode, blocks=_ints(args.blocks),
        mlp_layers=_ints(args.mlp_layers), scalings=_words(args.scale), jk=jk,
        c_sigma=args.c_sigma, classifier=args.classifier, c_values=parse_grid(args.c_grid),
        folds=args.folds, seed=args.seed, normalize_gram=args.normalize_gram,
        cache_dir=args.cache_dir, workers=args.workers, selection=args.selection,
        output_format=args.format)
    if args.ridge_grid is not None:
        cfg.ridge_values = parse_grid(args.ridge_grid)
    cfg.archs()  # validate the architecture grid before any work
    result = run_experiment(cfg)
    _emit(report(result, args.format), args.out)
    failed = [c for c in result.configs if c.status != "ok"]
    if failed and len(failed) == len(result.configs):
        log.error("every configuration failed")
        return 1
    return 0


def cmd_oracle(args) -> int:
    arch = _single_arch(args)
    widths = _ints(args.widths)
    rng = np.random.default_rng(args.seed)
    if args.dataset:
        ds = _load(args)
        small = [g for g in ds.graphs if g.node_count <= args.max_nodes]
        if not small:
            raise ValueError(f"no graph in {args.dataset} has <= {args.max_nodes} nodes")
        picks = rng.integers(0, len(small), size=(args.pairs, 2))
        pairs = [(small[i], small[j]) for i, j in picks]
    else:
        def draw():
            return Graph.random(rng, int(rng.integers(1, args.max_nodes + 1)), args.feature_dim)
        pairs = [(draw(), draw()) for _ in range(args.pairs)]
    tables = convergence_table(pairs, arch, widths, args.draws, args.seed)
    if args.format == "json":
        text = json.dumps([[r.__dict__ for r in rows] for rows in tables], indent=2)
    else:
        lines = []
        for p, rows in enumerate(tables):
            body = convergence_csv(rows).rstrip("\n").split("\n")
            if p == 0:
                lines.append("pair," + body[0])
            lines += [f"{p},{line}" for line in body[1:]]
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return 0


def cmd_bound(args) -> int:
    ds = _load(args)
    rep = bound_report(ds, delta=args.delta, ridge=args.ridge)
    _emit(rep.to_json() if args.format == "json" else rep.table(), args.out)
    return 0


def _parse_cov(text: str) -> np.ndarray:
    a, c, b = (float(x) for x in text.split(","))
    return np.array([[a, c], [c, b]])


def cmd_mc(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.cov:
        covs = [_parse_cov(c) for c in args.cov]
    else:
        covs = []
        for _ in range(args.count):
            m = rng.standard_normal((2, 2))
            covs.append(m @ m.T)
    rows = []
    for k, cov in enumerate(covs):
        est = mc_relu_expectations(cov, args.samples, seed=args.seed + k)
        s = float(np.sqrt(cov[0, 0] * cov[1, 1]))
        lam = float(np.clip(cov[0, 1] / s, -1, 1)) if s > 0 else 0.0
        relu, step = arccos_expectations(lam, s, c_sigma=1.0)
        rows.append({"var1": cov[0, 0], "cov": cov[0, 1], "var2": cov[1, 1],
                     "relu_analytic": float(relu), "relu_mc": est.relu, "relu_se": est.relu_se,
                     "step_analytic": float(step), "step_mc": est.step, "step_se": est.step_se,
                     "relu_z": (est.relu - relu) / est.relu_se if est.relu_se > 0 else 0.0,
                     "step_z": (est.step - step) / est.step_se if est.step_se > 0 else 0.0})
    if args.format == "json":
        text = json.dumps(rows, indent=2)
    else:
        head = f"{'var1':>9} {'cov':>9} {'var2':>9} {'relu':>10} {'mc':>10} {'z':>6} " \
               f"{'step':>8} {'mc':>8} {'z':>6}"
        lines = [head] + [
            f"{r['var1']:9.4f} {r['cov']:9.4f} {r['var2']:9.4f} {r['relu_analytic']:10.5f} "
            f"{r['relu_mc']:10.5f} {r['relu_z']:6.2f} {r['step_analytic']:8.5f} "
            f"{r['step_mc']:8.5f} {r['step_z']:6.2f}" for r in rows]
        text = "\n".join(lines)
    _emit(text, args.out)
    return 0


COMMANDS = {"gram": cmd_gram, "cv": cmd_cv, "oracle": cmd_oracle, "bound": cmd_bound,
            "mc": cmd_mc}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed its diagnostic
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - one diagnostic line, nonzero exit
        print(f"gntk {args.command}: error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 2


if __name__ == "__main__":
    sys.exit(main())
