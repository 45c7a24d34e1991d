"""Command-line interface.

Errors are reported as a single line ``error: <kind>: <message>`` on stderr
with exit status 1; usage errors exit with status 2.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .diagram import (SignificanceBand, dataset_pad, delta_band_select, pad_to,
                      persistent_entropy, topk_select)
from .distances import bottleneck, wasserstein
from .persistence import PersistenceDiagram, compute_pd, read_diagram_csv, write_diagram_csv
from .pipeline import build_signatures, run_bench, validate_manifest
from .plot import plot_diagram
from .pointcloud import SHAPE_DEFAULTS, generate_shape, random_sample, read_point_cloud, write_xyz
from .rips import SimplexOverflowError
from .significance import (SelectionConfig, SelectionParams, TopoLossWeights,
                           method1_subsampling, method2_concentration, method3_shells,
                           optimize_selection)


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _key_value(text):
    key, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key, float(val)


def _threshold(text):
    return text if text == "auto" else float(text)


def _read_one(path, dim):
    dgms = read_diagram_csv(path)
    if dim is not None:
        return dgms.get(dim, PersistenceDiagram(dim))
    if len(dgms) > 1:
        raise CliError("usage", f"{path} holds several dimensions; pass --dim")
    return next(iter(dgms.values())) if dgms else PersistenceDiagram(1)


# -- subcommands -------------------------------------------------------------

def cmd_generate(args):
    pc = generate_shape(args.shape, args.n, dict(args.param or []), args.noise, args.seed)
    write_xyz(pc, args.out)


def cmd_compute(args):
    pc = read_point_cloud(args.input, args.format)
    if args.sample is not None and args.sample < len(pc):
        pc = random_sample(pc, args.sample, args.seed)
    dgms = compute_pd(pc, args.max_dim, threshold=args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, d in dgms.items():
        write_diagram_csv(out / f"h{k}.csv", d)


def cmd_pad(args):
    dgms = [(p, d) for p in args.inputs for d in read_diagram_csv(p).values()]
    if args.target is not None:
        padded = [pad_to(d, args.target) for _, d in dgms]
    else:
        padded = dataset_pad([d for _, d in dgms])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    by_file: dict = {}
    for (path, _), pdd in zip(dgms, padded):
        by_file.setdefault(path, []).append(pdd.diagram)
    for path, ds in by_file.items():
        write_diagram_csv(out / Path(path).name, ds)


def cmd_select(args):
    pd = _read_one(args.pd, args.dim)
    report = {"method": args.method, "input_size": len(pd)}
    if args.method == "delta":
        if args.delta is None:
            raise CliError("usage", "--delta is required for method delta")
        band = SignificanceBand(args.delta)
        selected = delta_band_select(pd, band)
        report["delta"] = band.delta
    elif args.method == "topk":
        if args.k is None:
            raise CliError("usage", "--k is required for method topk")
        selected = topk_select(pd, args.k)
        report["k"] = args.k
    elif args.method in ("method1", "method2", "method3"):
        if args.cloud is None:
            raise CliError("usage", f"--cloud is required for {args.method}")
        pc = read_point_cloud(args.cloud)
        if args.method == "method1":
            band = method1_subsampling(pc, args.subsamples, alpha=args.alpha, seed=args.seed)
        elif args.method == "method2":
            band = method2_concentration(pc, args.alpha)
        else:
            band = method3_shells(pc, args.alpha, args.shells)
        selected = delta_band_select(pd, band)
        report.update(delta=band.delta, alpha=band.alpha)
    else:
        if len(pd) == 0:
            raise CliError("value", "topoloss needs a nonempty diagram")
        weights = TopoLossWeights.from_weights(*args.weights)
        init = SelectionParams(args.init_lambda, args.init_eta) if args.init_lambda is not None else None
        cfg = SelectionConfig(steps=args.steps, learning_rate=args.lr, restarts=args.restarts,
                              seed=args.seed, init=init, gradient=args.gradient,
                              entropy_mode=args.entropy)
        res = optimize_selection(pd, weights, cfg)
        selected = res.hard_selected
        report.update(**{"lambda": res.params.lam, "eta": res.params.eta,
                         "loss": vars(res.loss), "initial_loss": res.initial_loss})
    report["selected_size"] = len(selected)
    write_diagram_csv(args.out, selected)
    Path(str(args.out) + ".json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")


def cmd_distance(args):
    a, b = _read_one(args.a, args.dim), _read_one(args.b, args.dim)
    if args.metric == "bottleneck":
        value = bottleneck(a, b)
    else:
        value = wasserstein(a, b, args.q, args.inner)
    print(repr(float(value)))


def cmd_entropy(args):
    for path in args.inputs:
        for k, d in read_diagram_csv(path).items():
            if args.dim is None or k == args.dim:
                print(f"{path}\t{k}\t{persistent_entropy(d)!r}")


def cmd_build(args):
    label_map = json.loads(Path(args.label_map).read_text()) if args.label_map else None
    m = build_signatures(args.input, args.out, args.sample_size, args.max_dim, args.seed,
                         args.workers, threshold=args.threshold, label_map=label_map)
    problems = validate_manifest(m, args.out)
    if problems:
        raise CliError("manifest", "; ".join(problems))
    ok = len(m.ok_clouds())
    print(f"{ok}/{len(m.clouds)} clouds ok; padded sizes {m.padded_size}")


def cmd_bench(args):
    methods = [s for s in args.methods.split(",") if s]
    reports = run_bench(args.manifest, methods, alpha=args.alpha, seed=args.seed,
                        output=args.out)
    for r in reports:
        sys.stdout.write(r.to_table())


def cmd_plot(args):
    bands = [SignificanceBand(d) for d in args.band or []]
    selected = [args.selected] if args.selected else None
    plot_diagram(args.pd, bands, selected, args.out, args.title)


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="persistome",
                                description="Rips persistence diagrams and feature selection.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a synthetic shape to an xyz file")
    g.add_argument("--shape", required=True, choices=sorted(SHAPE_DEFAULTS))
    g.add_argument("--n", type=int, required=True, help="number of points")
    g.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sd")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--param", type=_key_value, action="append",
                   help="shape parameter, e.g. radius=2 (repeatable)")
    g.add_argument("--out", required=True, help="output xyz path")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("compute", help="H1/H2 diagrams of one cloud")
    c.add_argument("--in", dest="input", required=True, help="point cloud file")
    c.add_argument("--format", choices=["xyz", "csv", "off"], help="override format detection")
    c.add_argument("--out", required=True, help="output directory for h1.csv, h2.csv")
    c.add_argument("--max-dim", type=int, default=2, choices=[1, 2])
    c.add_argument("--threshold", type=_threshold, default="auto",
                   help="Rips threshold or 'auto' (enclosing radius)")
    c.add_argument("--sample", type=int, help="random subsample size")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_compute)

    pa = sub.add_parser("pad", help="pad diagrams to a common size")
    pa.add_argument("inputs", nargs="+", help="diagram CSVs")
    pa.add_argument("--target", type=int, help="fixed size (default: largest per dim)")
    pa.add_argument("--out", required=True, help="output directory")
    pa.set_defaults(func=cmd_pad)

    s = sub.add_parser("select", help="select significant features of one diagram")
    s.add_argument("--method", required=True,
                   choices=["delta", "topk", "method1", "method2", "method3", "topoloss"])
    s.add_argument("--pd", required=True, help="diagram CSV")
    s.add_argument("--dim", type=int, help="dimension to use from the CSV")
    s.add_argument("--cloud", help="point cloud, for method1..method3")
    s.add_argument("--out", required=True, help="selected diagram CSV; report goes to OUT.json")
    s.add_argument("--delta", type=float, help="band width for method delta")
    s.add_argument("--k", type=int, help="count for method topk")
    s.add_argument("--alpha", type=float, default=0.05, help="confidence level for bands")
    s.add_argument("--subsamples", type=int, default=100, help="method1 subsample count")
    s.add_argument("--shells", type=int, default=5, help="method3 shell count")
    s.add_argument("--steps", type=int, default=150, help="topoloss descent steps")
    s.add_argument("--lr", type=float, default=0.05, help="topoloss learning rate")
    s.add_argument("--restarts", type=int, default=3, help="topoloss random restarts")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--weights", type=float, nargs=3, default=(1.0, 1.0, 1.0),
                   metavar=("ALPHA", "BETA", "GAMMA"), help="topoloss weights (normalised)")
    s.add_argument("--init-lambda", type=float, help="topoloss initial lambda")
    s.add_argument("--init-eta", type=float, default=10.0, help="topoloss initial eta")
    s.add_argument("--gradient", choices=["fd", "analytic"], default="fd")
    s.add_argument("--entropy", choices=["soft", "hard"], default="soft",
                   help="lifetimes used by the entropy term")
    s.set_defaults(func=cmd_select)

    d = sub.add_parser("distance", help="distance between two diagrams")
    d.add_argument("--metric", choices=["bottleneck", "wasserstein"], default="bottleneck")
    d.add_argument("--q", type=float, default=1.0, help="Wasserstein order")
    d.add_argument("--inner", choices=["linf", "l2"], default="linf", help="ground norm")
    d.add_argument("--dim", type=int, help="dimension to compare")
    d.add_argument("a")
    d.add_argument("b")
    d.set_defaults(func=cmd_distance)

    e = sub.add_parser("entropy", help="persistent entropy per diagram")
    e.add_argument("inputs", nargs="+")
    e.add_argument("--dim", type=int)
    e.set_defaults(func=cmd_entropy)

    bu = sub.add_parser("build", help="build a signature dataset from a directory of clouds")
    bu.add_argument("--in", dest="input", required=True, help="input directory")
    bu.add_argument("--out", required=True, help="output directory")
    bu.add_argument("--sample-size", type=int, default=1024)
    bu.add_argument("--max-dim", type=int, default=2, choices=[1, 2])
    bu.add_argument("--threshold", type=_threshold, default="auto")
    bu.add_argument("--seed", type=int, default=0)
    bu.add_argument("--workers", type=int, default=1)
    bu.add_argument("--label-map", help="JSON file mapping directory names to labels")
    bu.set_defaults(func=cmd_build)

    b = sub.add_parser("bench", help="benchmark selection methods on a manifest")
    b.add_argument("--manifest", required=True)
    b.add_argument("--methods", required=True,
                   help="comma list: delta:X, topk:K, method1, method2, method3, topoloss")
    b.add_argument("--alpha", type=float, default=0.05)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default=".", help="directory for bench_<method>.csv/.txt")
    b.set_defaults(func=cmd_bench)

    pl = sub.add_parser("plot", help="SVG plot of diagrams")
    pl.add_argument("--pd", nargs="+", required=True, help="diagram CSVs")
    pl.add_argument("--band", type=float, action="append", help="delta band (repeatable)")
    pl.add_argument("--selected", help="CSV of selected pairs to circle")
    pl.add_argument("--title")
    pl.add_argument("--out", required=True, help="output SVG path")
    pl.set_defaults(func=cmd_plot)
    return p


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc.kind}: {_one_line(exc)}", file=sys.stderr)
        return 2 if exc.kind == "usage" else 1
    except SimplexOverflowError as exc:
        print(f"error: overflow: {_one_line(exc)}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: io: {_one_line(exc)}", file=sys.stderr)
        return 1
    except (OSError, ValueError, ArithmeticError) as exc:
        kind = "io" if isinstance(exc, OSError) else "value"
        print(f"error: {kind}: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
