"""Command-line entry point: ``tr2c <subcommand> ...``.

Exit codes: 0 success, 1 numerical failure, 2 invalid input or config.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data, network, pipeline
from .config import load_config, to_train_config
from .errors import InvalidConfigError, InvalidInputError, NumericalError, TR2CError
from .metrics import evaluate

log = logging.getLogger("tr2c")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _prepare(args, need_gt: bool = False):
    X = data.load_matrix(args.features, getattr(args, "format", None))
    gt = None
    if getattr(args, "labels", None):
        gt = data.load_labels(args.labels)
        if gt.size != X.shape[1]:
            raise InvalidInputError(f"{args.labels} has {gt.size} labels, features have {X.shape[1]} frames")
    elif need_gt:
        raise InvalidInputError("--labels (ground truth) is required for this command")
    resolved = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        resolved["seed"] = args.seed
    resolved = pipeline.resolve_k(resolved, getattr(args, "k", None), gt)
    to_train_config(resolved)  # validate before any work starts
    return X, gt, resolved


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_run(out: Path, result: pipeline.RunResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    data.save_labels(result.labels, out / "labels.txt")
    result.trace.write_csv(out / "trace.csv")
    network.save_checkpoint(result.params, out / "params.ckpt")
    _write_json(out / "config.json", result.resolved)
    if result.report is not None:
        (out / "report.json").write_text(result.report.to_json())


def cmd_synth(args) -> int:
    spec = data.SyntheticSpec(
        k=args.k,
        ambient_dim=args.dim,
        subspace_dim=args.subspace_dim,
        segment_lengths=tuple(_ints(args.segments)) if args.segments else (args.segment_length,) * args.k,
        sigma=args.sigma,
        seed=args.seed,
    )
    X, labels = data.generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    features = out / f"features.{args.format}"
    data.save_matrix(X, features, args.format)
    data.save_labels(labels, out / "labels.txt")
    print(f"wrote {features} ({X.shape[0]}x{X.shape[1]}) and {out / 'labels.txt'}")
    return 0


def cmd_train(args) -> int:
    X, gt, resolved = _prepare(args)
    out = Path(args.out)
    if args.seeds is None:
        result = pipeline.run_once(X, resolved, gt)
        _write_run(out, result)
        if result.report:
            print(f"acc={result.report.acc:.4f} nmi={result.report.nmi:.4f}")
        return 0

    seeds = pipeline.seed_list(resolved["seed"], args.seeds)
    summary = {"config_echo": resolved, "seeds": seeds, "runs": []}
    results = pipeline.map_jobs(pipeline.run_job, [(X, resolved, gt, s) for s in seeds], args.jobs)
    for s, result in zip(seeds, results):
        _write_run(out / f"seed_{s}", result)
        if result.report:
            summary["runs"].append({"seed": s, "acc": result.report.acc, "nmi": result.report.nmi})
    if gt is not None:
        accs = np.array([r["acc"] for r in summary["runs"]])
        nmis = np.array([r["nmi"] for r in summary["runs"]])
        summary.update(acc_mean=float(accs.mean()), acc_std=float(accs.std()),
                       nmi_mean=float(nmis.mean()), nmi_std=float(nmis.std()))
        print(f"acc={accs.mean():.4f}±{accs.std():.4f} nmi={nmis.mean():.4f}±{nmis.std():.4f}")
    _write_json(out / "summary.json", summary)
    return 0


def cmd_eval(args) -> int:
    gt = data.load_labels(args.labels)
    pred = data.load_labels(args.pred)
    report = evaluate(pred, gt, seed=args.seed)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_ablate(args) -> int:
    X, gt, resolved = _prepare(args, need_gt=True)
    seeds = pipeline.seed_list(resolved["seed"], args.seeds)
    rows = pipeline.ablation(X, gt, resolved, seeds, args.jobs)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["enable_rho", "enable_rho_c", "enable_temporal", "acc", "nmi",
                         "acc_std", "nmi_std", "n_seeds"])
        for r in rows:
            writer.writerow([*r["gates"], repr(r["acc"]), repr(r["nmi"]),
                             repr(r["acc_std"]), repr(r["nmi_std"]), len(seeds)])
    for r in rows:
        print("".join("x" if g else "." for g in r["gates"]), f"acc={r['acc']:.4f} nmi={r['nmi']:.4f}")
    return 0


def cmd_noise(args) -> int:
    X, gt, resolved = _prepare(args, need_gt=True)
    seeds = pipeline.seed_list(resolved["seed"], args.seeds)
    rows = pipeline.noise_curve(X, gt, resolved, _floats(args.sigma), seeds, args.jobs)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sigma", "acc_mean", "acc_std", "nmi_mean", "nmi_std", "n_seeds", "accs"])
        for r in rows:
            writer.writerow([repr(r["sigma"]), repr(r["acc_mean"]), repr(r["acc_std"]),
                             repr(r["nmi_mean"]), repr(r["nmi_std"]), r["n_seeds"],
                             ";".join(repr(a) for a in r["accs"])])
    for r in rows:
        print(f"sigma={r['sigma']:g} acc={r['acc_mean']:.4f}±{r['acc_std']:.4f}")
    return 0


def cmd_bench(args) -> int:
    n_values = _ints(args.n)
    rows = pipeline.bench(n_values, feature_dim=args.dim, d_pre=args.d_pre, d=args.d,
                          repeats=args.repeats, seed=args.seed)
    echo = {"feature_dim": args.dim, "d_pre": args.d_pre, "d": args.d,
            "repeats": args.repeats, "seed": args.seed, "n": n_values}
    lines = [f"# config: {json.dumps(echo, sort_keys=True)}", "n,ms_per_iter"]
    lines += [f"{r['n']},{r['ms_per_iter']:.3f}" for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_pca(args) -> int:
    X = data.load_matrix(args.features, args.format)
    labels = data.load_labels(args.labels) if args.labels else np.zeros(X.shape[1], dtype=int)
    if labels.size != X.shape[1]:
        raise InvalidInputError(f"{labels.size} labels for {X.shape[1]} frames")
    source = X
    if args.checkpoint:
        source = network.forward(network.load_checkpoint(args.checkpoint), X).z
    result = data.pca_project(source, args.components)
    data.write_pca_csv(result, labels, args.out)
    ratios = ", ".join(f"{r:.4f}" for r in result.explained_variance_ratio)
    print(f"wrote {args.out}; explained variance ratios: {ratios}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tr2c", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, labels_help="ground-truth labels file"):
        p.add_argument("--features", required=True, help="feature matrix (D rows x N frames)")
        p.add_argument("--format", choices=("csv", "bin"), help="matrix format (default: by extension)")
        p.add_argument("--labels", help=labels_help)
        p.add_argument("--config", help="key = value run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--k", type=int, help="number of clusters")

    p = sub.add_parser("synth", help="generate a synthetic union-of-subspaces sequence")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--dim", type=int, default=30, help="ambient dimension D")
    p.add_argument("--subspace-dim", type=int, default=3)
    p.add_argument("--segment-length", type=int, default=100)
    p.add_argument("--segments", help="comma-separated segment lengths (one per cluster)")
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train and segment one sequence")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seeds", help="seed count or comma-separated list (multi-seed mode)")
    p.add_argument("--jobs", type=int, default=pipeline.default_workers())
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score predicted labels against ground truth")
    p.add_argument("--labels", required=True, help="ground-truth labels file")
    p.add_argument("--pred", required=True, help="predicted labels file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    for name, func, helptext in (("ablate", cmd_ablate, "loss-term ablation table"),
                                 ("noise", cmd_noise, "accuracy under additive Gaussian noise")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--out", required=True, help="output CSV")
        p.add_argument("--seeds", default="5", help="seed count or comma-separated list")
        p.add_argument("--jobs", type=int, default=pipeline.default_workers())
        if name == "noise":
            p.add_argument("--sigma", required=True, help="comma-separated noise levels")
        p.set_defaults(func=func)

    p = sub.add_parser("bench", help="time loss + gradient per iteration")
    p.add_argument("--n", default="200,400,600,800,1000,2000,3000,4000")
    p.add_argument("--dim", type=int, default=324, help="input feature dimension")
    p.add_argument("--d-pre", type=int, default=512)
    p.add_argument("--d", type=int, default=64, help="representation dimension")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output CSV (also printed)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("pca", help="export PCA coordinates of features or learned representations")
    p.add_argument("--features", required=True)
    p.add_argument("--format", choices=("csv", "bin"))
    p.add_argument("--labels")
    p.add_argument("--checkpoint", help="map features through this network first")
    p.add_argument("--components", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pca)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except (InvalidInputError, InvalidConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TR2CError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
