"""Command-line driver: ``robustkit measure | sweep-m | predict | enhance | verify``.

Exit codes: 0 success, 1 verification failure, 2 usage or input error.
Reports are UTF-8. JSONL reports start with a header object; CSV reports
start with a ``#`` line holding the same header as JSON.
"""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .downstream import pearson, quartile_groups, split_and_fit
from .embed import StoreEmbedder, ToyEmbedder, store_load
from .enhance import EnhanceConfig, TrainableEmbedder, finetune, save_checkpoint, write_history
from .errors import RobustkitError, ZeroVarianceError
from .geometry import meb_bruteforce, meb_coreset, meb_exact
from .metrics import (
    MeasureError,
    PropertyResult,
    SamplingMode,
    SamplingPlan,
    measure,
    property_suite,
    r_divergence_radius,
    embed_versions,
    sampled_params,
)
from .perturb import PERTURBATIONS, all_specs, apply, default_spec, list_images, read_image, write_png
from .synthetic import synthetic_corpus

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
THREADS_ENV = "ROBUSTKIT_THREADS"


class UsageError(Exception):
    pass


# --- shared plumbing ------------------------------------------------------------


def resolve_threads(flag):
    value = os.environ.get(THREADS_ENV) or flag
    if value in (None, "auto"):
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"threads must be a positive integer or 'auto', got {value!r}") from None
    if n < 1:
        raise UsageError(f"threads must be positive, got {n}")
    return n


def resolve_specs(name):
    if name == "all":
        return all_specs()
    if name not in PERTURBATIONS:
        raise UsageError(f"unknown perturbation {name!r}; choose from {', '.join(PERTURBATIONS)} or all")
    return [default_spec(name)]


def resolve_embedder(value):
    if value == "toy":
        return ToyEmbedder()
    if value.startswith("store:"):
        path = Path(value[len("store:") :])
        if not path.is_file():
            raise UsageError(f"embedding store not found: {path}")
        try:
            return StoreEmbedder(store_load(path))
        except RobustkitError as exc:
            raise UsageError(f"cannot load embedding store {path}: {exc}") from None
    raise UsageError(f"--embedder must be 'toy' or 'store:PATH', got {value!r}")


def check_out_path(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise UsageError(f"output directory does not exist: {parent}")


def load_images(directory):
    """Read every image in ``directory``; returns (images sorted by id, per-file errors)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise UsageError(f"image directory not found: {directory}")
    paths = list_images(directory)
    if not paths:
        raise UsageError(f"no .png or .ppm images in {directory}")
    images, errors, seen = [], [], set()
    for path in paths:
        try:
            image = read_image(path)
        except Exception as exc:  # any decoder failure is reported per file
            errors.append(f"{path.name}: {type(exc).__name__}: {exc}")
            continue
        if image.image_id in seen:
            errors.append(f"{path.name}: duplicate image id {image.image_id!r}")
            continue
        seen.add(image.image_id)
        images.append(image)
    images.sort(key=lambda im: im.image_id)
    return images, errors


def thread_map(fn, items, threads):
    """``map`` over a worker pool; results come back in input order."""
    if threads == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def header(command, config, specs=()):
    return {
        "robustkit": __version__,
        "command": command,
        "config": config,
        "fixed_params": {s.id: dict(s.fixed_params) for s in specs},
    }


def report_errors(errors):
    if errors:
        print(f"{len(errors)} error(s):", file=sys.stderr)
        for line in errors:
            print(f"  {line}", file=sys.stderr)


def csv_param(k):
    return "identity" if k is None else repr(float(k))


# --- measure ---------------------------------------------------------------------


def _perturbed_name(image_id, pid, k):
    tag = "identity" if k is None else repr(float(k))
    return f"{image_id}__{pid}__{tag}.png"


def cmd_measure(args):
    threads = resolve_threads(args.threads)
    specs = resolve_specs(args.perturbation)
    embedder = resolve_embedder(args.embedder)
    check_out_path(args.out)
    if args.m < 1:
        raise UsageError("--m must be positive")
    dump_dir = Path(args.dump_perturbed) if args.dump_perturbed else None
    if dump_dir is not None:
        dump_dir.mkdir(parents=True, exist_ok=True)
    images, errors = load_images(args.images)
    plan = SamplingPlan(SamplingMode(args.sampling), args.m, args.seed, not args.no_identity)
    config = {
        "images_dir": str(args.images),
        "perturbation": args.perturbation,
        "sampling": plan.as_dict(),
        "embedder": embedder.id,
        "format": args.format,
    }

    def work(image):
        records, errs = [], []
        for spec in specs:
            try:
                records.append((spec, measure(image, spec, plan, embedder)))
                if dump_dir is not None:
                    for k in sampled_params(spec, plan):
                        write_png(apply(image, spec, k, plan.seed), dump_dir / _perturbed_name(image.image_id, spec.id, k))
            except (RobustkitError, OSError) as exc:
                cause = exc.cause if isinstance(exc, MeasureError) else exc
                errs.append(f"{image.image_id} / {spec.id}: {type(cause).__name__}: {cause}")
        return records, errs

    results = thread_map(work, images, threads)
    rows = []
    for records, errs in results:
        rows.extend(records)
        errors.extend(errs)
    head = header("measure", config, specs)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        if args.format == "jsonl":
            fh.write(json.dumps(head) + "\n")
            for spec, rec in rows:
                d = rec.as_dict()
                fh.write(json.dumps({
                    "image_id": d["image_id"],
                    "perturbation": d["perturbation"],
                    "sampling": plan.as_dict(),
                    "params": d["params"],
                    "r_cs": d["r_cs"],
                    "r_ed": d["r_ed"],
                    "r_dr": d["r_dr"],
                    "embedder": embedder.id,
                    "fixed_params": dict(spec.fixed_params),
                }) + "\n")
        else:
            fh.write("# " + json.dumps(head) + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["image_id", "perturbation", "sampling_mode", "m", "seed", "include_identity",
                             "params", "r_cs", "r_ed", "r_dr", "embedder"])
            for spec, rec in rows:
                writer.writerow([rec.image_id, rec.perturbation_id, plan.mode.value, plan.m, plan.seed,
                                 plan.include_identity, ";".join(csv_param(k) for k in rec.sampled_params),
                                 repr(rec.r_cs), repr(rec.r_ed), repr(rec.r_dr), embedder.id])
    print(f"wrote {len(rows)} record(s) to {args.out}")
    report_errors(errors)
    return EXIT_USAGE if errors else EXIT_OK


# --- sweep-m ---------------------------------------------------------------------


def parse_int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise UsageError("m values must be positive integers")
    return values


def cmd_sweep_m(args):
    threads = resolve_threads(args.threads)
    specs = resolve_specs(args.perturbation)
    embedder = resolve_embedder(args.embedder)
    ms = parse_int_list(args.ms)
    check_out_path(args.out)
    images, errors = load_images(args.images)
    config = {
        "images_dir": str(args.images),
        "perturbation": args.perturbation,
        "ms": ms,
        "seed": args.seed,
        "include_identity": not args.no_identity,
        "embedder": embedder.id,
    }
    plans = [SamplingPlan(mode, m, args.seed, not args.no_identity) for m in ms for mode in SamplingMode]

    def work(image):
        out, errs = [], []
        for plan in plans:
            vals = []
            for spec in specs:
                try:
                    vals.append(r_divergence_radius(embed_versions(image, spec, sampled_params(spec, plan), embedder, plan.seed)))
                except RobustkitError as exc:
                    errs.append(f"{image.image_id} / {spec.id} / m={plan.m}: {exc}")
            out.append(vals)
        return out, errs

    results = thread_map(work, images, threads)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("# " + json.dumps(header("sweep-m", config, specs)) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["m", "mode", "mean_rdr"])
        for i, plan in enumerate(plans):
            vals = [v for per_image, _ in results for v in per_image[i]]
            mean = repr(float(np.mean(vals))) if vals else "nan"
            writer.writerow([plan.m, plan.mode.value, mean])
    for _, errs in results:
        errors.extend(errs)
    print(f"wrote {len(plans)} row(s) to {args.out}")
    report_errors(errors)
    return EXIT_USAGE if errors else EXIT_OK


# --- predict ---------------------------------------------------------------------


def read_pairs(path):
    """Two numeric columns (robustness, performance); a non-numeric first row is a header."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"pairs file not found: {path}")
    pairs = []
    first = True
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            try:
                x, y = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if first:
                    first = False
                    continue
                raise UsageError(f"{path}:{lineno}: expected two numbers, got {row!r}") from None
            first = False
            pairs.append((x, y))
    return pairs


def cmd_predict(args):
    pairs = read_pairs(args.pairs)
    check_out_path(args.out)
    report = split_and_fit(pairs, args.seed)
    xs, ys = zip(*pairs)
    try:
        report["pearson"] = pearson(xs, ys)
    except ZeroVarianceError:
        report["pearson"] = None
    config = {"pairs": str(args.pairs), "seed": args.seed, "quartiles": args.quartiles}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump({**header("predict", config), "report": report}, fh, indent=2)
        fh.write("\n")
    if args.quartiles:
        check_out_path(args.quartiles)
        with open(args.quartiles, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["group", "mean_robustness", "mean_performance"])
            for i, (r, p) in enumerate(quartile_groups(pairs), start=1):
                writer.writerow([i, repr(r), repr(p)])
    print(f"slope={report['slope']:.6g} intercept={report['intercept']:.6g} test_mse={report['test_mse']:.3e}")
    return EXIT_OK


# --- enhance ---------------------------------------------------------------------


def _corpus(directory, synthetic, seed, prefix, contrast):
    if directory:
        images, errors = load_images(directory)
        if errors:
            report_errors(errors)
            raise UsageError(f"unreadable images in {directory}")
        return images
    return [x for x, _ in synthetic_corpus(synthetic, seed=seed, prefix=prefix, contrast=contrast)]


def cmd_enhance(args):
    specs = resolve_specs(args.perturbation)
    if len(specs) != 1:
        raise UsageError("enhance needs a single perturbation")
    for path in (args.checkpoint, args.history):
        check_out_path(path)
    try:
        cfg = EnhanceConfig(lam=args.lam, epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size,
                            seed=args.seed, backtrack=args.backtrack)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    train = _corpus(args.images, args.synthetic, args.seed + 1, "train", args.contrast)
    probe = _corpus(args.probe_images, args.probe_synthetic, args.seed + 2, "probe", args.contrast)
    base = TrainableEmbedder.from_toy()
    model, history = finetune(base, base, train, specs[0], cfg, probe)
    save_checkpoint(args.checkpoint, model, cfg, cfg.epochs)
    write_history(args.history, history)
    first, last = history[0], history[-1]
    print(f"probe r_dr {first.probe_rdr:.6g} -> {last.probe_rdr:.6g}, probe cos(f, f') {last.probe_cos:.6f}")
    return EXIT_OK


# --- verify ----------------------------------------------------------------------


def oracle_checks(instances, seed):
    """meb_exact against brute force and the coreset solver on random small sets."""
    rng = np.random.default_rng(seed)
    worst_exact = worst_coreset = 0.0
    for _ in range(instances):
        n, dim = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        pts = rng.standard_normal((n, dim))
        ref = meb_bruteforce(pts).radius
        worst_exact = max(worst_exact, abs(meb_exact(pts).radius - ref))
        worst_coreset = max(worst_coreset, meb_coreset(pts, 1000).radius - ref * (1 + 1e-3))
    return [
        PropertyResult("meb_exact_vs_bruteforce", worst_exact <= 1e-9, 1e-9 - worst_exact,
                       f"{instances} instances"),
        PropertyResult("meb_coreset_bound", worst_coreset <= 1e-12, -worst_coreset, "radius <= (1 + 1/1000) opt"),
    ]


def cmd_verify(args):
    specs = resolve_specs(args.perturbation)
    embedder = resolve_embedder(args.embedder)
    if args.images:
        images, errors = load_images(args.images)
        if errors:
            report_errors(errors)
            raise UsageError(f"unreadable images in {args.images}")
    else:
        images = [x for x, _ in synthetic_corpus(args.synthetic, seed=args.seed, prefix="verify")]
    plan = SamplingPlan(m=args.m, seed=args.seed)
    report = property_suite(embedder, images, specs, plan, seed=args.seed)
    report.results.extend(oracle_checks(args.oracle_instances, args.seed))
    print(report.table())
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


# --- argument parsing ------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="robustkit", description="Embedding robustness toolkit.")
    parser.add_argument("--version", action="version", version=f"robustkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--images", required=True, help="directory of .png/.ppm images")
        if out:
            p.add_argument("--out", required=True)
        p.add_argument("--perturbation", default="all", help="perturbation id or 'all'")
        p.add_argument("--embedder", default="toy", help="'toy' or 'store:PATH'")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", default="auto", help=f"worker threads or 'auto' ({THREADS_ENV} overrides)")
        p.add_argument("--no-identity", action="store_true", help="do not prepend the unperturbed image")

    p = sub.add_parser("measure", help="robustness records per (image, perturbation)")
    common(p)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--sampling", choices=[m.value for m in SamplingMode], default="equal")
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.add_argument("--dump-perturbed", metavar="DIR", help="also write every perturbed image as PNG")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("sweep-m", help="mean r_dr against m for both sampling modes")
    common(p)
    p.add_argument("--ms", default="2,3,5,10,20,50", help="comma-separated m values")
    p.set_defaults(func=cmd_sweep_m)

    p = sub.add_parser("predict", help="fit performance against robustness")
    p.add_argument("--pairs", required=True, help="CSV of robustness,performance")
    p.add_argument("--out", required=True, help="prediction report JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quartiles", metavar="CSV", help="also write the 4 quartile-group means")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("enhance", help="fine-tune a linear embedder for robustness")
    p.add_argument("--images", help="training images (default: synthetic corpus)")
    p.add_argument("--synthetic", type=int, default=200, help="size of the synthetic training corpus")
    p.add_argument("--probe-images", help="held-out probe images (default: synthetic)")
    p.add_argument("--probe-synthetic", type=int, default=40)
    p.add_argument("--contrast", type=float, default=1.0, help="synthetic corpus contrast")
    p.add_argument("--perturbation", default="gaussian_noise")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--backtrack", action="store_true", help="halve lr whenever a step increases the batch loss")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", required=True, help="output weights JSON")
    p.add_argument("--history", required=True, help="output per-epoch CSV")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("verify", help="run the metric property suite and solver oracles")
    p.add_argument("--images", help="images to measure (default: synthetic corpus)")
    p.add_argument("--synthetic", type=int, default=4)
    p.add_argument("--perturbation", default="all")
    p.add_argument("--embedder", default="toy")
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle-instances", type=int, default=100)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"robustkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RobustkitError, OSError) as exc:
        print(f"robustkit {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
