"""Command-line entry point: ``mcl {synth,make-mcl,train,eval,bench,verify}``.

Exit codes: 0 success, 2 usage error, 3 data/schema error, 4 numerical abort,
5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as D
from .errors import DataError, DataIOError, InvalidInputError, NumericalAbort
from .models import MODEL_KINDS, ModelParams
from .optim import (METHOD_NAMES, STREAM_GENERATE, TrainConfig, evaluate, grid_search, method_from_name,
                    train)
from .verify import MAX_ENUM_K, MAX_ENUM_N, run_verify

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4, 5

SEED_HELP = """\
seed hierarchy: every stochastic step derives its own stream from the trial
seed S via numpy SeedSequence([S, id]) with fixed ids: 0 = complementary-set
generation, 1 = train/validation split, 2 = model initialization,
3 = mini-batch shuffling (per epoch e: SeedSequence([that seed, e])).
bench runs trials with S = seed, seed+1, ..., seed+T-1."""

log = logging.getLogger("mcl")


class UsageError(Exception):
    pass


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise DataIOError(f"input file not found: {path}")
    return p


def _writable(path: str) -> Path:
    p = Path(path)
    if not p.parent.exists():
        raise UsageError(f"output directory does not exist: {p.parent}")
    return p


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(a) -> int:
    if a.k < 2:
        raise UsageError("--k must be >= 2")
    if a.n % a.k:
        raise UsageError(f"--n ({a.n}) must be a multiple of --k ({a.k})")
    out = _writable(a.out)
    ds = D.synth_gaussians(a.k, a.d, a.n // a.k, a.sep, a.seed)
    D.save_labeled_csv(ds, out)
    log.info("wrote %d rows to %s", len(ds), out)
    return EXIT_OK


def _generate(ds: D.LabeledDataset, size_dist: str, generator: str, seed: int) -> D.MclDataset:
    dist = D.parse_size_dist(size_dist, ds.num_classes)
    gen = D.gen_mcl_direct if generator == "direct" else D.gen_mcl_rejection
    return gen(ds, dist, seed)


def cmd_make_mcl(a) -> int:
    src, out = _existing(a.inp), _writable(a.out)
    ds = D.load_labeled_csv(src)
    if ds.label_map and list(ds.label_map) != list(range(ds.num_classes)):
        log.warning("labels remapped to 0..%d: %s", ds.num_classes - 1,
                    {orig: i for i, orig in enumerate(ds.label_map)})
    mcl = _generate(ds, a.size_dist, a.generator, a.seed)
    D.save_mcl_jsonl(mcl, out)
    hist = np.bincount(mcl.sizes, minlength=ds.num_classes)[1:]
    log.info("set-size histogram (s=1..%d): %s", ds.num_classes - 1, hist.tolist())
    return EXIT_OK


def _config(a, method_name: str, wrapper: str | None, seed: int) -> TrainConfig:
    method = method_from_name(method_name, wrapper, a.gce_q, a.phuber_tau, a.surrogate_scale == "on")
    return TrainConfig(method, a.model, a.hidden, a.batch_size, a.epochs, a.lr, a.weight_decay, seed, a.val_fraction)


def cmd_train(a) -> int:
    cfg = _config(a, a.method, a.wrapper, a.seed)
    src = _existing(a.mcl)
    test = D.load_labeled_csv(_existing(a.test)) if a.test else None
    shadow = D.load_labeled_csv(_existing(a.shadow)) if a.shadow else None
    out_dir = Path(a.out_dir)
    if not out_dir.parent.exists():
        raise UsageError(f"output directory parent does not exist: {out_dir.parent}")
    mcl = D.load_mcl_jsonl(src)
    if a.lr_grid or a.wd_grid:
        res = grid_search(mcl, a.lr_grid or [a.lr], a.wd_grid or [a.weight_decay], cfg, shadow, test)
        report, extra = res.report, {"grid": res.cells}
    else:
        report, extra = train(mcl, cfg, shadow, test), {}
    out_dir.mkdir(exist_ok=True)
    report.model.save(out_dir / "model.json")
    doc = report.to_dict() | extra
    (out_dir / "report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    (out_dir / "curves.csv").write_text(report.curves_csv(), encoding="utf-8")
    summary = {"selected_epoch": report.selected_epoch, "best_val_acc": report.best_val_acc,
               "test_accuracy": report.test_accuracy}
    print(json.dumps(summary))
    return EXIT_OK


def cmd_eval(a) -> int:
    model = ModelParams.load(_existing(a.model))
    ds = D.load_labeled_csv(_existing(a.data))
    if ds.dim != model.d:
        raise DataError(f"model expects {model.d} features, data has {ds.dim}")
    print(json.dumps({"accuracy": evaluate(model, ds), "n": len(ds)}))
    return EXIT_OK


def _parse_method(text: str) -> tuple[str, str | None]:
    name, _, wrapper = text.partition(":")
    return name, wrapper or None


def cmd_bench(a) -> int:
    if (a.train is None) == (a.mcl is None):
        raise UsageError("give exactly one of --train (labeled CSV, sets regenerated per trial) or --mcl")
    test = D.load_labeled_csv(_existing(a.test))
    labeled = D.load_labeled_csv(_existing(a.train)) if a.train else None
    fixed = D.load_mcl_jsonl(_existing(a.mcl)) if a.mcl else None
    out = _writable(a.out)
    methods = [_parse_method(m) for m in a.methods.split(",") if m]
    for name, wrapper in methods:
        _config(a, name, wrapper, 0)  # reject unknown names before any training

    rows, results = [], {}
    for name, wrapper in methods:
        label = name if wrapper is None else f"{name}:{wrapper}"
        accs = []
        for trial in range(a.trials):
            seed = a.seed + trial
            try:
                mcl = fixed if fixed is not None else _generate(
                    labeled, a.size_dist, a.generator, D.derive_seed(seed, STREAM_GENERATE))
                rep = train(mcl, _config(a, name, wrapper, seed), test=test)
                accs.append(rep.test_accuracy)
                rows.append(["trial", label, trial, seed, repr(rep.test_accuracy), "", "", ""])
            except (NumericalAbort, DataError, InvalidInputError) as e:
                rows.append(["trial", label, trial, seed, "", "", "", str(e)])
            log.info("%s trial %d: %s", label, trial, rows[-1][4] or rows[-1][7])
        results[label] = accs
        mean = repr(float(np.mean(accs))) if accs else ""
        std = repr(float(np.std(accs))) if accs else ""
        failed = a.trials - len(accs)
        rows.append(["aggregate", label, "", "", "", mean, std, f"{failed} failed" if failed else ""])

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "method", "trial", "seed", "test_accuracy", "mean", "std", "error"])
    w.writerows(rows)
    out.write_text(buf.getvalue(), encoding="utf-8")
    for label, accs in results.items():
        if accs:
            print(f"{label:>14s}  {100 * np.mean(accs):6.2f} +- {100 * np.std(accs):5.2f}  ({len(accs)} trials)")
    return EXIT_OK


def cmd_verify(a) -> int:
    if not 3 <= a.k <= MAX_ENUM_K:
        raise UsageError(f"--k {a.k}: exhaustive enumeration is capped at 3 <= k <= {MAX_ENUM_K} "
                         f"(2^k - 2 sets per point)")
    if any(not 1 <= n <= MAX_ENUM_N for n in a.n):
        raise UsageError(f"--n: enumeration population size is capped at {MAX_ENUM_N}")
    report = run_verify(a.k, tuple(a.n), a.seed, a.draws)
    text = report.to_json()
    if a.out:
        _writable(a.out).write_text(text + "\n", encoding="utf-8")
    if a.json:
        print(text)
    else:
        for c in report.checks:
            print(f"{c.status.upper():5s} {c.name:55s} dev={c.deviation:.3g} tol={c.tolerance:.3g}")
        print("OK" if report.ok else "FAILED")
    return EXIT_OK if report.ok else EXIT_VERIFY


# ---------------------------------------------------------------------------
# parser


def _train_flags(p: argparse.ArgumentParser):
    p.add_argument("--model", choices=MODEL_KINDS, default="linear")
    p.add_argument("--hidden", type=_positive_int, default=500, help="MLP hidden width")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--batch-size", type=_positive_int, default=256)
    p.add_argument("--epochs", type=_positive_int, default=250)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--gce-q", type=float, default=0.7)
    p.add_argument("--phuber-tau", type=float, default=10.0)
    p.add_argument("--surrogate-scale", choices=("on", "off"), default="on",
                   help="scale EXP/LOG per example by (2k-2)/|set|")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcl", description="Learning from multiple complementary labels.",
                                     epilog=SEED_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, description=help_, epilog=SEED_HELP, parents=[common],
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(fn=fn)
        return p

    p = add("synth", cmd_synth, "sample a labeled Gaussian-mixture CSV")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=_positive_int, required=True)
    p.add_argument("--n", type=_positive_int, required=True, help="total rows (multiple of k)")
    p.add_argument("--sep", type=float, required=True, help="distance of each class mean from the origin")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = add("make-mcl", cmd_make_mcl, "draw complementary label sets for a labeled CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--size-dist", default="default", help="default | paper-literal | fixed:<s>")
    p.add_argument("--generator", choices=("direct", "rejection"), default="direct")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train a classifier on complementary-label JSONL")
    p.add_argument("--mcl", required=True, help="complementary-label JSONL")
    p.add_argument("--method", required=True, help=f"one of {', '.join(METHOD_NAMES)}")
    p.add_argument("--wrapper", choices=("before", "after"), help="decomposition wrapper for pc/free/forward")
    _train_flags(p)
    p.add_argument("--lr-grid", type=_floats, help="comma-separated learning rates to search")
    p.add_argument("--wd-grid", type=_floats, help="comma-separated weight decays to search")
    p.add_argument("--test", help="labeled CSV for test accuracy")
    p.add_argument("--shadow", help="labeled CSV with the ordinary labels of the training rows")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True, help="writes model.json, report.json, curves.csv")

    p = add("eval", cmd_eval, "accuracy of a saved model on a labeled CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)

    p = add("bench", cmd_bench, "repeat training over trials and methods, write a results table")
    p.add_argument("--train", help="labeled CSV; complementary sets are regenerated per trial")
    p.add_argument("--mcl", help="fixed complementary-label JSONL reused by every trial")
    p.add_argument("--test", required=True)
    p.add_argument("--methods", required=True, help="comma list, e.g. log,exp,mae,cce,pc:before,forward:after")
    p.add_argument("--trials", type=_positive_int, default=5)
    p.add_argument("--size-dist", default="default")
    p.add_argument("--generator", choices=("direct", "rejection"), default="direct")
    _train_flags(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = add("verify", cmd_verify, "check the estimator's statistical identities")
    p.add_argument("--k", type=int, default=MAX_ENUM_K, help=f"largest k to enumerate (<= {MAX_ENUM_K})")
    p.add_argument("--n", type=lambda t: [int(v) for v in t.split(",")], default=[5, 20],
                   help=f"population sizes to enumerate (<= {MAX_ENUM_N})")
    p.add_argument("--draws", type=int, default=100_000, help="Monte Carlo draws per check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true", help="print only the JSON report")
    p.add_argument("--out", help="also write the JSON report here")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return a.fn(a)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"mcl: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidInputError as e:
        print(f"mcl: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"mcl: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as e:
        print(f"mcl: numerical abort: {e} (epoch={e.epoch}, batch={e.batch}, objective={e.objective})",
              file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
