"""Command-line entry point: ``labelgrain {gen-data,pair,sweep,acr,report}``.

Exit codes: 0 success, 1 runtime / I-O / data error, 2 usage error.
Summaries go to stdout, diagnostics to stderr; result files carry no
timestamps or absolute paths, so identical flags give identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from ._io import atomic_write_json, atomic_write_text, dump_json
from .data import DataError, SyntheticSpec, generate_synthetic, load_dataset, save_dataset, train_test_split
from .experiment import (
    PairResult,
    run_granularity_pair,
    spearman,
    sweep_coarse_count,
    sweep_data_fraction,
    sweep_noise,
    sweep_partitions,
)
from .hierarchy import HierarchyError, PartitionAssignment, read_hierarchy
from .metrics import DegenerateConfusion, MetricError, acr, build_confusion
from .rng import derive_seed
from .trainer import ModelConfig, TrainConfig, TrainingDiverged, save_checkpoint

log = logging.getLogger("labelgrain")

RUNTIME_ERRORS = (OSError, DataError, HierarchyError, MetricError, TrainingDiverged, KeyError, ValueError)


# --- argument types ---------------------------------------------------------------

def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _unit_interval_open_right(text):
    v = float(text)
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1), got {text}")
    return v


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    if not text.strip():
        return []
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# --- parser ------------------------------------------------------------------------

def _add_training_flags(p):
    g = p.add_argument_group("model and training")
    g.add_argument("--train", required=True, help="training dataset CSV")
    g.add_argument("--test", required=True, help="test dataset CSV")
    g.add_argument("--hierarchy", required=True, help="hierarchy JSON file or builtin name")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--hidden", type=_int_list, default=[32], help="hidden widths, e.g. 32 or 64,32; empty for softmax regression")
    g.add_argument("--extra-layer", action="store_true")
    g.add_argument("--dropout", type=_unit_interval_open_right, default=0.0)
    g.add_argument("--lr", type=_positive_float, default=0.1)
    g.add_argument("--momentum", type=_unit_interval_open_right, default=0.9)
    g.add_argument("--weight-decay", type=_nonneg_float, default=5e-4)
    g.add_argument("--epochs", type=_positive_int, default=100)
    g.add_argument("--batch-size", type=_positive_int, default=32)
    g.add_argument("--patience", type=_positive_int, default=10)
    g.add_argument("--decay-factor", type=_positive_float, default=0.1)
    g.add_argument("--min-improvement", type=_nonneg_float, default=1e-3)
    g.add_argument("--max-decays", type=int, default=3)
    g.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labelgrain", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-data", help="generate a synthetic hierarchical dataset", allow_abbrev=False)
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--out", required=True, help="dataset CSV path (manifest written alongside)")
    p.add_argument("--n-per-fine", type=_positive_int, required=True)
    p.add_argument("--dim", type=_positive_int, required=True)
    p.add_argument("--coarse-sep", type=_positive_float, required=True)
    p.add_argument("--fine-sep", type=_positive_float, required=True)
    p.add_argument("--sigma", type=_positive_float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--test-fraction", type=_positive_float, help="also split off a stratified test set")
    p.add_argument("--test-out", help="test CSV path (required with --test-fraction)")

    p = sub.add_parser("pair", help="train coarse- and fine-label models and compare", allow_abbrev=False)
    _add_training_flags(p)
    p.add_argument("--save-models", action="store_true", help="also write model checkpoints")

    p = sub.add_parser("sweep", help="run a fraction / noise / partition / coarse-count sweep", allow_abbrev=False)
    p.add_argument("--kind", required=True, choices=["fraction", "noise", "partition", "coarse-count"])
    _add_training_flags(p)
    p.add_argument("--fractions", type=_float_list)
    p.add_argument("--factors", type=_float_list)
    p.add_argument("--assignments-file")
    p.add_argument("--subsets-file")
    p.add_argument("--jobs", type=_positive_int, default=1)

    p = sub.add_parser("acr", help="average confusion ratio of a prediction log", allow_abbrev=False)
    p.add_argument("--predictions", required=True, help="CSV with header true_fine,pred_fine")
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--out", help="write the report JSON here as well")
    p.add_argument("--confusion-out", help="write the confusion matrix CSV here")

    p = sub.add_parser("report", help="ACR vs delta-A table from a directory of pair results", allow_abbrev=False)
    p.add_argument("--results-dir", required=True)
    p.add_argument("--out", help="CSV path (default: <results-dir>/acr_delta.csv)")
    return parser


# --- commands ------------------------------------------------------------------------

def cmd_gen_data(args, parser) -> int:
    if (args.test_fraction is None) != (args.test_out is None):
        parser.error("--test-fraction and --test-out go together")
    if args.test_fraction is not None and not args.test_fraction < 1:
        parser.error("--test-fraction must be < 1")
    h = read_hierarchy(args.hierarchy)
    spec = SyntheticSpec(h, args.n_per_fine, args.dim, args.coarse_sep, args.fine_sep, args.sigma, args.seed)
    ds = generate_synthetic(spec)
    if args.test_fraction is None:
        save_dataset(ds, args.out, h)
        print(f"wrote {ds.n} examples to {args.out}")
        return 0
    train, test = train_test_split(ds, args.test_fraction, derive_seed(args.seed, "gen-data", "split"))
    save_dataset(train, args.out, h)
    save_dataset(test, args.test_out, h)
    print(f"wrote {train.n} training examples to {args.out} and {test.n} test examples to {args.test_out}")
    return 0


def _configs(args):
    mc = ModelConfig(1, 1, tuple(args.hidden), args.extra_layer, args.dropout)
    if not 0 < args.decay_factor < 1:
        raise ValueError("--decay-factor must be in (0, 1)")
    tc = TrainConfig(
        base_lr=args.lr, momentum=args.momentum, weight_decay=args.weight_decay, epochs=args.epochs,
        batch_size=args.batch_size, plateau_patience=args.patience, lr_decay_factor=args.decay_factor,
        min_improvement=args.min_improvement, max_decays=args.max_decays, seed=args.seed,
    )
    return mc, tc


def _load_pair_inputs(args):
    h = read_hierarchy(args.hierarchy)
    return h, load_dataset(args.train, h), load_dataset(args.test, h)


def _fmt_acr(r: PairResult) -> str:
    return "undefined" if r.acr is None else f"{r.acr:.4f}"


def summary_line(r: PairResult) -> str:
    return f"A_CC={r.a_cc_test:.4f} A_FC={r.a_fc_test:.4f} dA={r.delta_a_test:+.4f} ACR={_fmt_acr(r)}"


def cmd_pair(args, parser) -> int:
    h, train_ds, test_ds = _load_pair_inputs(args)
    mc, tc = _configs(args)
    result = run_granularity_pair(train_ds, test_ds, h, mc, tc, args.seed)
    out = Path(args.out_dir)
    atomic_write_json(out / "pair_result.json", result.to_dict())
    atomic_write_text(out / "curves_coarse.csv", result.curves_coarse.to_csv())
    atomic_write_text(out / "curves_fine.csv", result.curves_fine.to_csv())
    if args.save_models:
        seed = result.provenance["seeds"]["init"]
        atomic_write_text(out / "coarse_model.json", save_checkpoint(result.coarse_model, seed))
        atomic_write_text(out / "fine_model.json", save_checkpoint(result.fine_model, seed))
    print(summary_line(result))
    return 0


def _read_lines(path):
    return [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()
            if ln.strip() and not ln.lstrip().startswith("#")]


def cmd_sweep(args, parser) -> int:
    needed = {"fraction": "fractions", "noise": "factors", "partition": "assignments_file", "coarse-count": "subsets_file"}
    flag = needed[args.kind]
    if getattr(args, flag) is None:
        parser.error(f"--kind {args.kind} requires --{flag.replace('_', '-')}")
    h, train_ds, test_ds = _load_pair_inputs(args)
    mc, tc = _configs(args)
    common = dict(model_cfg=mc, train_cfg=tc, seed=args.seed, jobs=args.jobs)
    if args.kind == "fraction":
        result = sweep_data_fraction(train_ds, test_ds, h, args.fractions, **common)
    elif args.kind == "noise":
        result = sweep_noise(train_ds, test_ds, h, args.factors, **common)
    elif args.kind == "partition":
        assignments = [PartitionAssignment.parse(ln) for ln in _read_lines(args.assignments_file)]
        result = sweep_partitions(train_ds, test_ds, h, assignments, **common)
    else:
        subsets = [[int(t) for t in ln.split(",")] for ln in _read_lines(args.subsets_file)]
        result = sweep_coarse_count(train_ds, test_ds, h, subsets, **common)
    result.write(args.out_dir)
    for value, r in result.entries:
        print(f"{value}: {summary_line(r)}")
    return 0


def _acr_payload(confusion, h) -> dict:
    try:
        return acr(confusion, h).to_dict()
    except DegenerateConfusion as exc:
        return {"acr": "undefined", "reason": exc.reason}


def cmd_acr(args, parser) -> int:
    h = read_hierarchy(args.hierarchy)
    text = Path(args.predictions).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["true_fine", "pred_fine"]:
        raise DataError(f"prediction log header must be true_fine,pred_fine, got {header!r}")
    true, pred = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise DataError(f"line {lineno}: expected 2 fields, got {len(row)}")
        for name, dest in zip(row, (true, pred)):
            try:
                dest.append(h.fine_id(name))
            except KeyError:
                raise DataError(f"line {lineno}: unknown label {name!r}") from None
    confusion = build_confusion(true, pred, h.n_fine)
    payload = _acr_payload(confusion, h)
    if args.out:
        atomic_write_json(args.out, payload)
    if args.confusion_out:
        atomic_write_text(args.confusion_out, confusion.to_csv(h.fine_names))
    sys.stdout.write(dump_json(payload))
    return 0


def cmd_report(args, parser) -> int:
    root = Path(args.results_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"no such directory: {root}")
    rows = []
    for path in sorted(root.rglob("*.json")):
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            continue
        if isinstance(doc, dict) and doc.get("type") == "PairResult":
            r = PairResult.from_dict(doc)
            rows.append((path.relative_to(root).with_suffix("").as_posix(), r.acr, r.delta_a_test))
    if not rows:
        print(f"error: no pair results under {root}", file=sys.stderr)
        return 1
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "acr", "delta_a_test"])
    for label, a, d in rows:
        writer.writerow([label, "" if a is None else a, d])
    out = Path(args.out) if args.out else root / "acr_delta.csv"
    atomic_write_text(out, buf.getvalue())
    defined = [(a, d) for _, a, d in rows if a is not None]
    if len(defined) < 3:
        print(f"warning: {len(defined)} result(s) with defined ACR; correlation needs 3", file=sys.stderr)
        print(f"n={len(rows)} csv={out}")
        return 0
    try:
        rho = spearman([a for a, _ in defined], [d for _, d in defined])
        print(f"n={len(rows)} spearman={rho:.4f} csv={out}")
    except ValueError as exc:
        print(f"warning: {exc}", file=sys.stderr)
        print(f"n={len(rows)} csv={out}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pair": cmd_pair,
    "sweep": cmd_sweep,
    "acr": cmd_acr,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, parser)
    except RUNTIME_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
