"""Command-line entry point: ``train``, ``eval``, ``spectrum`` and ``entropy-scan``.

Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O error,
3 numerical error. Every output file is written atomically.
"""

from __future__ import annotations

import argparse
import io
import logging
import os
import sys
from typing import Sequence

import numpy as np

from . import checkpoint
from .dataset import ImageSet, central_square, load_idx, tile, top_half_partition
from .entanglement import half_partition_scan, window_entropy_scan
from .errors import BlockstateError, ConfigurationError, DataError, InputError, NumericalError
from .models import INIT_RANGES, MODEL_KINDS, SumStateModel, init_model
from .tensor import DEFAULT_TOL
from .training import TrainConfig, TrainingDiverged, evaluate, train

log = logging.getLogger("blockstate")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
FLOAT_FMT = "%.17g"
CHECKPOINT_NAME = "model.ckpt"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; command-line flags take precedence")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--deterministic", type=_bool, nargs="?", const=True, default=False,
                   help="single-threaded, fixed reduction order")
    p.add_argument("--images", help="IDX image file")
    p.add_argument("--labels", help="IDX label file")
    p.add_argument("--limit", type=int, help="use only the first N images")
    p.add_argument("--per-class", type=int, help="use the first N images of every class")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blockstate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    tr = sub.add_parser("train", help="train a classifier and write a checkpoint")
    _add_common(tr)
    tr.add_argument("--model", choices=MODEL_KINDS, default="nnbps")
    tr.add_argument("--block-size", type=int, default=2)
    tr.add_argument("--chi", type=int, default=2)
    tr.add_argument("--splice", type=int, help="SBPS label position (default: middle of the snake)")
    tr.add_argument("--boundary-dim", type=int, default=1, help="SBPS outer bond dimension")
    tr.add_argument("--loss", choices=("nll", "quadratic"), default="nll")
    tr.add_argument("--alpha", type=float, default=1.0)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--lr-decay", type=float, default=1.0, help="per-epoch learning-rate factor")
    tr.add_argument("--init", choices=tuple(INIT_RANGES), default="positive",
                    help="uniform draw on [0, 1] or [-1, 1] before normalisation")
    tr.add_argument("--beta1", type=float, default=0.9)
    tr.add_argument("--beta2", type=float, default=0.999)
    tr.add_argument("--epsilon", type=float, default=1e-8)
    tr.add_argument("--epochs", type=int, default=10)
    tr.add_argument("--batch", type=int, default=100)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--test-images")
    tr.add_argument("--test-labels")
    tr.add_argument("--test-limit", type=int)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a labelled set")
    _add_common(ev)
    ev.add_argument("--checkpoint", help="checkpoint file written by train")

    sp = sub.add_parser("spectrum", help="Schmidt spectra of the class sum state")
    _add_common(sp)
    sp.add_argument("--digit", type=int, default=3)
    sp.add_argument("--sizes", type=_int_list, default="10")
    sp.add_argument("--partition", default="half", help="'half' or 'window:L' (central LxL square)")
    sp.add_argument("--tol", type=float, default=DEFAULT_TOL)
    sp.add_argument("--window-size", type=int, default=10)

    es = sub.add_parser("entropy-scan", help="mean entropy of LxL squares in the central window")
    _add_common(es)
    es.add_argument("--digit", type=int, default=3)
    es.add_argument("--n-sigma", type=int, default=1000)
    es.add_argument("--L", dest="L", type=_int_list, default="1,2,3,4,5,6")
    es.add_argument("--tol", type=float, default=DEFAULT_TOL)
    es.add_argument("--window-size", type=int, default=10)
    return parser


# --- config file -------------------------------------------------------------------------------


def read_config(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment; keys use flag names without dashes."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{num}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions} - {"help", "config"}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


# --- helpers -------------------------------------------------------------------------------------


def _workers(args) -> int:
    if args.deterministic:
        return 1
    cap = os.environ.get("BLOCKSTATE_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError as exc:
            raise ConfigurationError(f"BLOCKSTATE_THREADS must be an integer, got {cap!r}") from exc
    return n


def _load(images, labels, limit=None, per_class=None) -> ImageSet:
    if not images or not labels:
        raise UsageError("--images and --labels are required")
    data = load_idx(images, labels)
    if per_class is not None:
        data = data.balanced(per_class)
    if limit is not None:
        data = data[np.arange(min(limit, len(data)))]
    return data


def _out_dir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise DataError(f"output directory {path} is not writable")
    return path


def _write_text(path: str, text: str) -> None:
    checkpoint.atomic_write(path, text.encode("utf-8"))


def _fmt(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FMT % float(v)


def write_csv(path: str, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    _write_text(path, buf.getvalue())


def _write_resolved(out: str, args) -> None:
    items = {k: v for k, v in sorted(vars(args).items()) if k != "config"}
    lines = [f"{k} = {','.join(map(str, v)) if isinstance(v, list) else v}" for k, v in items.items()]
    _write_text(os.path.join(out, "config-resolved.txt"), "\n".join(lines) + "\n")


def _pct(x) -> str:
    return "n/a" if x is None or not np.isfinite(x) else f"{100 * x:.3f}%"


def summary_table(model, train_acc, test_acc) -> str:
    n = getattr(getattr(model, "layout", None), "n", None)
    block = f"{n}x{n}" if n else "-"
    chi = f"chi={model.chi}" if hasattr(model, "chi") else "-"
    head = "Model | Block Size | Bond Dim. | Training Accuracy | Test Accuracy"
    row = f"{model.kind.upper()} | {block} | {chi} | {_pct(train_acc)} | {_pct(test_acc)}"
    return f"{head}\n{row}\n"


# --- subcommands ----------------------------------------------------------------------------------


def cmd_train(args) -> int:
    out = _out_dir(args.out)
    train_set = _load(args.images, args.labels, args.limit, args.per_class)
    test_set = None
    if args.test_images or args.test_labels:
        test_set = _load(args.test_images, args.test_labels, args.test_limit)
    config = TrainConfig(
        learning_rate=args.lr,
        beta1=args.beta1,
        beta2=args.beta2,
        epsilon=args.epsilon,
        batch_size=args.batch,
        epochs=args.epochs,
        alpha=args.alpha,
        seed=args.seed,
        loss_kind=args.loss,
        lr_decay=args.lr_decay,
    )
    _write_resolved(out, args)
    if args.model == "sumstate":
        from .embedding import embed_images

        model = SumStateModel.from_images(
            embed_images(train_set), train_set.labels, train_set.dims, workers=_workers(args)
        )
    else:
        options = {}
        if args.model == "sbps":
            options = {"splice": args.splice, "boundary_dim": args.boundary_dim}
        layout = tile(train_set.dims, args.block_size)
        model = init_model(args.model, layout, chi=args.chi, seed=args.seed, init=args.init, **options)

    rows = []

    def on_epoch(rec):
        rows.append((rec.epoch, rec.train_loss, rec.train_acc, rec.test_acc))
        write_csv(os.path.join(out, "history.csv"), ("epoch", "train_loss", "train_acc", "test_acc"), rows)

    status = EXIT_OK
    try:
        model, history = train(model, train_set, config, test_set, on_epoch=on_epoch)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        model, history, status = exc.model, exc.history, EXIT_NUMERICAL
    checkpoint.save(
        os.path.join(out, CHECKPOINT_NAME), model, train_config=config.to_dict(), extra={"init": args.init}
    )
    last = history[-1] if history else None
    text = summary_table(model, last.train_acc if last else None, last.test_acc if last else None)
    text += f"epochs completed: {last.epoch if last else 0}\n"
    _write_text(os.path.join(out, "summary.txt"), text)
    sys.stdout.write(text)
    return status


def cmd_eval(args) -> int:
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    out = _out_dir(args.out)
    model, _ = checkpoint.load(args.checkpoint)
    if isinstance(model, SumStateModel):
        model.workers = _workers(args)
    data = _load(args.images, args.labels, args.limit, args.per_class)
    _write_resolved(out, args)
    report = evaluate(model, data)
    rows = [(c, report.class_counts[c], report.per_class_accuracy[c]) for c in range(len(report.class_counts))]
    write_csv(os.path.join(out, "eval.csv"), ("label", "count", "accuracy"), rows)
    text = f"accuracy: {_pct(report.accuracy)}\nmean_nll: {FLOAT_FMT % report.loss}\nsamples: {report.sample_count}\n"
    _write_text(os.path.join(out, "summary.txt"), text)
    sys.stdout.write(text)
    return EXIT_OK


def _class_images(args) -> ImageSet:
    data = _load(args.images, args.labels)
    if not 0 <= args.digit <= 9:
        raise ConfigurationError(f"--digit must be in 0..9, got {args.digit}")
    return data.of_class(args.digit)


def _spectrum_partition(spec: str, dims, window: int):
    if spec == "half":
        return top_half_partition(dims)
    if spec.startswith("window:"):
        try:
            size = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad --partition {spec!r}") from exc
        return central_square(dims, size, window)
    raise UsageError(f"--partition must be 'half' or 'window:L', got {spec!r}")


def cmd_spectrum(args) -> int:
    out = _out_dir(args.out)
    images = _class_images(args)
    partition = _spectrum_partition(args.partition, images.dims, args.window_size)
    _write_resolved(out, args)
    spectra = half_partition_scan(images, args.sizes, tol=args.tol, partition=partition, workers=_workers(args))
    rows = [
        (r.n_sigma, a, lam_sq, args.tol)
        for r in spectra
        for a, lam_sq in enumerate(r.result.lambda_sq, start=1)
    ]
    write_csv(os.path.join(out, "spectrum.csv"), ("n_sigma", "alpha", "lambda_sq", "tol"), rows)
    lines = ["n_sigma | rank | entropy (nats) | log n_sigma"]
    lines += [f"{r.n_sigma} | {r.result.rank} | {r.result.entropy:.6f} | {np.log(r.n_sigma):.6f}" for r in spectra]
    text = f"digit {args.digit}, partition {args.partition}, first images in file order\n" + "\n".join(lines) + "\n"
    _write_text(os.path.join(out, "summary.txt"), text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_entropy_scan(args) -> int:
    out = _out_dir(args.out)
    images = _class_images(args)
    _write_resolved(out, args)
    rows = window_entropy_scan(
        images, args.n_sigma, args.L, window=args.window_size, tol=args.tol, workers=_workers(args)
    )
    write_csv(
        os.path.join(out, "entropy.csv"),
        ("L", "mean_S", "std_S", "n_partitions"),
        [(r.L, r.mean_S, r.std_S, r.n_partitions) for r in rows],
    )
    lines = ["L | mean S (nats) | mean S / log n_sigma"]
    lines += [f"{r.L} | {r.mean_S:.6f} | {r.mean_S / np.log(args.n_sigma):.6f}" for r in rows]
    text = f"digit {args.digit}, n_sigma {args.n_sigma}\n" + "\n".join(lines) + "\n"
    _write_text(os.path.join(out, "summary.txt"), text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "spectrum": cmd_spectrum,
    "entropy-scan": cmd_entropy_scan,
}


def run(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand and return its exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except (UsageError, ConfigurationError, InputError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BlockstateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(message)s")
    sys.exit(run())
