"""``parasent`` command-line tool.

Exit codes: 0 success, 1 usage or configuration error, 2 data or format
error, 3 numerical failure (non-finite loss, failed gradient check,
zero-norm embedding).
"""

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .data import open_text, read_pair_corpus, read_scored_pairs, rescale_gold
from .encoders import SentenceEncoder
from .evaluation import EvalDataset, aggregate, evaluate, format_table, load_manifest
from .exceptions import ConfigError, DegenerateVectorError, FormatError, NumericalError
from .gates import aggregate_norms, load_tagged_corpus
from .gradcheck import check_instance, random_instance
from .model import ParaphraseModel
from .supervised import ScoredPair, SupervisedConfig, train_supervised
from .training import train_transfer
from .vocab import encode, load_embeddings

log = logging.getLogger("parasent")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with status 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# flag groups, keyed by config name -> argparse keyword arguments
_ENCODER = {
    "encoder": dict(help="avg, lstm, lstmavg, gran1..gran5"),
    "bidirectional": dict(action=argparse.BooleanOptionalAction, help="run forward and backward encoders"),
    "combine": dict(help="how directions are combined: sum or tanh"),
    "hidden_size": dict(type=int, help="LSTM state size (default: embedding dimension)"),
}
_TAGS = {
    "add_sos": dict(action=argparse.BooleanOptionalAction, help="prepend a start-of-sentence token"),
    "add_eos": dict(action=argparse.BooleanOptionalAction, help="append an end-of-sentence token"),
}
_OPTIM = {
    "lambda_c": dict(type=float, help="L2 weight on compositional parameters"),
    "lambda_w": dict(type=float, help="weight of the word-vector drift penalty"),
    "dropout": dict(type=float, help="embedding dropout rate"),
    "word_dropout": dict(type=float, help="word dropout rate"),
    "scramble": dict(type=float, help="probability of scrambling a training pair"),
    "epochs": dict(type=int),
    "batch_size": dict(type=int),
    "lr": dict(type=float, help="Adam learning rate"),
    "beta1": dict(type=float),
    "beta2": dict(type=float),
    "eps": dict(type=float),
    "seed": dict(type=int),
}

COMMANDS = {
    "train-transfer": dict(
        help="train a sentence encoder on paraphrase pairs",
        flags={"embeddings": dict(help="word vectors: token then values per line"),
               "corpus": dict(help="paraphrase pairs: sentence TAB sentence"),
               "output": dict(help="checkpoint to write"),
               "delta": dict(type=float, help="margin"),
               **_ENCODER, **_TAGS, **_OPTIM},
        required=("embeddings", "corpus", "output")),
    "train-supervised": dict(
        help="train encoder and similarity head on scored pairs",
        flags={"embeddings": dict(help="word vectors (not needed with --init-checkpoint)"),
               "init_checkpoint": dict(help="start from, and regularize towards, a transfer checkpoint"),
               "train": dict(help="scored pairs: sentence TAB sentence TAB score"),
               "dev": dict(help="scored pairs for model selection"),
               "output": dict(help="checkpoint to write"),
               "K": dict(type=int, help="number of score classes"),
               "head_hidden": dict(type=int, help="hidden units in the similarity head"),
               "gold_min": dict(type=float), "gold_max": dict(type=float),
               **_ENCODER, **_TAGS, **_OPTIM},
        required=("train", "output"),
        defaults={"batch_size": 25}),
    "evaluate": dict(
        help="Pearson/Spearman of cosine scores on STS-style datasets",
        flags={"checkpoint": dict(action="append", help="checkpoint to evaluate (repeatable)"),
               "manifest": dict(help="lines of 'group: file, file'"),
               "output": dict(help="write per-dataset results as TSV"),
               "selection": dict(choices=("test", "oracle"), help="pick one of several checkpoints"),
               "held_out_group": dict(help="manifest group used (test) or left out (oracle) by --selection")},
        required=("checkpoint", "manifest")),
    "embed": dict(
        help="write one embedding per input line",
        flags={"checkpoint": dict(action="append", help="trained checkpoint"),
               "input": dict(help="sentences, one per line"),
               "output": dict(help="destination (default: standard output)")},
        required=("checkpoint", "input")),
    "gradcheck": dict(
        help="compare backpropagated gradients with finite differences",
        flags={**_ENCODER,
               "dim": dict(type=int, help="word-vector dimension"),
               "seed": dict(type=int),
               "loss": dict(choices=("margin", "kl", "both")),
               "instances": dict(type=int, help="random instances per loss"),
               "h": dict(type=float, help="finite-difference step"),
               "tolerance": dict(type=float, help="largest acceptable relative error")},
        required=()),
    "analyze-gates": dict(
        help="mean gate L1 norm per POS tag / dependency label",
        flags={"checkpoint": dict(action="append", help="GRAN checkpoint"),
               "tagged": dict(help="5-column tagged corpus: ID FORM POS HEAD DEPREL"),
               "group_by": dict(choices=("pos", "dep", "pos_x_dep")),
               "top_k": dict(type=int, help="report only the k highest and k lowest keys (0: all)"),
               "token_cap": dict(type=int, help="skip sentences with more tokens than this"),
               "output": dict(help="write the table as TSV")},
        required=("checkpoint", "tagged")),
}


def build_parser():
    parser = _Parser(prog="parasent", description="Paraphrastic sentence embeddings.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    parser.commands = {}
    for name, command in COMMANDS.items():
        p = sub.add_parser(name, help=command["help"], description=command["help"])
        parser.commands[name] = p
        p.add_argument("--config", help="file of 'key = value' lines; flags take precedence")
        p.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors on stderr")
        for key, kwargs in command["flags"].items():
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, default=None, **kwargs)
    return parser


def resolve_config(args):
    """Command defaults, then file values, then any flags given explicitly."""
    base = RunConfig().update(COMMANDS[args.command].get("defaults", {}))
    config = load_config(args.config, base) if args.config else base
    flags = {k: getattr(args, k) for k in COMMANDS[args.command]["flags"] if getattr(args, k) is not None}
    config = config.update(flags)
    missing = []
    for key in COMMANDS[args.command]["required"]:
        value = getattr(config, key)
        if value is None or value == ():
            missing.append(key)
    if missing:
        names = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise UsageError(f"{args.command}: missing required setting(s) {names} (flag or config key)")
    return config


def _single_checkpoint(config):
    if len(config.checkpoint) != 1:
        raise UsageError("exactly one --checkpoint is required for this command")
    return config.checkpoint[0]


def _load_table(config):
    with open_text(config.embeddings) as fh:
        return load_embeddings(fh, seed=config.seed)


def _write(path, text, out):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        out.write(text)


def cmd_train_transfer(config, out):
    config.warn_off_grid()
    table = _load_table(config)
    encoder = SentenceEncoder(config.encoder_config(), table.dim)
    with open_text(config.corpus) as fh:
        pairs = read_pair_corpus(fh)
    corpus = [(encode(a, table, config.add_sos, config.add_eos), encode(b, table, config.add_sos, config.add_eos))
              for a, b in pairs]
    result = train_transfer(corpus, config.train_config(), table, encoder)
    model = ParaphraseModel(table.with_matrix(result.params["W_w"]), encoder, result.params,
                            config.add_sos, config.add_eos)
    model.save(config.output)
    for epoch, loss in enumerate(result.epoch_losses, start=1):
        out.write(f"epoch {epoch}\tloss {loss!r}\n")
    out.write(f"wrote {config.output}\n")
    return EXIT_OK


def _scored(path, table, config):
    with open_text(path) as fh:
        rows = read_scored_pairs(fh)
    gold = np.array([y for _, _, y in rows])
    if np.any(gold < config.gold_min) or np.any(gold > config.gold_max):
        raise FormatError(f"{path}: gold scores must lie in [{config.gold_min}, {config.gold_max}]")
    target = np.clip(rescale_gold(gold, config.gold_min, config.gold_max, config.K), 1.0, config.K)
    return [ScoredPair(encode(a, table, config.add_sos, config.add_eos), encode(b, table, config.add_sos, config.add_eos),
                       float(t)) for (a, b, _), t in zip(rows, target)]


def cmd_train_supervised(config, out):
    universal = None
    if config.init_checkpoint:
        base = ParaphraseModel.load(config.init_checkpoint)
        table = base.table
        base.check_compatible(SentenceEncoder(config.encoder_config(), table.dim), config.add_sos, config.add_eos)
        universal = base.params
    elif config.embeddings:
        table = _load_table(config)
    else:
        raise UsageError("train-supervised needs --embeddings or --init-checkpoint")
    encoder = SentenceEncoder(config.encoder_config(), table.dim)
    train = _scored(config.train, table, config)
    dev = _scored(config.dev, table, config) if config.dev else []
    sup = config.train_config(SupervisedConfig, K=config.K, head_hidden=config.head_hidden)
    result = train_supervised(train, dev, sup, encoder, table, universal=universal)
    model = ParaphraseModel(table.with_matrix(result.params["W_w"]), encoder, result.params,
                            config.add_sos, config.add_eos, config.gold_min, config.gold_max)
    model.save(config.output)
    for epoch, loss in enumerate(result.epoch_losses, start=1):
        out.write(f"epoch {epoch}\tloss {loss!r}\n")
    for epoch, r in result.dev_log:
        out.write(f"epoch {epoch}\tdev pearson {r!r}\n")
    if result.dev_log:
        out.write(f"best epoch {result.best_epoch}\tdev pearson {result.best_dev!r}\n")
    out.write(f"wrote {config.output}\n")
    return EXIT_OK


def cmd_evaluate(config, out):
    manifest = load_manifest(config.manifest)
    datasets, groups = {}, {}
    for group, paths in manifest.items():
        groups[group] = [p.stem for p in paths]
        for p in paths:
            datasets[p.stem] = EvalDataset.from_file(p)
    names = [Path(c).stem for c in config.checkpoint]
    if len(set(names)) != len(names):
        names = list(config.checkpoint)
    reports = {}
    for name, path in zip(names, config.checkpoint):
        reports[name] = evaluate(ParaphraseModel.load(path), datasets, groups, name=name)
    rows, tsv = [], ["model\tgroup\tdataset\tpearson\tspearman"]
    for report in reports.values():
        for m, g, d, p, s in report.rows():
            rows.append((m, g, d, f"{p:.4f}", f"{s:.4f}"))
            tsv.append(f"{m}\t{g}\t{d}\t{p!r}\t{s!r}")
        for g, v in report.group_means().items():
            rows.append((report.name, g, "<mean>", f"{v:.4f}", ""))
            tsv.append(f"{report.name}\t{g}\t<mean>\t{v!r}\t")
    out.write(format_table(["model", "group", "dataset", "pearson", "spearman"], rows))
    if config.output:
        Path(config.output).write_text("\n".join(tsv) + "\n", encoding="utf-8")
    if config.selection:
        if config.held_out_group and config.held_out_group not in groups:
            raise UsageError(f"unknown held-out group {config.held_out_group!r}; groups: {', '.join(groups)}")
        if config.selection == "test" and not config.held_out_group:
            raise UsageError("--selection test needs --held-out-group")
        out.write(aggregate(reports, config.selection, groups, config.held_out_group).to_text())
    return EXIT_OK


def cmd_embed(config, out):
    model = ParaphraseModel.load(_single_checkpoint(config))
    with open_text(config.input) as fh:
        sentences = [line.strip() for line in fh]
    for lineno, s in enumerate(sentences, start=1):
        if not s:
            raise FormatError("empty sentence", lineno)
    emb = model.embed(sentences) if sentences else np.zeros((0, model.encoder.output_dim))
    text = "".join(" ".join(repr(float(x)) for x in row) + "\n" for row in emb)
    _write(config.output, text, out)
    return EXIT_OK


def cmd_gradcheck(config, out):
    encoder_config = config.encoder_config()
    losses = ("margin", "kl") if config.loss == "both" else (config.loss,)
    worst = 0.0
    for loss in losses:
        for k in range(config.instances):
            seed = config.seed + k
            inst = random_instance(encoder_config, loss, seed=seed, dim=config.dim)
            report = check_instance(inst, h=config.h, seed=seed)
            worst = max(worst, report.max_rel_error)
            out.write(f"# {encoder_config.kind}{' (bidirectional)' if encoder_config.bidirectional else ''}"
                      f" {loss} loss, seed {seed}\n")
            text = report.format()
            out.write(text if text.endswith("\n") else text + "\n")
    ok = worst < config.tolerance
    out.write(f"max relative error {worst:.3e} ({'PASS' if ok else 'FAIL'} at tolerance {config.tolerance:g})\n")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_analyze_gates(config, out):
    model = ParaphraseModel.load(_single_checkpoint(config))
    with open_text(config.tagged) as fh:
        corpus = load_tagged_corpus(fh, token_cap=config.token_cap)
    log.info("%d sentences kept, %d skipped (more than %d tokens)", len(corpus), corpus.skipped, config.token_cap)
    table = aggregate_norms(corpus, model, config.group_by)
    if config.top_k > 0:
        rows = table.top(config.top_k)
        bottom = [r for r in table.bottom(config.top_k)[::-1] if r not in rows]
        rows = rows + bottom
    else:
        rows = table.rows()
    text = table.to_tsv(rows)
    _write(config.output, text, out)
    if config.output:
        out.write(text)
    out.write(f"# skipped {corpus.skipped} sentence(s) over the {config.token_cap}-token cap\n")
    return EXIT_OK


HANDLERS = {
    "train-transfer": cmd_train_transfer,
    "train-supervised": cmd_train_supervised,
    "evaluate": cmd_evaluate,
    "embed": cmd_embed,
    "gradcheck": cmd_gradcheck,
    "analyze-gates": cmd_analyze_gates,
}


def _echo(command, config, err):
    err.write(f"# parasent {command}: effective config (seed {config.seed})\n")
    keys = set(COMMANDS[command]["flags"]) | {"seed"}
    for line in config.to_text(keys).splitlines():
        err.write(f"#   {line}\n")


def run(argv=None, out=None, err=None):
    """Run one command and return its exit code."""
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    handler = logging.StreamHandler(err)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("parasent")
    root.handlers[:] = [handler]
    root.setLevel(logging.WARNING if args.quiet else logging.INFO)
    root.propagate = False

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, cat, *a, **k: err.write(f"warning: {msg}\n")
            config = resolve_config(args)
            _echo(args.command, config, err)
            return HANDLERS[args.command](config, out)
    except UsageError as exc:
        err.write(parser.commands[args.command].format_usage())
        err.write(f"parasent {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except ConfigError as exc:
        err.write(f"parasent {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except (FormatError, OSError, UnicodeDecodeError) as exc:
        err.write(f"parasent {args.command}: data error: {exc}\n")
        return EXIT_DATA
    except (NumericalError, DegenerateVectorError, FloatingPointError) as exc:
        err.write(f"parasent {args.command}: numerical error: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        err.write(f"parasent {args.command}: data error: {exc}\n")
        return EXIT_DATA


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
