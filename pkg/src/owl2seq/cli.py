"""Command-line interface: corpus generation, training, evaluation, the
sentence-to-formula pipeline, gradient checking and accuracy-curve export.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure,
4 pipeline incompatibility (translate only).
"""

from __future__ import annotations

import argparse
import csv
import re
import sys
import warnings
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, corpus, dlkit, nn, tagger, transducer
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    checkpoint_load,
    checkpoint_save,
)
from .corpus import (
    CorpusConfig,
    GenerationError,
    GrammarConfig,
    Lexicon,
    Vocabulary,
    build_vocab,
    generate_dataset,
    load_default_lexicon,
    read_dataset,
    split_stratified,
    write_dataset,
)
from .dlkit import (
    FORMULA_TOKENS,
    TAGS,
    FormulaParseError,
    SlotIncompatibilityError,
    TaggedSentenceError,
    TaggedSentence,
    instantiate,
    parse_formula,
    render_formula,
)
from .numkit import make_rng

__all__ = [
    "RunConfig",
    "MetricsRow",
    "DataError",
    "TranslationResult",
    "main",
    "read_kv_config",
    "grammar_config_from_kv",
    "train_model",
    "evaluate_model",
    "translate_sentence",
    "model_to_checkpoint",
    "model_from_checkpoint",
    "write_metrics",
    "read_metrics",
    "render_curves",
    "build_gradcheck_setup",
]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_INCOMPATIBLE = 4


class DataError(ValueError):
    """Bad inputs: unreadable files, mismatched vocabularies, malformed configs."""


@dataclass(frozen=True)
class RunConfig:
    """Training-run settings; the defaults are the full-scale ones."""

    task: str = "tagger"
    train_path: str = ""
    test_path: str = ""
    out_dir: str = "."
    seed: int = 0
    epochs: int = 150
    batch_size: int = 128
    lr: float = 2.0
    rho: float = 0.95
    epsilon: float = 1e-6
    window_half_width: int = 2
    embed_dim: int = 100
    hidden_dim: int = 200
    enc_hidden: int = 1000
    dec_hidden: int = 1000
    split_ratio: float = 0.9
    early_stop_acc: float = 1.0
    early_stop_patience: int = 2
    max_output_len: int = 0  # 0: longest training formula plus 2

    def validate(self) -> None:
        if self.task not in ("tagger", "transducer"):
            raise DataError(f"task must be tagger or transducer, got {self.task!r}")
        if self.epochs < 0:
            raise DataError("epochs must be non-negative")
        if self.batch_size < 1:
            raise DataError("batch_size must be positive")
        if not 0.0 < self.split_ratio < 1.0:
            raise DataError("split_ratio must be in (0, 1)")

    def key_values(self) -> dict:
        return {f.name: str(getattr(self, f.name)) for f in fields(self)}


@dataclass(frozen=True)
class MetricsRow:
    epoch: int
    split: str
    loss: float
    token_accuracy: float
    sequence_accuracy: float


# ---------------------------------------------------------------------------
# key=value configuration files
# ---------------------------------------------------------------------------

def read_kv_config(path) -> dict:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _coerce(value: str, target_type):
    if target_type is bool:
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise DataError(f"expected a boolean, got {value!r}")
    return target_type(value)


def run_config_from_kv(kv: dict, base: RunConfig | None = None) -> RunConfig:
    run = base or RunConfig()
    types = {"task": str, "train_path": str, "test_path": str, "out_dir": str,
             "seed": int, "epochs": int, "batch_size": int, "lr": float,
             "rho": float, "epsilon": float, "window_half_width": int,
             "embed_dim": int, "hidden_dim": int, "enc_hidden": int,
             "dec_hidden": int, "split_ratio": float, "early_stop_acc": float,
             "early_stop_patience": int, "max_output_len": int}
    assert set(types) == {f.name for f in fields(RunConfig)}
    updates = {}
    for key, value in kv.items():
        if key not in types:
            raise DataError(f"unknown run-config key {key!r}")
        updates[key] = _coerce(value, types[key])
    return replace(run, **updates)


def grammar_config_from_kv(kv: dict) -> GrammarConfig:
    cfg = GrammarConfig()
    updates = {}
    if "card_ops" in kv:
        updates["card_ops"] = tuple(
            s.strip().upper() for s in kv["card_ops"].split(",") if s.strip()
        )
    if "two_card_pairs" in kv:
        pairs = []
        for chunk in kv["two_card_pairs"].split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            parts = chunk.split("_")
            if len(parts) != 3:
                raise DataError(f"bad two-card pair {chunk!r}, want op1_op2_joiner")
            pairs.append(tuple(p.upper() for p in parts))
        updates["two_card_pairs"] = tuple(pairs)
    if "enable_exists" in kv:
        updates["enable_exists"] = _coerce(kv["enable_exists"], bool)
    for key in ("lhs_single_kinds", "rhs_single_kinds", "lhs_pair_kinds", "rhs_pair_kinds"):
        if key in kv:
            updates[key] = tuple(s.strip() for s in kv[key].split(",") if s.strip())
    if "pair_conns" in kv:
        updates["pair_conns"] = tuple(
            s.strip().upper() for s in kv["pair_conns"].split(",") if s.strip()
        )
    if "variants" in kv:
        updates["variants"] = _coerce(kv["variants"], int)
    cfg = replace(cfg, **updates)
    cfg.validate()
    return cfg


def lexicon_from_kv(kv: dict) -> Lexicon:
    if all(k in kv for k in ("verbs_path", "adjectives_path", "nouns1_path", "nouns2_path")):
        lex = Lexicon.from_paths(kv["verbs_path"], kv["adjectives_path"],
                                 kv["nouns1_path"], kv["nouns2_path"])
    else:
        lex = load_default_lexicon()
    counts = []
    for key, full in (("verbs", lex.verbs), ("adjectives", lex.adjectives),
                      ("nouns1", lex.nouns1), ("nouns2", lex.nouns2)):
        n = int(kv.get(key, "0"))
        counts.append(n if n > 0 else len(full))
    return lex.truncated(*counts)


# ---------------------------------------------------------------------------
# example encoding and evaluation
# ---------------------------------------------------------------------------

def encode_examples(task: str, vocab: Vocabulary, examples) -> list:
    """Index pairs for training: (words, tags) or (words, formula tokens)."""
    out = []
    for ex in examples:
        words = [vocab.encode(w) for w in ex.words]
        if task == "tagger":
            out.append((words, [dlkit.TAG_INDEX[t] for t in ex.tags]))
        else:
            out.append((words, [dlkit.FORMULA_TOKEN_INDEX[t] for t in ex.formula_tokens]))
    return out


def evaluate_model(task: str, model, encoded, batch_size: int = 256) -> tuple:
    """(loss, token accuracy, sequence accuracy) over encoded examples.

    Accuracy and loss count the positions up to and including each
    example's first gold EOS; the loss sums the per-position cross entropy
    over the whole set.
    """
    if not encoded:
        raise DataError("nothing to evaluate")
    loss = 0.0
    correct = 0
    total = 0
    perfect = 0
    for start in range(0, len(encoded), batch_size):
        chunk = encoded[start:start + batch_size]
        steps = max(len(g) for _, g in chunk) + 1
        if task == "tagger":
            wins = tagger._batch_windows(model, [w for w, _ in chunk], steps)
            probs, _, _ = tagger._batch_forward(model, wins)
        else:
            contexts, _, _, _ = transducer._batch_encode(model, [w for w, _ in chunk])
            probs = transducer.decode_batch(model, contexts, steps)
        stacked = np.stack(probs)  # (steps, B, out)
        preds = stacked.argmax(axis=2)
        with np.errstate(divide="ignore"):
            for b, (_, gold_body) in enumerate(chunk):
                gold = list(gold_body) + [0]
                n = len(gold)
                ok = preds[:n, b] == gold
                loss -= float(np.sum(np.log(stacked[np.arange(n), b, gold])))
                correct += int(ok.sum())
                total += n
                perfect += bool(ok.all())
    if not np.isfinite(loss):
        raise nn.NumericError(f"evaluation loss is not finite: {loss}")
    return loss, correct / total, perfect / len(encoded)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _build_model(run: RunConfig, vocab_size: int, encoded_train):
    if run.task == "tagger":
        config = tagger.TaggerConfig(
            in_vocab=vocab_size,
            window_half_width=run.window_half_width,
            embed_dim=run.embed_dim,
            hidden_dim=run.hidden_dim,
        )
        return tagger.TaggerModel.init(config, run.seed)
    max_len = run.max_output_len
    if max_len <= 0:
        max_len = max(len(f) for _, f in encoded_train) + 2
    config = transducer.TransducerConfig(
        in_vocab=vocab_size,
        embed_dim=run.embed_dim,
        enc_hidden=run.enc_hidden,
        dec_hidden=run.dec_hidden,
        max_output_len=max_len,
    )
    return transducer.TransducerModel.init(config, run.seed)


def _task_loss_and_grads(task: str):
    return tagger.loss_and_grads if task == "tagger" else transducer.loss_and_grads


def train_model(run: RunConfig, train_examples, log=None) -> tuple:
    """Run the epoch loop; returns (model, vocab, metrics rows).

    Each epoch redraws the stratified train/validation split, shuffles,
    sums gradients over each batch in example order and applies one
    AdaDelta update per batch. Training stops early once the validation
    token and sequence accuracies have stayed at early_stop_acc or above
    for early_stop_patience consecutive epochs.
    """
    run.validate()
    if not train_examples:
        raise DataError("training set is empty")
    vocab = build_vocab(train_examples)
    encoded_all = encode_examples(run.task, vocab, train_examples)
    model = _build_model(run, len(vocab), encoded_all)
    loss_and_grads = _task_loss_and_grads(run.task)
    optimizer = nn.AdaDelta(model.param_dict(), rho=run.rho, epsilon=run.epsilon, lr=run.lr)
    rng = make_rng(run.seed)
    rows: list[MetricsRow] = []
    streak = 0
    for epoch in range(1, run.epochs + 1):
        train_part, val_part = split_stratified(train_examples, run.split_ratio, rng)
        enc_train = encode_examples(run.task, vocab, train_part)
        enc_val = encode_examples(run.task, vocab, val_part)
        order = rng.permutation(len(enc_train))
        epoch_loss = 0.0
        for start in range(0, len(order), run.batch_size):
            batch = [enc_train[i] for i in order[start:start + run.batch_size]]
            try:
                loss, grads = loss_and_grads(model, batch)
            except nn.NumericError as err:
                raise nn.NumericError(
                    f"epoch {epoch}, batch starting at {start}: {err}"
                ) from err
            epoch_loss += loss
            optimizer.step(grads)
        _, train_tok, train_seq = evaluate_model(run.task, model, enc_train)
        rows.append(MetricsRow(epoch, "train", epoch_loss, train_tok, train_seq))
        if enc_val:
            val_loss, val_tok, val_seq = evaluate_model(run.task, model, enc_val)
            rows.append(MetricsRow(epoch, "val", val_loss, val_tok, val_seq))
            if log:
                log(f"epoch {epoch:3d}  train_loss={epoch_loss:10.3f}  "
                    f"val_acc={val_tok:6.4f}/{val_seq:6.4f}")
            if val_tok >= run.early_stop_acc and val_seq >= run.early_stop_acc:
                streak += 1
                if streak >= run.early_stop_patience:
                    break
            else:
                streak = 0
        elif log:
            log(f"epoch {epoch:3d}  train_loss={epoch_loss:10.3f}")
    return model, vocab, rows


# ---------------------------------------------------------------------------
# checkpoint packing
# ---------------------------------------------------------------------------

def model_to_checkpoint(model, vocab: Vocabulary, run: RunConfig) -> Checkpoint:
    config = run.key_values()
    for key in ("train_path", "test_path", "out_dir"):
        config.pop(key, None)  # paths would break byte-for-byte reproducibility
    config["format"] = "owl2seq-model"
    config["package_version"] = __version__
    if run.task == "transducer":
        config["max_output_len"] = str(model.config.max_output_len)
    return Checkpoint(
        config=config,
        vocab_tables={
            "words": tuple(vocab.words),
            "tags": TAGS,
            "formula_terms": FORMULA_TOKENS,
        },
        tensors=dict(model.param_dict()),
    )


def _checkpoint_vocab(ckpt: Checkpoint) -> Vocabulary:
    if ckpt.vocab_tables.get("tags") != TAGS:
        raise DataError("checkpoint tag table does not match this build's 10 tags")
    if ckpt.vocab_tables.get("formula_terms") != FORMULA_TOKENS:
        raise DataError("checkpoint formula-term table does not match this build's 18 terms")
    return Vocabulary(words=tuple(ckpt.vocab_tables["words"]))


def model_from_checkpoint(ckpt: Checkpoint):
    """(task, model, vocab) reconstructed from a loaded checkpoint."""
    vocab = _checkpoint_vocab(ckpt)
    cfg = ckpt.config
    task = cfg.get("task")
    t = ckpt.tensors
    try:
        if task == "tagger":
            config = tagger.TaggerConfig(
                in_vocab=len(vocab),
                window_half_width=int(cfg["window_half_width"]),
                embed_dim=int(cfg["embed_dim"]),
                hidden_dim=int(cfg["hidden_dim"]),
            )
            model = tagger.TaggerModel(
                config=config,
                embedding=nn.EmbeddingTable(E=t["E"]),
                gru=nn.GruParams(W_r=t["W_r"], U_r=t["U_r"], W_z=t["W_z"],
                                 U_z=t["U_z"], W_h=t["W_h"], U_h=t["U_h"]),
                head=nn.OutputHead(W=t["W"], b=t["b"].reshape(-1)),
            )
        elif task == "transducer":
            config = transducer.TransducerConfig(
                in_vocab=len(vocab),
                embed_dim=int(cfg["embed_dim"]),
                enc_hidden=int(cfg["enc_hidden"]),
                dec_hidden=int(cfg["dec_hidden"]),
                max_output_len=int(cfg["max_output_len"]),
            )
            model = transducer.TransducerModel(
                config=config,
                embedding=nn.EmbeddingTable(E=t["E"]),
                encoder=nn.GruParams(**{n: t[f"enc.{n}"] for n in
                                        ("W_r", "U_r", "W_z", "U_z", "W_h", "U_h")}),
                decoder=nn.GruParams(**{n: t[f"dec.{n}"] for n in
                                        ("W_r", "U_r", "W_z", "U_z", "W_h", "U_h")}),
                head=nn.OutputHead(W=t["W"], b=t["b"].reshape(-1)),
            )
        else:
            raise DataError(f"checkpoint has unknown task {task!r}")
    except KeyError as err:
        raise DataError(f"checkpoint is missing tensor or config key {err}") from err
    if model.embedding.E.shape[1] != len(vocab):
        raise DataError(
            f"embedding has {model.embedding.E.shape[1]} columns but the stored "
            f"vocabulary holds {len(vocab)} words"
        )
    return task, model, vocab


# ---------------------------------------------------------------------------
# metrics files and curves
# ---------------------------------------------------------------------------

METRICS_FIELDS = ("epoch", "split", "loss", "token_accuracy", "sequence_accuracy")


def write_metrics(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_FIELDS)
        for row in rows:
            writer.writerow([row.epoch, row.split, f"{row.loss:.10g}",
                             f"{row.token_accuracy:.10g}", f"{row.sequence_accuracy:.10g}"])


def read_metrics(path) -> list:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != METRICS_FIELDS:
            raise DataError(f"{path} is not a metrics file (header {reader.fieldnames})")
        for rec in reader:
            rows.append(MetricsRow(
                epoch=int(rec["epoch"]),
                split=rec["split"],
                loss=float(rec["loss"]),
                token_accuracy=float(rec["token_accuracy"]),
                sequence_accuracy=float(rec["sequence_accuracy"]),
            ))
    return rows


def render_curves(metrics_path, out_dir=None, max_epochs: int = 0, formats=("png", "svg")):
    """Accuracy-versus-epoch figure rendered next to the metrics CSV."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_metrics(metrics_path)
    if not rows:
        raise DataError(f"{metrics_path} holds no metric rows")
    metrics_path = Path(metrics_path)
    out_dir = Path(out_dir) if out_dir else metrics_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    for split, style in (("train", "--"), ("val", "-")):
        pts = [(r.epoch, r.token_accuracy) for r in rows if r.split == split]
        if max_epochs > 0:
            pts = [p for p in pts if p[0] <= max_epochs]
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], style,
                    marker=".", label=f"{split} token accuracy")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    written = []
    for fmt in formats:
        target = out_dir / f"{metrics_path.stem}-accuracy.{fmt}"
        fig.savefig(target, format=fmt)
        written.append(target)
    plt.close(fig)
    return written


# ---------------------------------------------------------------------------
# translation pipeline
# ---------------------------------------------------------------------------

_NUM_TOKEN = re.compile(r"^[nN]([0-9]+)$")


def tokenize_sentence(text: str) -> list:
    """Whitespace tokens, lowercased except the literal number placeholders."""
    out = []
    for tok in text.split():
        m = _NUM_TOKEN.match(tok)
        out.append(f"N{m.group(1)}" if m else tok.lower())
    return out


@dataclass
class TranslationResult:
    words: tuple
    tag_names: tuple
    formula_token_names: tuple
    grounded: object = None
    text: str | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def translate_sentence(tag_model, trans_model, vocab: Vocabulary, text: str) -> TranslationResult:
    """predict tags, predict the formula template, combine; no post-processing."""
    words = tokenize_sentence(text)
    if not words:
        return TranslationResult((), (), (), error="empty sentence")
    indices = [vocab.encode(w) for w in words] + [Vocabulary.EOS_INDEX]
    tag_idx = tagger.predict(tag_model, indices)
    tag_names = tuple(TAGS[i] for i in tag_idx[:len(words)])
    token_idx = transducer.predict_formula(trans_model, indices)
    token_names = tuple(FORMULA_TOKENS[i] for i in token_idx)
    result = TranslationResult(tuple(words), tag_names, token_names)
    try:
        template = parse_formula(token_names)
    except FormulaParseError as err:
        result.error = f"predicted tokens do not parse: {err}"
        return result
    try:
        tagged = TaggedSentence(tuple(words), tag_names)
        grounded = instantiate(template, tagged)
    except (TaggedSentenceError, SlotIncompatibilityError) as err:
        result.error = f"template and tags are incompatible: {err}"
        return result
    result.grounded = grounded
    result.text = render_formula(grounded)
    return result


# ---------------------------------------------------------------------------
# gradient-check setup
# ---------------------------------------------------------------------------

def build_gradcheck_setup(task: str, seed: int, *, vocab_size: int = 12,
                          embed_dim: int = 4, hidden_dim: int = 5,
                          dec_hidden: int = 6, sentence_len: int = 5,
                          formula_len: int = 4):
    """Tiny model, one random example and the loss closure for gradient_check."""
    rng = make_rng(seed + 1)
    words = [int(rng.integers(1, vocab_size)) for _ in range(sentence_len)]
    if task == "tagger":
        config = tagger.TaggerConfig(in_vocab=vocab_size, window_half_width=1,
                                     embed_dim=embed_dim, hidden_dim=hidden_dim)
        model = tagger.TaggerModel.init(config, seed)
        gold = [int(rng.integers(len(TAGS))) for _ in range(sentence_len)]
        batch = [(words, gold)]
        fn = lambda: tagger.loss_and_grads(model, batch)
    elif task == "transducer":
        config = transducer.TransducerConfig(in_vocab=vocab_size, embed_dim=embed_dim,
                                             enc_hidden=hidden_dim, dec_hidden=dec_hidden,
                                             max_output_len=formula_len + 2)
        model = transducer.TransducerModel.init(config, seed)
        gold = [int(rng.integers(1, len(FORMULA_TOKENS))) for _ in range(formula_len)]
        batch = [(words, gold)]
        fn = lambda: transducer.loss_and_grads(model, batch)
    else:
        raise DataError(f"unknown task {task!r}")
    return model, fn


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    kv = read_kv_config(args.config) if args.config else {}
    if args.seed is not None:
        kv["seed"] = str(args.seed)
    grammar = grammar_config_from_kv(kv)
    lex = lexicon_from_kv(kv)
    cfg = CorpusConfig(
        grammar=grammar,
        examples_per_template=int(kv.get("examples_per_template", "10")),
        test_size=int(kv.get("test_size", "0")),
        seed=int(kv.get("seed", "0")),
        max_retries=int(kv.get("max_retries", "100")),
    )
    templates = corpus.expand_grammar(grammar)
    train, test = generate_dataset(cfg, lex)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    chash = grammar.config_hash()
    write_dataset(out / "train.tsv", train, seed=cfg.seed, config_hash=chash,
                  generator_version=__version__)
    write_dataset(out / "test.tsv", test, seed=cfg.seed, config_hash=chash,
                  generator_version=__version__)
    vocab = build_vocab(train)
    formulas = {t.formula_token_seq for t in templates}
    print(f"sentence templates: {len(templates)}")
    print(f"formula templates:  {len(formulas)}")
    print(f"train examples:     {len(train)} -> {out / 'train.tsv'}")
    print(f"test examples:      {len(test)} -> {out / 'test.tsv'}")
    print(f"vocabulary size:    {len(vocab)} (reserved entries included)")
    return EXIT_OK


def cmd_train(args) -> int:
    base = RunConfig()
    if args.config:
        base = run_config_from_kv(read_kv_config(args.config), base)
    overrides = {}
    if args.task:
        overrides["task"] = args.task
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.train:
        overrides["train_path"] = args.train
    if args.out:
        overrides["out_dir"] = args.out
    run = replace(base, **overrides)
    run.validate()
    if not run.train_path:
        raise DataError("no training set: pass --train or set train_path")
    train_examples, _ = read_dataset(run.train_path)
    model, vocab, rows = train_model(run, train_examples, log=lambda s: print(s, flush=True))
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / f"{run.task}.ckpt"
    metrics_path = out / f"{run.task}-metrics.csv"
    checkpoint_save(ckpt_path, model_to_checkpoint(model, vocab, run))
    write_metrics(metrics_path, rows)
    print(f"checkpoint: {ckpt_path}")
    print(f"metrics:    {metrics_path}")
    if not args.no_curves and rows:
        for target in render_curves(metrics_path):
            print(f"curve:      {target}")
    return EXIT_OK


def _load_checkpoint_arg(args) -> Checkpoint:
    given = [p for p in (args.tagger_ckpt, args.transducer_ckpt) if p]
    if len(given) != 1:
        raise DataError("pass exactly one of --tagger-ckpt / --transducer-ckpt")
    return checkpoint_load(given[0])


def cmd_eval(args) -> int:
    ckpt = _load_checkpoint_arg(args)
    task, model, vocab = model_from_checkpoint(ckpt)
    data_path = args.test or args.train
    if not data_path:
        raise DataError("no dataset: pass --test (or --train)")
    examples, _ = read_dataset(data_path)
    encoded = encode_examples(task, vocab, examples)
    loss, token_acc, seq_acc = evaluate_model(task, model, encoded)
    print(f"task:              {task}")
    print(f"examples:          {len(examples)}")
    print(f"loss:              {loss:.6f}")
    print(f"token accuracy:    {token_acc:.6f}")
    print(f"sequence accuracy: {seq_acc:.6f}")
    return EXIT_OK


def cmd_translate(args) -> int:
    if not args.tagger_ckpt or not args.transducer_ckpt:
        raise DataError("translate needs both --tagger-ckpt and --transducer-ckpt")
    task_t, tag_model, vocab_t = model_from_checkpoint(checkpoint_load(args.tagger_ckpt))
    task_x, trans_model, vocab_x = model_from_checkpoint(checkpoint_load(args.transducer_ckpt))
    if task_t != "tagger" or task_x != "transducer":
        raise DataError(f"checkpoints hold tasks {task_t}/{task_x}, "
                        "expected tagger/transducer")
    if vocab_t.words != vocab_x.words:
        raise DataError("the two checkpoints were trained on different vocabularies")
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        result = translate_sentence(tag_model, trans_model, vocab_t, args.sentence)
    if result.ok:
        print(result.text)
        return EXIT_OK
    print(f"predicted tags:           {' '.join(result.tag_names)}", file=sys.stderr)
    print(f"predicted formula tokens: {' '.join(result.formula_token_names)}", file=sys.stderr)
    print(f"error: {result.error}", file=sys.stderr)
    return EXIT_INCOMPATIBLE


def cmd_gradcheck(args) -> int:
    model, fn = build_gradcheck_setup(args.task, args.seed if args.seed is not None else 0)
    params = model.param_dict()
    if args.corrupt:
        if args.corrupt not in params:
            raise DataError(f"no parameter named {args.corrupt!r} to corrupt")
        clean = fn
        def fn():
            loss, grads = clean()
            grads = dict(grads)
            grads[args.corrupt] = grads[args.corrupt] * 1.01
            return loss, grads
    report = nn.gradient_check(fn, params, step=1e-5, tol=1e-4,
                               rng=make_rng(args.seed if args.seed is not None else 0))
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_export_curves(args) -> int:
    written = render_curves(args.metrics, out_dir=args.out, max_epochs=args.max_epochs)
    for target in written:
        print(target)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="owl2seq",
                     description="Definitory sentences to description-logic axioms "
                                 "with two GRU networks.")
    parser.add_argument("--version", action="version", version=f"owl2seq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="expand the grammar and write train/test files")
    p.add_argument("--config", help="key=value grammar/corpus configuration file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one network and write checkpoint + metrics")
    p.add_argument("--config", help="key=value run configuration file")
    p.add_argument("--task", choices=("tagger", "transducer"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--train", help="training dataset path")
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-curves", action="store_true",
                   help="skip rendering the accuracy curve figures")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--tagger-ckpt")
    p.add_argument("--transducer-ckpt")
    p.add_argument("--train", help="dataset path (alternative to --test)")
    p.add_argument("--test", help="dataset path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("translate", help="sentence -> grounded formula via both networks")
    p.add_argument("--tagger-ckpt", required=True)
    p.add_argument("--transducer-ckpt", required=True)
    p.add_argument("sentence", help="the input sentence (quoted)")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the exact gradients")
    p.add_argument("--task", choices=("tagger", "transducer"), required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--corrupt", help="test hook: scale this parameter's gradient by 1.01")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("export-curves", help="render accuracy curves from a metrics CSV")
    p.add_argument("metrics", help="metrics CSV written by train")
    p.add_argument("--out", help="output directory (defaults to the CSV's)")
    p.add_argument("--max-epochs", type=int, default=0,
                   help="only plot the first N epochs")
    p.set_defaults(func=cmd_export_curves)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, GenerationError, CheckpointError, FileNotFoundError,
            IsADirectoryError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except nn.NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
