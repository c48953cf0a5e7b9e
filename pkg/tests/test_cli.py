"""Command-line surface: configs, corpus files, training, eval, translate."""

import numpy as np
import pytest

from owl2seq import cli, corpus, dlkit, nn, tagger, transducer
from owl2seq.checkpoint import checkpoint_load, checkpoint_save
from owl2seq.cli import (
    EXIT_DATA,
    EXIT_INCOMPATIBLE,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    MetricsRow,
    RunConfig,
    encode_examples,
    evaluate_model,
    main,
    model_from_checkpoint,
    model_to_checkpoint,
    read_metrics,
    render_curves,
    run_config_from_kv,
    tokenize_sentence,
    translate_sentence,
    write_metrics,
)
from owl2seq.corpus import build_vocab, read_dataset

TINY_CORPUS_KV = """\
# three-template toy grammar
card_ops=EQ
two_card_pairs=
enable_exists=true
lhs_single_kinds=concept
rhs_single_kinds=concept,exists,card
lhs_pair_kinds=
rhs_pair_kinds=
pair_conns=AND
variants=1
verbs=6
adjectives=3
nouns1=4
nouns2=4
examples_per_template=2
test_size=4
seed=5
"""


@pytest.fixture()
def tiny_corpus_dir(tmp_path):
    config = tmp_path / "corpus.conf"
    config.write_text(TINY_CORPUS_KV)
    out = tmp_path / "corpus"
    assert main(["gen-corpus", "--config", str(config), "--out", str(out)]) == EXIT_OK
    return out


class TestRunConfig:
    def test_defaults_are_the_full_scale_parameters(self):
        run = RunConfig()
        assert run.epochs == 150
        assert run.batch_size == 128
        assert run.lr == 2.0
        assert run.rho == 0.95
        assert run.epsilon == 1e-6
        assert run.embed_dim == 100
        assert run.hidden_dim == 200
        assert run.enc_hidden == 1000
        assert run.dec_hidden == 1000
        assert run.split_ratio == 0.9

    def test_kv_overrides_and_unknown_keys(self):
        run = run_config_from_kv({"epochs": "3", "lr": "1.5", "task": "transducer"})
        assert (run.epochs, run.lr, run.task) == (3, 1.5, "transducer")
        with pytest.raises(cli.DataError, match="unknown run-config key"):
            run_config_from_kv({"nonsense": "1"})

    def test_validation(self):
        with pytest.raises(cli.DataError):
            RunConfig(task="parser").validate()
        with pytest.raises(cli.DataError):
            RunConfig(batch_size=0).validate()


class TestGenCorpus:
    def test_tiny_counts(self, tiny_corpus_dir):
        train, header = read_dataset(tiny_corpus_dir / "train.tsv")
        test, _ = read_dataset(tiny_corpus_dir / "test.tsv")
        # 1 lhs x (concept + exists + one card op) = 3 templates, 1 variant each
        assert len(train) == 3 * 2
        assert len(test) == 4
        assert header["seed"] == "5"
        assert not ({e.words for e in train} & {e.words for e in test})

    def test_byte_identical_across_runs(self, tmp_path):
        config = tmp_path / "corpus.conf"
        config.write_text(TINY_CORPUS_KV)
        outs = []
        for name in ("one", "two"):
            out = tmp_path / name
            assert main(["gen-corpus", "--config", str(config), "--out", str(out)]) == EXIT_OK
            outs.append(out)
        assert (outs[0] / "train.tsv").read_bytes() == (outs[1] / "train.tsv").read_bytes()
        assert (outs[0] / "test.tsv").read_bytes() == (outs[1] / "test.tsv").read_bytes()

    def test_seed_flag_changes_output(self, tmp_path):
        config = tmp_path / "corpus.conf"
        config.write_text(TINY_CORPUS_KV)
        a, b = tmp_path / "a", tmp_path / "b"
        main(["gen-corpus", "--config", str(config), "--out", str(a)])
        main(["gen-corpus", "--config", str(config), "--seed", "99", "--out", str(b)])
        assert (a / "train.tsv").read_bytes() != (b / "train.tsv").read_bytes()


class TestTrainCommand:
    def run_conf(self, tmp_path, **kv):
        lines = {"task": "tagger", "epochs": "2", "batch_size": "16",
                 "window_half_width": "1", "embed_dim": "8", "hidden_dim": "12",
                 "enc_hidden": "12", "dec_hidden": "12", "seed": "3"}
        lines.update({k: str(v) for k, v in kv.items()})
        path = tmp_path / "run.conf"
        path.write_text("".join(f"{k}={v}\n" for k, v in lines.items()))
        return path

    def test_zero_epochs_checkpoint_equals_initialization(self, tmp_path, tiny_corpus_dir):
        conf = self.run_conf(tmp_path, epochs=0)
        out = tmp_path / "run"
        code = main(["train", "--config", str(conf), "--train",
                     str(tiny_corpus_dir / "train.tsv"), "--out", str(out),
                     "--no-curves"])
        assert code == EXIT_OK
        ckpt = checkpoint_load(out / "tagger.ckpt")
        _, model, vocab = model_from_checkpoint(ckpt)
        train, _ = read_dataset(tiny_corpus_dir / "train.tsv")
        expected = tagger.TaggerModel.init(
            tagger.TaggerConfig(in_vocab=len(build_vocab(train)),
                                window_half_width=1, embed_dim=8, hidden_dim=12),
            seed=3,
        )
        for name, p in expected.param_dict().items():
            np.testing.assert_array_equal(model.param_dict()[name], p)
        assert read_metrics(out / "tagger-metrics.csv") == []

    def test_metrics_invariants_and_determinism(self, tmp_path, tiny_corpus_dir):
        conf = self.run_conf(tmp_path, epochs=3)
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            code = main(["train", "--config", str(conf), "--train",
                         str(tiny_corpus_dir / "train.tsv"), "--out", str(out),
                         "--no-curves"])
            assert code == EXIT_OK
            outs.append(out)
        rows = read_metrics(outs[0] / "tagger-metrics.csv")
        by_split = {}
        for row in rows:
            by_split.setdefault(row.split, []).append(row.epoch)
            assert 0.0 <= row.token_accuracy <= 1.0
            assert 0.0 <= row.sequence_accuracy <= 1.0
        for split, epochs in by_split.items():
            assert epochs == sorted(set(epochs)), split
        assert (outs[0] / "tagger-metrics.csv").read_bytes() == \
            (outs[1] / "tagger-metrics.csv").read_bytes()
        assert (outs[0] / "tagger.ckpt").read_bytes() == (outs[1] / "tagger.ckpt").read_bytes()

    def test_checkpoint_round_trip_preserves_forward(self, tmp_path, tiny_corpus_dir):
        train, _ = read_dataset(tiny_corpus_dir / "train.tsv")
        run = RunConfig(task="transducer", seed=2, epochs=1, batch_size=8,
                        embed_dim=6, enc_hidden=8, dec_hidden=9)
        model, vocab, _ = cli.train_model(run, train)
        path = tmp_path / "t.ckpt"
        checkpoint_save(path, model_to_checkpoint(model, vocab, run))
        _, loaded, loaded_vocab = model_from_checkpoint(checkpoint_load(path))
        assert loaded_vocab.words == vocab.words
        sentence = [vocab.encode(w) for w in train[0].words] + [0]
        c0 = transducer.encode(model, sentence)
        c1 = transducer.encode(loaded, sentence)
        np.testing.assert_array_equal(c0, c1)
        np.testing.assert_array_equal(
            np.stack(transducer.decode(model, c0, 6)),
            np.stack(transducer.decode(loaded, c1, 6)),
        )


class TestEvaluate:
    def test_zero_weight_tagger_accuracy_is_eos_frequency(self, tiny_corpus_dir):
        train, _ = read_dataset(tiny_corpus_dir / "train.tsv")
        vocab = build_vocab(train)
        model = tagger.TaggerModel.init(
            tagger.TaggerConfig(in_vocab=len(vocab), window_half_width=1,
                                embed_dim=4, hidden_dim=5), 0)
        for p in model.param_dict().values():
            p[:] = 0.0
        encoded = encode_examples("tagger", vocab, train)
        _, token_acc, seq_acc = evaluate_model("tagger", model, encoded)
        # zero weights predict tag 0 everywhere; gold index 0 appears exactly
        # once per example (the appended EOS step)
        positions = sum(len(w) + 1 for w, _ in encoded)
        zeros = sum(1 for w, t in encoded for g in list(t) + [0] if g == 0)
        assert zeros == len(encoded)
        assert token_acc == pytest.approx(zeros / positions)
        assert seq_acc == 0.0

    def test_eval_command_output(self, tmp_path, tiny_corpus_dir, capsys):
        conf = tmp_path / "run.conf"
        conf.write_text("task=tagger\nepochs=1\nbatch_size=8\nwindow_half_width=1\n"
                        "embed_dim=6\nhidden_dim=8\nseed=1\n")
        out = tmp_path / "run"
        main(["train", "--config", str(conf), "--train",
              str(tiny_corpus_dir / "train.tsv"), "--out", str(out), "--no-curves"])
        capsys.readouterr()
        code = main(["eval", "--tagger-ckpt", str(out / "tagger.ckpt"),
                     "--test", str(tiny_corpus_dir / "test.tsv")])
        assert code == EXIT_OK
        printed = capsys.readouterr().out
        assert "token accuracy" in printed and "sequence accuracy" in printed

    def test_eval_requires_exactly_one_checkpoint(self, tiny_corpus_dir):
        code = main(["eval", "--test", str(tiny_corpus_dir / "test.tsv")])
        assert code == EXIT_DATA

    def test_forced_correct_model_scores_perfectly(self, tmp_path):
        # a head solved to reproduce the gold tags scores 1.0 / 1.0 on the
        # sentence it was built for
        words = ["bee", "is", "insect"]
        _, _, tag_model, _, vocab = forced_models(
            tmp_path, words, ["C0", "w", "C1"], ["C0", "SUBSUMES", "C1"])
        ex = corpus.Example(words=tuple(words), tags=("C0", "w", "C1"),
                            formula_tokens=("C0", "SUBSUMES", "C1"),
                            template_id="x")
        encoded = encode_examples("tagger", vocab, [ex])
        _, token_acc, seq_acc = evaluate_model("tagger", tag_model, encoded)
        assert (token_acc, seq_acc) == (1.0, 1.0)

    def test_vocabulary_mismatch_is_an_explicit_error(self, tmp_path):
        tag_path, *_ = forced_models(
            tmp_path, ["bee", "is", "insect"], ["C0", "w", "C1"],
            ["C0", "SUBSUMES", "C1"])
        ckpt = checkpoint_load(tag_path)
        ckpt.vocab_tables["words"] = ckpt.vocab_tables["words"][:-1]
        broken = tmp_path / "broken.ckpt"
        checkpoint_save(broken, ckpt)
        with pytest.raises(cli.DataError, match="vocabulary"):
            model_from_checkpoint(checkpoint_load(broken))


def forced_models(tmp_path, words, tags, formula_tokens):
    """Craft genuine model files whose predictions on one sentence are fixed.

    The output heads are solved by least squares over the recurrent states,
    so the files are ordinary checkpoints with designed behavior.
    """
    ex = corpus.Example(words=tuple(words), tags=("w",) * len(words),
                        formula_tokens=("C0", "SUBSUMES", "C1"), template_id="x")
    vocab = build_vocab([ex])
    indices = [vocab.encode(w) for w in words] + [0]

    tag_run = RunConfig(task="tagger", seed=6, window_half_width=1,
                        embed_dim=6, hidden_dim=10)
    tag_model = tagger.TaggerModel.init(
        tagger.TaggerConfig(in_vocab=len(vocab), window_half_width=1,
                            embed_dim=6, hidden_dim=10), 6)
    _, hs, _ = tagger._batch_forward(
        tag_model, tagger._batch_windows(tag_model, [indices], len(indices)))
    H = np.stack([h[0] for h in hs], axis=1)  # (hidden, len)
    targets = list(tags) + ["EOS"]
    T = np.full((len(dlkit.TAGS), len(targets)), -30.0)
    for j, t in enumerate(targets):
        T[dlkit.TAG_INDEX[t], j] = 30.0
    tag_model.head.W = T @ np.linalg.pinv(H)
    tag_model.head.b = np.zeros(len(dlkit.TAGS))

    trans_run = RunConfig(task="transducer", seed=6, embed_dim=6,
                          enc_hidden=8, dec_hidden=12)
    trans_model = transducer.TransducerModel.init(
        transducer.TransducerConfig(in_vocab=len(vocab), embed_dim=6,
                                    enc_hidden=8, dec_hidden=12,
                                    max_output_len=len(formula_tokens) + 3), 6)
    context = transducer.encode(trans_model, indices)
    steps = len(formula_tokens) + 1
    states = []
    h = np.zeros(12)
    for _ in range(steps):
        h, _ = nn.gru_step(trans_model.decoder, context, h)
        states.append(h)
    Hd = np.stack(states, axis=1)
    names = list(formula_tokens) + ["EOS"]
    Td = np.full((len(dlkit.FORMULA_TOKENS), steps), -30.0)
    for j, name in enumerate(names):
        Td[dlkit.FORMULA_TOKEN_INDEX[name], j] = 30.0
    trans_model.head.W = Td @ np.linalg.pinv(Hd)
    trans_model.head.b = np.zeros(len(dlkit.FORMULA_TOKENS))

    tag_path = tmp_path / "tagger.ckpt"
    trans_path = tmp_path / "transducer.ckpt"
    checkpoint_save(tag_path, model_to_checkpoint(tag_model, vocab, tag_run))
    checkpoint_save(trans_path, model_to_checkpoint(trans_model, vocab, trans_run))
    return tag_path, trans_path, tag_model, trans_model, vocab


class TestTranslate:
    def test_composition_matches_manual_pipeline(self, tmp_path):
        words = ["bee", "is", "insect"]
        tag_path, trans_path, tag_model, trans_model, vocab = forced_models(
            tmp_path, words, ["C0", "w", "C1"], ["C0", "SUBSUMES", "C1"])
        sentence = "bee is insect"
        result = translate_sentence(tag_model, trans_model, vocab, sentence)
        assert result.ok
        assert result.text == "bee ⊑ insect"
        # manual composition: predict tags, predict tokens, parse, instantiate
        indices = [vocab.encode(w) for w in words] + [0]
        tag_names = tuple(dlkit.TAGS[i] for i in
                          tagger.predict(tag_model, indices)[:len(words)])
        token_names = tuple(dlkit.FORMULA_TOKENS[i] for i in
                            transducer.predict_formula(trans_model, indices))
        manual = dlkit.instantiate(
            dlkit.parse_formula(token_names),
            dlkit.TaggedSentence(tuple(words), tag_names))
        assert dlkit.render_formula(manual) == result.text

    def test_cli_translate_prints_formula(self, tmp_path, capsys):
        tag_path, trans_path, *_ = forced_models(
            tmp_path, ["bee", "is", "insect"], ["C0", "w", "C1"],
            ["C0", "SUBSUMES", "C1"])
        code = main(["translate", "--tagger-ckpt", str(tag_path),
                     "--transducer-ckpt", str(trans_path), "bee is insect"])
        assert code == EXIT_OK
        assert capsys.readouterr().out.strip() == "bee ⊑ insect"

    def test_incompatible_template_exits_4_with_both_outputs(self, tmp_path, capsys):
        tag_path, trans_path, *_ = forced_models(
            tmp_path, ["bee", "is", "insect"], ["C0", "w", "C1"],
            ["C0", "SUBSUMES", "C2"])  # template wants C2, tags only have C0/C1
        code = main(["translate", "--tagger-ckpt", str(tag_path),
                     "--transducer-ckpt", str(trans_path), "bee is insect"])
        assert code == EXIT_INCOMPATIBLE
        err = capsys.readouterr().err
        assert "C0 w C1" in err
        assert "C0 SUBSUMES C2" in err
        assert "C2" in err

    def test_unparseable_prediction_exits_4_with_raw_tokens(self, tmp_path, capsys):
        tag_path, trans_path, *_ = forced_models(
            tmp_path, ["bee", "is", "insect"], ["C0", "w", "C1"],
            ["AND", "AND"])
        code = main(["translate", "--tagger-ckpt", str(tag_path),
                     "--transducer-ckpt", str(trans_path), "bee is insect"])
        assert code == EXIT_INCOMPATIBLE
        err = capsys.readouterr().err
        assert "AND AND" in err
        assert "parse" in err

    def test_unknown_words_still_run(self, tmp_path):
        _, _, tag_model, trans_model, vocab = forced_models(
            tmp_path, ["bee", "is", "insect"], ["C0", "w", "C1"],
            ["C0", "SUBSUMES", "C1"])
        result = translate_sentence(tag_model, trans_model, vocab,
                                    "zzz qqq rrr")
        assert result.words == ("zzz", "qqq", "rrr")  # ran end to end, no crash

    def test_tokenizer_preserves_number_placeholders(self):
        assert tokenize_sentence("A Bee HAS exactly N0 legs") == \
            ["a", "bee", "has", "exactly", "N0", "legs"]
        assert tokenize_sentence("n1 stays too") == ["N1", "stays", "too"]

    def test_mismatched_vocabularies_rejected(self, tmp_path, capsys):
        tag_path, _, *_ = forced_models(
            tmp_path, ["bee", "is", "insect"], ["C0", "w", "C1"],
            ["C0", "SUBSUMES", "C1"])
        other = tmp_path / "other"
        other.mkdir()
        _, trans_path2, *_ = forced_models(
            other, ["cow", "eats", "grass"], ["C0", "w", "C1"],
            ["C0", "SUBSUMES", "C1"])
        code = main(["translate", "--tagger-ckpt", str(tag_path),
                     "--transducer-ckpt", str(trans_path2), "bee is insect"])
        assert code == EXIT_DATA


class TestGradcheckCommand:
    def test_both_tasks_pass(self, capsys):
        assert main(["gradcheck", "--task", "tagger", "--seed", "0"]) == EXIT_OK
        assert main(["gradcheck", "--task", "transducer", "--seed", "0"]) == EXIT_OK
        assert "overall max relative error" in capsys.readouterr().out

    def test_corrupted_gradient_fails(self):
        assert main(["gradcheck", "--task", "tagger", "--seed", "0",
                     "--corrupt", "W"]) == EXIT_NUMERIC

    def test_unknown_corrupt_target(self):
        assert main(["gradcheck", "--task", "tagger", "--corrupt", "nope"]) == EXIT_DATA


class TestCurves:
    def test_metrics_round_trip(self, tmp_path):
        rows = [MetricsRow(1, "train", 12.5, 0.5, 0.1),
                MetricsRow(1, "val", 3.25, 0.6, 0.2)]
        path = tmp_path / "m.csv"
        write_metrics(path, rows)
        assert read_metrics(path) == rows

    def test_render_writes_png_and_svg(self, tmp_path):
        rows = [MetricsRow(e, s, 10.0 / e, min(1.0, 0.3 * e), min(1.0, 0.2 * e))
                for e in range(1, 6) for s in ("train", "val")]
        path = tmp_path / "m.csv"
        write_metrics(path, rows)
        written = render_curves(path)
        names = {p.name for p in written}
        assert names == {"m-accuracy.png", "m-accuracy.svg"}
        for p in written:
            assert p.stat().st_size > 0

    def test_export_curves_command(self, tmp_path, capsys):
        rows = [MetricsRow(1, "val", 1.0, 0.5, 0.5)]
        path = tmp_path / "m.csv"
        write_metrics(path, rows)
        assert main(["export-curves", str(path), "--max-epochs", "10"]) == EXIT_OK
        assert "m-accuracy" in capsys.readouterr().out

    def test_not_a_metrics_file(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n1,2\n")
        assert main(["export-curves", str(bad)]) == EXIT_DATA


class TestExitCodes:
    def test_usage_error_is_exit_1(self):
        with pytest.raises(SystemExit) as err:
            main(["no-such-command"])
        assert err.value.code == EXIT_USAGE
        with pytest.raises(SystemExit) as err:
            main(["train", "--bad-flag"])
        assert err.value.code == EXIT_USAGE

    def test_missing_file_is_exit_2(self):
        assert main(["train", "--task", "tagger", "--train",
                     "/nonexistent/x.tsv", "--out", "/tmp/nope"]) == EXIT_DATA
