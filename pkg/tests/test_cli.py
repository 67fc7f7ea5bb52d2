import io

import numpy as np
import pytest

from parasent.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, run
from parasent.data import synthetic_paraphrase_corpus, synthetic_scored_pairs
from parasent.encoders import EncoderConfig, SentenceEncoder
from parasent.model import ParaphraseModel


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = synthetic_paraphrase_corpus(n_pairs=30, vocab_size=36, dim=6, seed=0, n_held_out=12)
    (root / "vectors.txt").write_text("\n".join(data.embedding_lines()) + "\n", encoding="utf-8")
    (root / "pairs.tsv").write_text("".join(f"{a}\t{b}\n" for a, b in data.train), encoding="utf-8")
    rng = np.random.default_rng(0)
    for name in ("sts-a", "sts-b", "sts-c"):
        rows = [(a, b, float(rng.uniform(0, 5))) for a, b in data.held_out]
        (root / f"{name}.tsv").write_text("".join(f"{a}\t{b}\t{y}\n" for a, b, y in rows), encoding="utf-8")
    (root / "manifest.txt").write_text("old: sts-a.tsv, sts-b.tsv\nnew: sts-c.tsv\n", encoding="utf-8")
    scored, _ = synthetic_scored_pairs(n_pairs=12, vocab_size=36, dim=6, seed=1)
    words = data.table.tokens()[:36]
    remap = {f"t{i:02d}": words[i] for i in range(36)}
    text = "".join(" ".join(remap[w] for w in a.split()) + "\t" + " ".join(remap[w] for w in b.split())
                   + f"\t{y}\n" for a, b, y in scored)
    (root / "scored.tsv").write_text(text, encoding="utf-8")
    (root / "sentences.txt").write_text(data.held_out[0][0] + "\n", encoding="utf-8")
    w = words
    (root / "tagged.conll").write_text(
        f"1\t{w[0]}\tDT\t2\tdet\n2\t{w[7]}\tNN\t0\troot\n\n1\t{w[12]}\tNN\t0\troot\n2\tqqq\tIN\t1\tprep\n",
        encoding="utf-8")
    code, _, err = call("train-transfer", "--embeddings", root / "vectors.txt", "--corpus", root / "pairs.tsv",
                        "--output", root / "gran.ck", "--encoder", "gran1", "--epochs", 1, "--batch-size", 10)
    assert code == EXIT_OK, err
    return root


class TestTrainTransfer:
    def test_writes_checkpoint(self, work):
        code, out, err = call("train-transfer", "--embeddings", work / "vectors.txt", "--corpus", work / "pairs.tsv",
                              "--output", work / "avg.ck", "--encoder", "avg", "--epochs", 2, "--batch-size", 10)
        assert code == EXIT_OK, err
        assert out.count("epoch ") == 2 and "wrote" in out
        assert ParaphraseModel.load(work / "avg.ck").encoder.kind == "avg"

    def test_echo_and_seed(self, work):
        _, _, err = call("train-transfer", "--embeddings", work / "vectors.txt", "--corpus", work / "pairs.tsv",
                         "--output", work / "echo.ck", "--epochs", 0, "--seed", 17)
        assert "effective config (seed 17)" in err
        assert "#   seed = 17" in err
        assert "#   encoder = gran1" in err

    def test_off_grid_delta_warns(self, work):
        code, _, err = call("train-transfer", "--embeddings", work / "vectors.txt", "--corpus", work / "pairs.tsv",
                            "--output", work / "off.ck", "--epochs", 0, "--delta", 0.9)
        assert code == EXIT_OK
        assert "warning:" in err and "0.9" in err

    def test_flag_overrides_file(self, work):
        cfg = work / "run.cfg"
        cfg.write_text(f"embeddings = {work / 'vectors.txt'}\ncorpus = {work / 'pairs.tsv'}\n"
                       f"output = {work / 'cfg.ck'}\ndelta = 0.4\nepochs = 0\n", encoding="utf-8")
        code, _, err = call("train-transfer", "--config", cfg, "--delta", 0.6)
        assert code == EXIT_OK, err
        assert "#   delta = 0.6" in err

    def test_rerun_from_echo_is_bitwise(self, work):
        args = ("train-transfer", "--embeddings", work / "vectors.txt", "--corpus", work / "pairs.tsv",
                "--encoder", "lstmavg", "--epochs", 1, "--batch-size", 10, "--dropout", 0.1, "--scramble", 0.5,
                "--word-dropout", 0.1, "--seed", 3)
        code, out1, err = call(*args, "--output", work / "r1.ck")
        assert code == EXIT_OK, err
        echoed = "".join(line[4:] + "\n" for line in err.splitlines() if line.startswith("#   "))
        cfg = work / "echo.cfg"
        cfg.write_text(echoed.replace(str(work / "r1.ck"), str(work / "r2.ck")), encoding="utf-8")
        code, out2, err = call("train-transfer", "--config", cfg)
        assert code == EXIT_OK, err
        assert (work / "r1.ck").read_bytes() == (work / "r2.ck").read_bytes()
        assert out1.replace("r1.ck", "") == out2.replace("r2.ck", "")

    def test_missing_required(self, work):
        code, _, err = call("train-transfer", "--corpus", work / "pairs.tsv")
        assert code == EXIT_USAGE
        assert "usage:" in err and "--embeddings" in err and "--output" in err

    def test_unknown_config_key(self, work):
        cfg = work / "bad.cfg"
        cfg.write_text("margin = 0.4\n", encoding="utf-8")
        code, _, err = call("train-transfer", "--config", cfg)
        assert code == EXIT_USAGE
        assert "margin" in err and "valid keys" in err and "delta" in err

    def test_malformed_corpus(self, work):
        bad = work / "bad.tsv"
        bad.write_text("only one column\n", encoding="utf-8")
        code, _, err = call("train-transfer", "--embeddings", work / "vectors.txt", "--corpus", bad,
                            "--output", work / "x.ck")
        assert code == EXIT_DATA
        assert "line 1" in err

    def test_missing_file(self, work):
        code, _, _ = call("train-transfer", "--embeddings", work / "nope.txt", "--corpus", work / "pairs.tsv",
                          "--output", work / "x.ck")
        assert code == EXIT_DATA

    def test_bad_rate(self, work):
        code, _, _ = call("train-transfer", "--embeddings", work / "vectors.txt", "--corpus", work / "pairs.tsv",
                          "--output", work / "x.ck", "--dropout", 1.0)
        assert code == EXIT_USAGE


class TestTrainSupervised:
    def test_fresh(self, work):
        code, out, err = call("train-supervised", "--embeddings", work / "vectors.txt", "--train", work / "scored.tsv",
                              "--dev", work / "scored.tsv", "--output", work / "sup.ck", "--encoder", "avg",
                              "--epochs", 2, "--batch-size", 4, "--head-hidden", 4)
        assert code == EXIT_OK, err
        assert "dev pearson" in out and "best epoch" in out
        model = ParaphraseModel.load(work / "sup.ck")
        assert model.has_head and model.K == 5

    def test_batch_size_default(self, work):
        args = ("train-supervised", "--embeddings", work / "vectors.txt", "--train", work / "scored.tsv",
                "--output", work / "b.ck", "--encoder", "avg", "--epochs", 0)
        assert "#   batch_size = 25" in call(*args)[2]
        cfg = work / "batch.cfg"
        cfg.write_text("batch_size = 10\n", encoding="utf-8")
        assert "#   batch_size = 10" in call(*args, "--config", cfg)[2]
        assert "#   batch_size = 4" in call(*args, "--config", cfg, "--batch-size", 4)[2]

    def test_universal(self, work):
        code, out, err = call("train-supervised", "--init-checkpoint", work / "gran.ck", "--train", work / "scored.tsv",
                              "--output", work / "uni.ck", "--encoder", "gran1", "--epochs", 1, "--lambda-w", 10)
        assert code == EXIT_OK, err

    def test_universal_mismatch(self, work):
        code, _, err = call("train-supervised", "--init-checkpoint", work / "gran.ck", "--train", work / "scored.tsv",
                            "--output", work / "uni.ck", "--encoder", "lstm", "--epochs", 1)
        assert code == EXIT_USAGE
        assert "match" in err

    def test_needs_vectors(self, work):
        code, _, _ = call("train-supervised", "--train", work / "scored.tsv", "--output", work / "x.ck")
        assert code == EXIT_USAGE

    def test_gold_out_of_range(self, work):
        code, _, _ = call("train-supervised", "--embeddings", work / "vectors.txt", "--train", work / "scored.tsv",
                          "--output", work / "x.ck", "--gold-max", 1.0)
        assert code == EXIT_DATA


class TestEvaluate:
    def test_table_and_selection(self, work):
        code, _, err = call("train-transfer", "--embeddings", work / "vectors.txt", "--corpus", work / "pairs.tsv",
                            "--output", work / "e2.ck", "--encoder", "avg", "--epochs", 1, "--batch-size", 10)
        assert code == EXIT_OK, err
        code, out, err = call("evaluate", "--checkpoint", work / "gran.ck", "--checkpoint", work / "e2.ck",
                              "--manifest", work / "manifest.txt", "--selection", "test", "--held-out-group", "new",
                              "--output", work / "report.tsv")
        assert code == EXIT_OK, err
        assert out.splitlines()[0].split() == ["model", "group", "dataset", "pearson", "spearman"]
        assert "selection: test" in out and "winner:" in out
        tsv = (work / "report.tsv").read_text().splitlines()
        assert len(tsv) == 1 + 2 * (3 + 2)

    def test_repeatable(self, work):
        args = ("evaluate", "--checkpoint", work / "gran.ck", "--manifest", work / "manifest.txt")
        assert call(*args)[1] == call(*args)[1]

    def test_test_selection_needs_group(self, work):
        code, _, _ = call("evaluate", "--checkpoint", work / "gran.ck", "--manifest", work / "manifest.txt",
                          "--selection", "test")
        assert code == EXIT_USAGE

    def test_zero_embedding_is_numerical(self, work):
        table_model = ParaphraseModel.load(work / "gran.ck")
        enc = SentenceEncoder(EncoderConfig("avg"), table_model.table.dim)
        zero = ParaphraseModel(table_model.table, enc, {"W_w": np.zeros_like(table_model.table.W_w)})
        zero.save(work / "zero.ck")
        code, _, err = call("evaluate", "--checkpoint", work / "zero.ck", "--manifest", work / "manifest.txt")
        assert code == EXIT_NUMERIC
        assert "zero" in err

    def test_bad_checkpoint(self, work):
        bad = work / "bad.ck"
        bad.write_text("hello\n", encoding="utf-8")
        code, _, err = call("evaluate", "--checkpoint", bad, "--manifest", work / "manifest.txt")
        assert code == EXIT_DATA


class TestEmbed:
    def test_one_line(self, work):
        code, out, err = call("embed", "--checkpoint", work / "gran.ck", "--input", work / "sentences.txt")
        assert code == EXIT_OK, err
        lines = out.splitlines()
        assert len(lines) == 1
        values = [float(v) for v in lines[0].split(" ")]
        assert len(values) == 6
        model = ParaphraseModel.load(work / "gran.ck")
        sentence = (work / "sentences.txt").read_text().strip()
        np.testing.assert_array_equal(values, model.embed([sentence])[0])

    def test_to_file(self, work):
        code, out, _ = call("embed", "--checkpoint", work / "gran.ck", "--input", work / "sentences.txt",
                            "--output", work / "emb.txt")
        assert code == EXIT_OK and out == ""
        assert len((work / "emb.txt").read_text().split()) == 6

    def test_two_checkpoints(self, work):
        code, _, _ = call("embed", "--checkpoint", work / "gran.ck", "--checkpoint", work / "gran.ck",
                          "--input", work / "sentences.txt")
        assert code == EXIT_USAGE


class TestGradcheck:
    def test_spec_example(self):
        code, out, _ = call("gradcheck", "--encoder", "gran1", "--dim", 6, "--seed", 1)
        assert code == EXIT_OK
        assert "margin loss" in out and "kl loss" in out
        assert out.splitlines()[-1].startswith("max relative error") and "PASS" in out

    def test_failure_exit_code(self):
        code, out, _ = call("gradcheck", "--encoder", "avg", "--loss", "margin", "--tolerance", 1e-30)
        assert code == EXIT_NUMERIC
        assert "FAIL" in out

    def test_bidirectional(self):
        code, out, _ = call("gradcheck", "--encoder", "lstmavg", "--bidirectional", "--combine", "tanh",
                            "--dim", 3, "--loss", "kl")
        assert code == EXIT_OK, out
        assert "(bidirectional)" in out


class TestAnalyzeGates:
    def test_table(self, work):
        code, out, err = call("analyze-gates", "--checkpoint", work / "gran.ck", "--tagged", work / "tagged.conll",
                              "--group-by", "pos")
        assert code == EXIT_OK, err
        rows = [line.split("\t") for line in out.splitlines() if not line.startswith("#")]
        assert sorted(r[0] for r in rows) == ["DT", "IN", "NN"]
        assert sum(int(r[2]) for r in rows) == 4
        assert "# skipped 0" in out

    def test_top_k_and_cap(self, work):
        tagged = work / "short.conll"
        tagged.write_text((work / "tagged.conll").read_text() + "\n1\tqqq\tVB\t0\troot\n", encoding="utf-8")
        code, out, _ = call("analyze-gates", "--checkpoint", work / "gran.ck", "--tagged", tagged,
                            "--top-k", 1, "--token-cap", 1)
        assert code == EXIT_OK
        rows = [line for line in out.splitlines() if not line.startswith("#")]
        assert len(rows) == 1
        assert "# skipped 2" in out

    def test_non_gran(self, work):
        table = ParaphraseModel.load(work / "gran.ck").table
        ParaphraseModel(table, SentenceEncoder(EncoderConfig("avg"), table.dim), {"W_w": table.W_w}).save(work / "a.ck")
        code, _, err = call("analyze-gates", "--checkpoint", work / "a.ck", "--tagged", work / "tagged.conll")
        assert code == EXIT_USAGE, err

    def test_malformed(self, work):
        bad = work / "bad.conll"
        bad.write_text("1\tx\tNN\t0\n", encoding="utf-8")
        code, _, err = call("analyze-gates", "--checkpoint", work / "gran.ck", "--tagged", bad)
        assert code == EXIT_DATA and "line 1" in err


class TestParser:
    def test_unknown_command(self):
        assert call("fly")[0] == EXIT_USAGE

    def test_bad_choice(self):
        assert call("gradcheck", "--loss", "hinge")[0] == EXIT_USAGE

    def test_version(self):
        code, _, _ = call("--version")
        assert code == EXIT_OK
