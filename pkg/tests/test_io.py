import numpy as np
import pytest

from parasent.autodiff import ParameterSet
from parasent.checkpoint import HEADER, read_checkpoint, write_checkpoint
from parasent.data import (
    read_pair_corpus,
    read_scored_pairs,
    rescale_gold,
    synthetic_paraphrase_corpus,
    synthetic_scored_pairs,
)
from parasent.encoders import EncoderConfig, SentenceEncoder
from parasent.exceptions import ConfigError, FormatError
from parasent.model import ParaphraseModel
from parasent.supervised import SimilarityHeadParams
from parasent.vocab import load_embeddings

from conftest import make_table


class TestReaders:
    def test_pairs(self):
        assert read_pair_corpus(["a b\tc d\n", "\n", "e\tf\r\n"]) == [("a b", "c d"), ("e", "f")]

    def test_pairs_bad_columns(self):
        with pytest.raises(FormatError) as info:
            read_pair_corpus(["a\tb\n", "a b c\n"])
        assert info.value.lineno == 2

    def test_empty_sentence(self):
        with pytest.raises(FormatError):
            read_pair_corpus([" \tb\n"])

    def test_scored(self):
        assert read_scored_pairs(["a\tb\t3.5\n"]) == [("a", "b", 3.5)]

    @pytest.mark.parametrize("score", ["x", "nan", "inf"])
    def test_bad_score(self, score):
        with pytest.raises(FormatError):
            read_scored_pairs([f"a\tb\t{score}\n"])

    def test_format_error_message_has_line(self):
        with pytest.raises(FormatError, match="line 1"):
            read_scored_pairs(["a\tb\n"])

    def test_rescale(self):
        np.testing.assert_allclose(rescale_gold([0.0, 2.5, 5.0]), [1.0, 3.0, 5.0])
        np.testing.assert_allclose(rescale_gold([1.0], gold_min=1.0, gold_max=5.0), [1.0])


class TestSynthetic:
    def test_paraphrase_corpus(self):
        data = synthetic_paraphrase_corpus(n_pairs=50, vocab_size=60, dim=8, seed=3, synonyms=6, n_held_out=5)
        assert len(data.train) == 50 and len(data.held_out) == 5
        assert data.table.dim == 8 and len(data.table) == 60 + 3
        word_set = {w: c for c, words in enumerate(data.concepts) for w in words}
        for a, b in data.train:
            assert [word_set[w] for w in a.split()] == [word_set[w] for w in b.split()]

    def test_seeded(self):
        a = synthetic_paraphrase_corpus(n_pairs=10, seed=1)
        b = synthetic_paraphrase_corpus(n_pairs=10, seed=1)
        assert a.train == b.train
        np.testing.assert_array_equal(a.table.W_w, b.table.W_w)

    def test_embedding_lines_roundtrip(self):
        data = synthetic_paraphrase_corpus(n_pairs=5, vocab_size=12, dim=3, seed=0)
        table = load_embeddings(data.embedding_lines())
        np.testing.assert_array_equal(table.W_w[:-3], data.table.W_w[:-3])
        # reserved rows are recomputed from the float32 values written out
        np.testing.assert_allclose(table.W_w[-3:], data.table.W_w[-3:], rtol=1e-6)

    def test_scored_pairs(self):
        rows, table = synthetic_scored_pairs(n_pairs=30, seed=2)
        assert len(rows) == 30
        assert all(0.0 <= y <= 5.0 for _, _, y in rows)
        assert any(y == 5.0 for _, _, y in rows) or len({y for _, _, y in rows}) > 3


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        tensors = ParameterSet(a=np.arange(6, dtype=np.float32).reshape(2, 3) / 7, b=np.array([1.5, -2.0]))
        path = tmp_path / "ck.txt"
        write_checkpoint(path, tensors, vocab=["x", "y"], meta={"k": 3})
        ck = read_checkpoint(path, shapes={"b": (2,)})
        assert ck.meta == {"k": "3"} and ck.vocab == ["x", "y"]
        np.testing.assert_array_equal(ck.tensors["a"], tensors["a"])
        assert ck.tensors["b"].shape == (2,)
        assert path.read_text().splitlines()[0] == HEADER

    def test_float64_exact(self, tmp_path):
        x = np.array([[0.1, 1 / 3, np.pi]])
        write_checkpoint(tmp_path / "c", {"x": x})
        np.testing.assert_array_equal(read_checkpoint(tmp_path / "c", dtype=np.float64).tensors["x"], x)

    @pytest.mark.parametrize("text, lineno", [
        ("not a checkpoint\n", 1),
        (f"{HEADER}\nvocab x\n", 2),
        (f"{HEADER}\nvocab 0\nw 1 2\n1.0\n", 4),
        (f"{HEADER}\nvocab 0\nw 1 1\nabc\n", 4),
        (f"{HEADER}\nvocab 0\nw 1\n", 3),
    ])
    def test_format_errors(self, tmp_path, text, lineno):
        path = tmp_path / "bad"
        path.write_text(text)
        with pytest.raises(FormatError) as info:
            read_checkpoint(path)
        assert info.value.lineno == lineno

    def test_truncated(self, tmp_path):
        path = tmp_path / "bad"
        path.write_text(f"{HEADER}\nvocab 0\nw 2 1\n1.0\n")
        with pytest.raises(FormatError, match="truncated"):
            read_checkpoint(path)

    def test_shape_mismatch(self, tmp_path):
        write_checkpoint(tmp_path / "c", {"w": np.zeros(4)})
        with pytest.raises(FormatError):
            read_checkpoint(tmp_path / "c", shapes={"w": (3,)})

    def test_unserializable_token(self, tmp_path):
        with pytest.raises(ValueError):
            write_checkpoint(tmp_path / "c", {}, vocab=["a b"])


def model_with_head(kind="gran3", add_sos=True):
    table = make_table()
    enc = SentenceEncoder(EncoderConfig(kind, bidirectional=kind != "avg", combine="tanh"), table.dim)
    params = enc.init_params(1)
    params["W_w"] = table.W_w.astype(np.float32)
    params.update(SimilarityHeadParams.init(enc.output_dim, 3, 5, 2).to_mapping())
    return ParaphraseModel(table, enc, params, add_sos=add_sos, gold_min=0.0, gold_max=5.0)


class TestModel:
    def test_save_load_roundtrip(self, tmp_path):
        model = model_with_head()
        model.save(tmp_path / "m")
        back = ParaphraseModel.load(tmp_path / "m")
        mine, theirs = model.encoder.config, back.encoder.config
        assert (theirs.kind, theirs.bidirectional, theirs.combine) == (mine.kind, mine.bidirectional, mine.combine)
        assert back.encoder.hidden == model.encoder.hidden
        assert (back.add_sos, back.add_eos) == (True, False)
        assert back.table.vocab == model.table.vocab
        for k, v in model.params.items():
            np.testing.assert_array_equal(back.params[k], np.asarray(v, dtype=np.float32))
        sentences = ["w1 w2", "w3 unknown w4"]
        np.testing.assert_array_equal(back.embed(sentences), model.embed(sentences))
        np.testing.assert_array_equal(back.predict([("w1", "w2")]), model.predict([("w1", "w2")]))

    def test_predict_on_gold_scale(self):
        model = model_with_head()
        y = model.predict([("w1 w2", "w3"), ("w4", "w4")])
        assert np.all((y >= 0.0) & (y <= 5.0))

    def test_no_head(self):
        model = model_with_head()
        for k in [k for k in model.params if k.startswith("head.")]:
            del model.params[k]
        with pytest.raises(ConfigError):
            model.predict([("w1", "w2")])

    def test_check_compatible(self):
        model = model_with_head("gran1")
        same = SentenceEncoder(EncoderConfig("gran1", bidirectional=True, combine="tanh"), model.table.dim)
        model.check_compatible(same, True, False)
        with pytest.raises(ConfigError):
            model.check_compatible(SentenceEncoder(EncoderConfig("gran2"), model.table.dim), True, False)
        with pytest.raises(ConfigError):
            model.check_compatible(same, False, False)

    def test_missing_meta(self, tmp_path):
        write_checkpoint(tmp_path / "c", {"W_w": np.zeros((3, 2))}, vocab=["a", "b", "c"])
        with pytest.raises(FormatError, match="meta"):
            ParaphraseModel.load(tmp_path / "c")

    def test_missing_tensor(self, tmp_path):
        model = model_with_head("gran1")
        params = ParameterSet(model.params)
        del params["fwd.gran.b"]
        write_checkpoint(tmp_path / "c", params, model.table.tokens(), model.meta())
        with pytest.raises(FormatError, match="fwd.gran.b"):
            ParaphraseModel.load(tmp_path / "c")

    def test_embed_empty(self):
        assert model_with_head().embed([]).shape == (0, 4)
