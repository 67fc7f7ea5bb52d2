import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from parasent.data import synthetic_paraphrase_corpus
from parasent.estimators import ParaphraseEmbedder, SimilarityRegressor
from parasent.evaluation import pearson_r


@pytest.fixture(scope="module")
def data():
    return synthetic_paraphrase_corpus(n_pairs=40, vocab_size=40, dim=6, seed=2, n_held_out=10)


@pytest.fixture(scope="module")
def scored(data):
    rng = np.random.default_rng(5)
    X = list(data.held_out) + [(a, b2) for (a, _), (_, b2) in zip(data.held_out, data.held_out[1:])]
    y = np.concatenate([rng.uniform(3.5, 5, len(data.held_out)), rng.uniform(0, 1.5, len(data.held_out) - 1)])
    return X, y


class TestParams:
    def test_clone_keeps_params(self):
        est = ParaphraseEmbedder(encoder="lstm", delta=0.6, epochs=2)
        copy = clone(est)
        assert copy.get_params() == est.get_params()
        assert copy is not est

    def test_set_params(self):
        est = SimilarityRegressor().set_params(K=7, head_hidden=3)
        assert est.get_params()["K"] == 7 and est.head_hidden == 3

    def test_regressor_defaults(self):
        params = SimilarityRegressor().get_params()
        assert params["batch_size"] == 25 and params["K"] == 5 and params["gold_range"] == (0.0, 5.0)


class TestEmbedder:
    def test_fit_transform(self, data):
        est = ParaphraseEmbedder(encoder="gran1", epochs=2, batch_size=10, embeddings=data.table)
        Z = est.fit(data.train).transform([a for a, _ in data.held_out])
        assert Z.shape == (len(data.held_out), est.n_features_out_) == (10, 6)
        assert len(est.loss_curve_) == 2
        assert np.all(np.isfinite(Z))

    def test_similarity_range(self, data):
        est = ParaphraseEmbedder(encoder="avg", epochs=1, batch_size=10, embeddings=data.table).fit(data.train)
        raw = est.similarity(data.held_out)
        scaled = est.similarity(data.held_out, scale_to_range=True)
        np.testing.assert_allclose(scaled, 2.5 * (raw + 1.0))
        assert np.all(np.abs(raw) <= 1.0 + 1e-12)

    def test_embeddings_from_file(self, data, tmp_path):
        path = tmp_path / "vec.txt"
        path.write_text("\n".join(data.embedding_lines()) + "\n", encoding="utf-8")
        est = ParaphraseEmbedder(encoder="avg", epochs=1, batch_size=10, embeddings=str(path)).fit(data.train)
        assert est.transform(["x"]).shape == (1, 6)

    def test_deterministic(self, data):
        est = ParaphraseEmbedder(encoder="lstmavg", epochs=1, batch_size=10, embeddings=data.table, dropout=0.2,
                                 random_state=4)
        a = clone(est).fit(data.train).transform([p[0] for p in data.held_out])
        b = clone(est).fit(data.train).transform([p[0] for p in data.held_out])
        np.testing.assert_array_equal(a, b)

    def test_save_and_load(self, data, tmp_path):
        est = ParaphraseEmbedder(encoder="gran2", epochs=1, batch_size=10, embeddings=data.table,
                                 add_sos=True).fit(data.train)
        est.save(tmp_path / "m.ck")
        back = ParaphraseEmbedder.from_checkpoint(tmp_path / "m.ck")
        sents = [p[1] for p in data.held_out]
        np.testing.assert_array_equal(est.transform(sents), back.transform(sents))
        assert back.encoder == "gran2" and back.add_sos is True

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            ParaphraseEmbedder().transform(["a b"])

    @pytest.mark.parametrize("X", [[("a b", "c")], [("a b", "")], ["a b", "c d"]])
    def test_bad_pairs(self, data, X):
        with pytest.raises(ValueError):
            ParaphraseEmbedder(embeddings=data.table).fit(X)

    def test_single_string_rejected(self, data):
        est = ParaphraseEmbedder(encoder="avg", epochs=0, embeddings=data.table).fit(data.train)
        with pytest.raises(TypeError):
            est.transform("a b")

    def test_requires_embeddings(self, data):
        with pytest.raises(Exception, match="embedding"):
            ParaphraseEmbedder().fit(data.train)


class TestRegressor:
    def test_fit_predict(self, data, scored):
        X, y = scored
        est = SimilarityRegressor(encoder="gran1", epochs=30, batch_size=5, head_hidden=6, embeddings=data.table,
                                  learning_rate=0.01)
        pred = est.fit(X, y).predict(X)
        assert pred.shape == (len(X),)
        assert np.all((pred >= 0.0) & (pred <= 5.0))
        assert pearson_r(pred, y) > 0.5
        assert len(est.loss_curve_) == 30

    def test_dev_selection(self, data, scored):
        X, y = scored
        est = SimilarityRegressor(encoder="avg", epochs=3, batch_size=5, head_hidden=4, embeddings=data.table)
        est.fit(X[:12], y[:12], X[12:], y[12:])
        assert len(est.dev_log_) == 3
        assert est.best_epoch_ in (1, 2, 3)

    def test_gold_out_of_range(self, data, scored):
        X, y = scored
        with pytest.raises(ValueError, match="gold"):
            SimilarityRegressor(embeddings=data.table, gold_range=(0, 1)).fit(X, y)

    def test_score_count(self, data, scored):
        X, y = scored
        with pytest.raises(ValueError):
            SimilarityRegressor(embeddings=data.table).fit(X, y[:-1])

    def test_universal_init(self, data, scored, tmp_path):
        X, y = scored
        ParaphraseEmbedder(encoder="gran1", epochs=1, batch_size=10, embeddings=data.table).fit(data.train) \
            .save(tmp_path / "u.ck")
        est = SimilarityRegressor(encoder="gran1", epochs=1, batch_size=5, head_hidden=4,
                                  init_checkpoint=str(tmp_path / "u.ck"), lambda_w=10.0).fit(X, y)
        assert est.predict(X[:3]).shape == (3,)
        with pytest.raises(Exception, match="match"):
            SimilarityRegressor(encoder="lstm", epochs=1, init_checkpoint=str(tmp_path / "u.ck")).fit(X, y)

    def test_save_roundtrip(self, data, scored, tmp_path):
        from parasent.model import ParaphraseModel
        X, y = scored
        est = SimilarityRegressor(encoder="avg", epochs=2, batch_size=5, head_hidden=4,
                                  embeddings=data.table).fit(X, y)
        est.save(tmp_path / "r.ck")
        np.testing.assert_array_equal(ParaphraseModel.load(tmp_path / "r.ck").predict(X), est.predict(X))
