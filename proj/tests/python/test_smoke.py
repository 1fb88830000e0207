import itertools
import math
import os

import numpy as np
import pytest

import gner

DATA = os.environ.get("GNER_TEST_DATA", os.path.join(os.path.dirname(__file__), "..", "data"))
SAMPLE = os.path.join(DATA, "germeval_sample.tsv")


def write_store(path, dim=6, buckets=31, seed=0):
    rng = np.random.default_rng(seed)
    words = sorted({t for s in gner.read_corpus(SAMPLE) for t in s["tokens"]})
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"FTXT1 {dim} 3 6 {buckets} {len(words)}\n")
        for w in words:
            f.write(w + " " + " ".join(f"{v:.6f}" for v in rng.uniform(-1, 1, dim)) + "\n")
        for _ in range(buckets):
            f.write(" ".join(f"{v:.6f}" for v in rng.uniform(-1, 1, dim)) + "\n")
    return words


def test_text_helpers():
    assert gner.fasttext_hash("") == 2166136261
    # Bare "<" and ">" are never unigrams.
    assert gner.char_ngrams("ab", 1, 2) == ["a", "b", "<a", "ab", "b>"]
    assert gner.casing("A4-Papier") == "contains_digit"
    assert gner.casing("Bonn") == "initial_upper"
    assert gner.iob_to_bio(["I-PER", "I-PER", "O", "I-LOC"]) == ["B-PER", "I-PER", "O", "B-LOC"]
    assert gner.map_label_combined("B-LOCderiv") == "B-MISC"
    assert gner.map_label_combined("I-ORGpart") == "O"
    with pytest.raises(gner.Error):
        gner.map_label_combined("B-DATE")


def test_chunks_and_scores():
    labels = ["B-PER", "I-PER", "O", "I-LOC", "I-LOC"]
    assert gner.extract_chunks(labels) == [("PER", 0, 2), ("LOC", 3, 5)]
    assert gner.extract_chunks(labels, strict=True) == [("PER", 0, 2)]
    r = gner.evaluate([labels], [["B-PER", "I-PER", "O", "O", "O"]])
    assert (r["tp"], r["fp"], r["fn"]) == (1, 0, 1)
    assert r["precision"] == 1.0 and r["recall"] == 0.5
    assert math.isclose(r["f1"], 2 / 3)
    empty = gner.evaluate([["O"]], [["O"]])
    assert empty["f1"] == 0.0
    c = gner.evaluate_combined([labels], [["O"] * 5], [labels], [["O"] * 5])
    assert c["f1"] == 1.0


def test_crf_against_enumeration():
    rng = np.random.default_rng(3)
    L, T = 3, 4
    tr, st, en, em = rng.normal(size=(L, L)), rng.normal(size=L), rng.normal(size=L), rng.normal(size=(T, L))

    def score(path):
        s = st[path[0]] + en[path[-1]] + sum(em[t, y] for t, y in enumerate(path))
        return s + sum(tr[a, b] for a, b in zip(path, path[1:]))

    paths = list(itertools.product(range(L), repeat=T))
    scores = [score(p) for p in paths]
    logz = max(scores) + math.log(sum(math.exp(s - max(scores)) for s in scores))
    assert abs(gner.crf_log_partition(tr, st, en, em) - logz) < 1e-10
    path, best = gner.crf_viterbi(tr, st, en, em)
    assert tuple(path) == paths[int(np.argmax(scores))]
    assert abs(best - max(scores)) < 1e-10


def test_store_train_predict_roundtrip(tmp_path):
    words = write_store(tmp_path / "emb.ftxt")
    store = gner.EmbeddingStore.load(str(tmp_path / "emb.ftxt"))
    assert store.dim == 6 and store.word_count == len(words)
    assert words[0] in store
    vec, oov = store.lookup("Zzzyzzq")
    assert oov and len(vec) == 6

    model, report = gner.train(
        SAMPLE, SAMPLE, store,
        model={"char_variant": "cnn", "char_emb_dim": 4, "char_cnn_filters": 4, "token_lstm_cells": 5},
        training={"stage1_epochs": 2, "stage1_batch": 2, "stage2_epochs": 1, "stage2_batch": 4})
    assert len(report) == 4
    assert report[0]["stage"] == 1
    assert "B-LOCderiv" in model.labels

    sentences = [["Schartau", "sagte", "dem", "Tagesspiegel"], ["Bonn"]]
    labels = model.predict(store, sentences)
    assert [len(x) for x in labels] == [4, 1]
    assert all(l in model.labels for x in labels for l in x)

    model.save(str(tmp_path / "m.mner"))
    again = gner.Model.load(str(tmp_path / "m.mner"))
    assert again.predict(store, sentences) == labels
    assert again.config_json == model.config_json
    r = again.evaluate(store, SAMPLE)
    assert 0.0 <= r["f1"] <= 1.0 and r["sentences"] == 3

    with pytest.raises(gner.Error):
        gner.Model.load(str(tmp_path / "missing.mner"))
