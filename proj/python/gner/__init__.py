"""Python bindings for the gner tagger."""
import json as _json

from ._gner import (  # noqa: F401
    EmbeddingStore,
    Error,
    Model,
    casing,
    char_ngrams,
    convert_fasttext_bin,
    crf_log_partition,
    crf_viterbi,
    evaluate,
    evaluate_combined,
    extract_chunks,
    fasttext_hash,
    iob_to_bio,
    map_label_combined,
    read_corpus,
)
from ._gner import train as _train


def train(train_path, dev_path, store, format="germeval", model=None, training=None):
    """Two-stage training. Returns (model, report lines as dicts)."""
    m, report = _train(train_path, dev_path, store, format,
                       _json.dumps(model or {}), _json.dumps(training or {}))
    return m, [_json.loads(line) for line in report.splitlines() if line]
