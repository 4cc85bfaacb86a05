"""Sequence-labeling toolkit: LSTM/CNN encoders with softmax or CRF inference.

The heavy lifting lives in the compiled extension; this package re-exports it
and adds a keyword-friendly ``train`` entry point.
"""

from seqlab._seqlab import (
    Model,
    architectures,
    convert_tag_scheme,
    read_conll,
    span_scores,
    spans_to_tags,
    tags_to_spans,
    token_accuracy,
)

__all__ = [
    "Model",
    "architectures",
    "convert_tag_scheme",
    "load",
    "read_conll",
    "span_scores",
    "spans_to_tags",
    "tags_to_spans",
    "token_accuracy",
    "train",
]


def train(train, dev, test=None, **config):
    """Train a tagger on (tokens, labels) pairs and return the fitted Model.

    ``config`` accepts the CLI's model keys (char_rep, word_rep, inference,
    scheme, data_scheme, sizes, optimization settings, seed, embeddings).
    """
    return Model._train(train, dev, test, **config)


def load(path):
    """Rebuild a model from a checkpoint written by ``Model.save`` or the CLI."""
    return Model.load(path)
