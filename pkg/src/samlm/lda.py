"""Collapsed-Gibbs latent Dirichlet allocation for manufacturing category
labels on unlabeled corpora.

Labels are produced once and frozen into the corpus file; training never
re-runs the sampler. Note the protocol labels the same documents that are
later modeled, so the pseudo-category leaks a single discrete summary of each
document into its own label. That is the intended protocol, not a bug.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import Document, IndexedDocument


@dataclass
class LdaConfig:
    n_topics: int = 5
    alpha: float | None = None  # defaults to 50 / n_topics
    beta: float = 0.01
    iterations: int = 1000
    seed: int = 0

    def validate(self) -> None:
        if self.n_topics < 2:
            raise ValueError("n_topics must be at least 2")
        if (self.alpha is not None and self.alpha <= 0) or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")

    @property
    def effective_alpha(self) -> float:
        return self.alpha if self.alpha is not None else 50.0 / self.n_topics


@dataclass
class TopicModel:
    config: LdaConfig
    vocab_size: int
    doc_topic: np.ndarray  # docs x topics
    topic_word: np.ndarray  # topics x vocab
    topic_totals: np.ndarray  # topics
    assignments: list[np.ndarray] = field(default_factory=list)
    doc_tokens: list[np.ndarray] = field(default_factory=list)

    def audit_counts(self) -> None:
        """Check the count tables against the raw assignments."""
        doc_topic = np.zeros_like(self.doc_topic)
        topic_word = np.zeros_like(self.topic_word)
        for d, (tokens, topics) in enumerate(zip(self.doc_tokens, self.assignments)):
            for w, k in zip(tokens, topics):
                doc_topic[d, k] += 1
                topic_word[k, w] += 1
        if not (
            np.array_equal(doc_topic, self.doc_topic)
            and np.array_equal(topic_word, self.topic_word)
            and np.array_equal(topic_word.sum(axis=1), self.topic_totals)
        ):
            raise AssertionError("topic count tables disagree with assignments")


def _doc_words(doc: IndexedDocument) -> np.ndarray:
    # drop the trailing EOS; titles are not part of the topic sample
    return np.array(doc.text_ids[:-1], dtype=np.int64)


def fit(docs: list[IndexedDocument], cfg: LdaConfig, vocab_size: int) -> TopicModel:
    """Collapsed Gibbs sampling for cfg.iterations sweeps, seeded."""
    cfg.validate()
    if not docs:
        raise ValueError("cannot fit a topic model on an empty corpus")
    if vocab_size < 1:
        raise ValueError("empty vocabulary")
    rng = np.random.default_rng(cfg.seed)
    K = cfg.n_topics
    alpha = cfg.effective_alpha
    beta = cfg.beta

    doc_tokens = [_doc_words(d) for d in docs]
    n_docs = len(docs)
    doc_topic = np.zeros((n_docs, K), dtype=np.int64)
    topic_word = np.zeros((K, vocab_size), dtype=np.int64)
    topic_totals = np.zeros(K, dtype=np.int64)
    assignments: list[np.ndarray] = []

    for d, tokens in enumerate(doc_tokens):
        z = rng.integers(0, K, size=len(tokens))
        assignments.append(z)
        for w, k in zip(tokens, z):
            doc_topic[d, k] += 1
            topic_word[k, w] += 1
            topic_totals[k] += 1

    beta_total = beta * vocab_size
    n_tokens = sum(len(t) for t in doc_tokens)
    for _ in range(cfg.iterations):
        for d, tokens in enumerate(doc_tokens):
            z = assignments[d]
            for i, w in enumerate(tokens):
                k = z[i]
                doc_topic[d, k] -= 1
                topic_word[k, w] -= 1
                topic_totals[k] -= 1

                weights = (topic_word[:, w] + beta) / (topic_totals + beta_total)
                weights = weights * (doc_topic[d] + alpha)
                cumulative = np.cumsum(weights)
                k = int(np.searchsorted(cumulative, rng.random() * cumulative[-1]))

                z[i] = k
                doc_topic[d, k] += 1
                topic_word[k, w] += 1
                topic_totals[k] += 1
        # bookkeeping invariant, checked after every sweep
        if (
            int(topic_totals.sum()) != n_tokens
            or not np.array_equal(doc_topic.sum(axis=1), [len(t) for t in doc_tokens])
            or not np.array_equal(topic_word.sum(axis=1), topic_totals)
        ):
            raise AssertionError("topic count tables lost consistency during sampling")

    return TopicModel(
        config=cfg,
        vocab_size=vocab_size,
        doc_topic=doc_topic,
        topic_word=topic_word,
        topic_totals=topic_totals,
        assignments=assignments,
        doc_tokens=doc_tokens,
    )


def assign_categories(model: TopicModel) -> list[int]:
    """Largest smoothed topic weight per document; ties take the lowest index."""
    alpha = model.config.effective_alpha
    return [int(np.argmax(row + alpha)) for row in model.doc_topic]


def top_words(model: TopicModel, k: int, vocab) -> list[list[str]]:
    """Per-topic word ranking by topic-word count, ties lexicographic."""
    result = []
    for topic in range(model.config.n_topics):
        counts = model.topic_word[topic]
        seen = [w for w in range(model.vocab_size) if counts[w] > 0]
        seen.sort(key=lambda w: (-counts[w], vocab.token_for(w)))
        result.append([vocab.token_for(w) for w in seen[:k]])
    return result


def label_corpus(model: TopicModel, docs: list[Document]) -> list[Document]:
    """Copy of the corpus with the category field filled as topic-<k>."""
    if len(docs) != len(model.doc_topic):
        raise ValueError("document count does not match the fitted model")
    labels = assign_categories(model)
    return [replace(doc, category=f"topic-{k}") for doc, k in zip(docs, labels)]
