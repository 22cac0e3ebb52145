"""Attribute-conditioned GRU language modeling with attention, n-gram and
topic-model baselines, and style-variation generation."""

from .corpus import (
    AttributeInventory,
    Document,
    IndexedDocument,
    Vocabulary,
    build_attributes,
    build_vocab,
    index_corpus,
    index_document,
    ingest,
    split,
)
from .model import VARIANTS, ModelConfig, SamModel, build, load_model, save_model
from .trainer import TrainConfig, train
from .evaluate import PerplexityReport, perplexity, word_delta
from .ngram import KneserNeyModel
from .generation import GenRequest, GenResult, generate, style_variation

__version__ = "0.1.0"

__all__ = [
    "AttributeInventory",
    "Document",
    "GenRequest",
    "GenResult",
    "IndexedDocument",
    "KneserNeyModel",
    "ModelConfig",
    "PerplexityReport",
    "SamModel",
    "TrainConfig",
    "VARIANTS",
    "Vocabulary",
    "build",
    "build_attributes",
    "build_vocab",
    "generate",
    "index_corpus",
    "index_document",
    "ingest",
    "load_model",
    "perplexity",
    "save_model",
    "split",
    "style_variation",
    "train",
    "word_delta",
]
