"""The attribute-modulated GRU language model and its baseline variants.

Per timestep the model embeds the input word, builds the active attribute
candidate set (title context via title attention, author and category table
rows), fuses candidates with attribute attention when there is more than one,
concatenates the fused context onto the word embedding, steps the main GRU,
and scores the next word with an affine softmax layer.

Conventions the whole package relies on:
  - the first prediction conditions on the PAD embedding standing in for a
    beginning-of-sequence token;
  - prediction targets are the document tokens followed by EOS; titles are
    conditioning context only and are never predicted;
  - state-initialized variants map the title encoder's last state through a
    learned affine layer to seed the main hidden state (identity-initialized
    when the dimensions already agree).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor
from .attention import (
    AttentionCache,
    AttentionTrace,
    BilinearAttention,
    TitleEncoding,
    attribute_context,
    encode_title,
    title_context,
)
from .corpus import IndexedDocument, PAD_ID
from .gru import GruCache, GruCell
from .tensor import ParamStore, softmax


@dataclass(frozen=True)
class VariantSpec:
    name: str
    title_attention: bool = False
    bow: bool = False
    author: bool = False
    category: bool = False
    state_init: bool = False

    @property
    def uses_context(self) -> bool:
        return self.title_attention or self.bow or self.author or self.category

    @property
    def needs_title(self) -> bool:
        return self.title_attention or self.state_init or self.bow

    @property
    def needs_title_encoder(self) -> bool:
        return self.title_attention or self.state_init

    @property
    def candidate_names(self) -> tuple[str, ...]:
        names = []
        if self.title_attention:
            names.append("title")
        if self.author:
            names.append("author")
        if self.category:
            names.append("category")
        return tuple(names)


VARIANTS: dict[str, VariantSpec] = {
    spec.name: spec
    for spec in [
        VariantSpec("RNN"),
        VariantSpec("RNN-State", state_init=True),
        VariantSpec("RNN-BOW", bow=True),
        VariantSpec("SAM-Cat", category=True),
        VariantSpec("SAM-Title-Att", title_attention=True),
        VariantSpec("SAM-Title-Att-State", title_attention=True, state_init=True),
        VariantSpec("SAM-Au-Att", author=True),
        VariantSpec("SAM-Title-Au-Att", title_attention=True, author=True),
        VariantSpec("SAM-Title-State-Au-Att", title_attention=True, author=True, state_init=True),
    ]
}


@dataclass
class ModelConfig:
    variant: str
    d: int
    d_tilde: int
    vocab_size: int
    n_authors: int = 0
    n_categories: int = 0
    seed: int = 0

    def validate(self) -> VariantSpec:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; known: {sorted(VARIANTS)}")
        if self.d < 1 or self.d_tilde < 1:
            raise ValueError("hidden sizes must be positive")
        if self.vocab_size < 4:
            raise ValueError("vocab_size must cover the three specials plus a token")
        spec = VARIANTS[self.variant]
        if spec.author and self.n_authors < 1:
            raise ValueError(f"variant {self.variant} needs an author inventory")
        if spec.category and self.n_categories < 1:
            raise ValueError(f"variant {self.variant} needs a category inventory")
        return spec


@dataclass
class DocState:
    """Per-document conditioning prepared once before stepping."""

    doc_id: str
    h0: np.ndarray
    title_ids: tuple[int, ...] | None = None
    enc: TitleEncoding | None = None
    bow_vec: np.ndarray | None = None
    mean_emb: np.ndarray | None = None
    author_id: int | None = None
    category_id: int | None = None


@dataclass
class StepCache:
    x_id: int
    h_prev: np.ndarray
    h: np.ndarray
    probs: np.ndarray
    gru: GruCache
    title_att: AttentionCache | None = None
    attr_att: AttentionCache | None = None
    candidate_names: tuple[str, ...] = ()


@dataclass
class StepOutput:
    h: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    alpha: np.ndarray | None
    beta: np.ndarray | None
    cache: StepCache


@dataclass
class DocForward:
    doc: IndexedDocument
    state: DocState
    total_nll: float
    per_word_nll: list[float]
    trace: AttentionTrace
    caches: list[StepCache] = field(default_factory=list)


class SamModel:
    def __init__(self, config: ModelConfig):
        spec = config.validate()
        self.config = config
        self.variant = spec
        self.store = ParamStore()
        rng = np.random.default_rng(config.seed)
        d, dt, v = config.d, config.d_tilde, config.vocab_size

        self.E = self.store.add("E", (v, d), rng=rng)
        self.Wout = self.store.add("Wout", (v, d), rng=rng)
        self.bout = self.store.add("bout", (v,), init="zeros")

        main_input = d + dt if spec.uses_context else d
        self.main_cell = GruCell(self.store, "main", main_input, d, rng)

        self.title_cell = None
        if spec.needs_title_encoder:
            self.title_cell = GruCell(self.store, "title", d, dt, rng)
        self.state_W = self.state_b = None
        if spec.state_init:
            init = "identity" if d == dt else "uniform"
            self.state_W = self.store.add("state.W", (d, dt), init=init, rng=rng)
            self.state_b = self.store.add("state.b", (d,), init="zeros")
        self.bow_W = None
        if spec.bow:
            self.bow_W = self.store.add("bow.W", (dt, d), rng=rng)
        self.author_table = None
        if spec.author:
            self.author_table = self.store.add("authors", (config.n_authors, dt), rng=rng)
        self.category_table = None
        if spec.category:
            self.category_table = self.store.add("categories", (config.n_categories, dt), rng=rng)
        self.title_att = None
        if spec.title_attention:
            self.title_att = BilinearAttention(self.store, "M1", dt, d, rng)
        self.attr_att = None
        if len(spec.candidate_names) >= 2:
            self.attr_att = BilinearAttention(self.store, "M2", dt, d, rng)

    # ------------------------------------------------------------- forward

    def prepare(self, doc: IndexedDocument) -> DocState:
        """Resolve the document's conditioning inputs for this variant."""
        spec = self.variant
        state = DocState(doc_id=doc.id, h0=np.zeros(self.config.d))
        if spec.needs_title:
            if not doc.title_ids:
                raise ValueError(f"variant {spec.name} requires a title (doc {doc.id})")
            state.title_ids = tuple(doc.title_ids)
        if spec.author:
            if doc.author_id is None:
                raise ValueError(f"variant {spec.name} requires an author (doc {doc.id})")
            if not 0 <= doc.author_id < self.config.n_authors:
                raise ValueError(f"author id {doc.author_id} out of range (doc {doc.id})")
            state.author_id = doc.author_id
        if spec.category:
            if doc.category_id is None:
                raise ValueError(f"variant {spec.name} requires a category (doc {doc.id})")
            if not 0 <= doc.category_id < self.config.n_categories:
                raise ValueError(f"category id {doc.category_id} out of range (doc {doc.id})")
            state.category_id = doc.category_id
        if spec.needs_title_encoder:
            state.enc = encode_title(self.title_cell, state.title_ids, self.E.value)
        if spec.state_init:
            state.h0 = self.state_W.value @ state.enc.last + self.state_b.value
        if spec.bow:
            state.mean_emb = self.E.value[list(state.title_ids)].mean(axis=0)
            state.bow_vec = self.bow_W.value @ state.mean_emb
        return state

    def step(self, x_id: int, h_prev: np.ndarray, state: DocState) -> StepOutput:
        """One teacher-forced / decoding step conditioned on the doc state."""
        spec = self.variant
        x_emb = self.E.value[x_id]
        alpha = beta = None
        t_cache = a_cache = None

        candidates: list[np.ndarray] = []
        if spec.title_attention:
            c_title, alpha, t_cache = title_context(self.title_att, state.enc, h_prev)
            candidates.append(c_title)
        if spec.author:
            candidates.append(self.author_table.value[state.author_id])
        if spec.category:
            candidates.append(self.category_table.value[state.category_id])

        if spec.bow:
            w = tensor.concat(x_emb, state.bow_vec)
        elif len(candidates) == 1:
            # single attribute: attention over one candidate is the identity
            beta = np.ones(1)
            w = tensor.concat(x_emb, candidates[0])
        elif candidates:
            context, beta, a_cache = attribute_context(self.attr_att, candidates, h_prev)
            w = tensor.concat(x_emb, context)
        else:
            w = x_emb

        h, g_cache = self.main_cell.step(w, h_prev)
        logits = self.Wout.value @ h + self.bout.value
        probs = softmax(logits)
        cache = StepCache(
            x_id=x_id,
            h_prev=h_prev,
            h=h,
            probs=probs,
            gru=g_cache,
            title_att=t_cache,
            attr_att=a_cache,
            candidate_names=spec.candidate_names,
        )
        return StepOutput(h=h, logits=logits, probs=probs, alpha=alpha, beta=beta, cache=cache)

    def forward_document(
        self, doc: IndexedDocument, want_trace: bool = True, want_caches: bool = True
    ) -> DocForward:
        """Teacher-forced pass over the document's main text, EOS included."""
        state = self.prepare(doc)
        targets = doc.text_ids
        inputs = (PAD_ID,) + targets[:-1]
        h = state.h0
        nlls: list[float] = []
        caches: list[StepCache] = []
        alpha_cols: list[np.ndarray] = []
        beta_cols: list[np.ndarray] = []
        for x_id, target in zip(inputs, targets):
            out = self.step(x_id, h, state)
            nlls.append(-float(np.log(out.probs[target])))
            if want_caches:
                caches.append(out.cache)
            if want_trace:
                if out.alpha is not None:
                    alpha_cols.append(out.alpha)
                if out.beta is not None:
                    beta_cols.append(out.beta)
            h = out.h
        trace = AttentionTrace(
            alpha=np.column_stack(alpha_cols) if alpha_cols else None,
            beta=np.column_stack(beta_cols) if beta_cols else None,
            attr_names=list(self.variant.candidate_names),
        )
        return DocForward(
            doc=doc,
            state=state,
            total_nll=float(sum(nlls)),
            per_word_nll=nlls,
            trace=trace,
            caches=caches,
        )

    def document_nll(self, doc: IndexedDocument) -> tuple[float, int]:
        fwd = self.forward_document(doc, want_trace=False, want_caches=False)
        return fwd.total_nll, len(fwd.per_word_nll)

    # ------------------------------------------------------------ backward

    def backward_document(self, fwd: DocForward, weights=None) -> None:
        """Accumulate gradients of the (weighted) summed NLL into the store.

        Full backpropagation through time: output layer, main GRU, both
        attentions, the state-init map, the bag-of-words projection, the
        title encoder, and the shared embeddings.
        """
        spec = self.variant
        state = fwd.state
        targets = fwd.doc.text_ids
        if len(fwd.caches) != len(targets):
            raise ValueError("backward needs the caches of a full forward pass")
        if weights is None:
            weights = [1.0] * len(targets)
        d = self.config.d

        d_states = [np.zeros(self.config.d_tilde) for _ in state.enc.states] if state.enc else None
        dbow = np.zeros(self.config.d_tilde) if spec.bow else None
        dh_next = np.zeros(d)

        for cache, target, weight in zip(reversed(fwd.caches), reversed(targets), reversed(weights)):
            dlogits = cache.probs.copy()
            dlogits[target] -= 1.0
            if weight != 1.0:
                dlogits *= weight
            self.Wout.grad += np.outer(dlogits, cache.h)
            self.bout.grad += dlogits
            dh = self.Wout.value.T @ dlogits + dh_next

            dw, dh_prev = self.main_cell.backward(cache.gru, dh)
            self.E.grad[cache.x_id] += dw[:d]
            if spec.bow:
                dbow += dw[d:]
            elif cache.candidate_names:
                dcontext = dw[d:]
                if cache.attr_att is not None:
                    dcands, dh_att = self.attr_att.backward(cache.attr_att, dcontext)
                    dh_prev += dh_att
                else:
                    dcands = [dcontext]
                for name, dcand in zip(cache.candidate_names, dcands):
                    if name == "title":
                        dvecs, dh_att = self.title_att.backward(cache.title_att, dcand)
                        dh_prev += dh_att
                        for t, dv in enumerate(dvecs):
                            d_states[t] += dv
                    elif name == "author":
                        self.author_table.grad[state.author_id] += dcand
                    else:
                        self.category_table.grad[state.category_id] += dcand
            dh_next = dh_prev

        if spec.state_init:
            self.state_W.grad += np.outer(dh_next, state.enc.last)
            self.state_b.grad += dh_next
            d_states[-1] += self.state_W.value.T @ dh_next
        if spec.bow:
            self.bow_W.grad += np.outer(dbow, state.mean_emb)
            dmean = self.bow_W.value.T @ dbow / len(state.title_ids)
            for token_id in state.title_ids:
                self.E.grad[token_id] += dmean
        if state.enc is not None:
            dh_carry = np.zeros(self.config.d_tilde)
            for t in range(len(state.enc.states) - 1, -1, -1):
                dw_t, dh_carry = self.title_cell.backward(
                    state.enc.caches[t], d_states[t] + dh_carry
                )
                self.E.grad[state.title_ids[t]] += dw_t


def build(config: ModelConfig) -> SamModel:
    """Deterministically initialized model for the given configuration."""
    return SamModel(config)


def save_model(model: SamModel, path) -> None:
    tensor.save_checkpoint(path, model.store, config=asdict(model.config))


def load_model(path) -> SamModel:
    values, config = tensor.load_checkpoint(path)
    if config is None:
        raise ValueError(f"checkpoint {path} carries no model config")
    model = build(ModelConfig(**config))
    model.store.load_values(values)
    return model
