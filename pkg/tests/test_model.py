import numpy as np
import pytest

from samlm.corpus import EOS_ID, IndexedDocument
from samlm.model import VARIANTS, ModelConfig, build, load_model, save_model
from samlm.tensor import grad_check

import oracles

TINY = dict(d=4, d_tilde=3, vocab_size=7, n_authors=2, n_categories=2)
DOC = IndexedDocument(id="doc", text_ids=(3, 5, 4, EOS_ID), title_ids=(4, 6), author_id=1, category_id=1)


def tiny_model(variant, seed=0, **overrides):
    cfg = {**TINY, **overrides}
    return build(ModelConfig(variant=variant, seed=seed, **cfg))


class TestBuild:
    def test_rnn_has_no_attribute_machinery(self):
        model = tiny_model("RNN")
        assert model.title_cell is None
        assert model.author_table is None and model.category_table is None
        assert model.title_att is None and model.attr_att is None
        assert model.main_cell.input_dim == TINY["d"]

    def test_category_table_shape(self):
        model = tiny_model("SAM-Cat", n_categories=5, d_tilde=8)
        assert model.category_table.shape == (5, 8)
        assert model.main_cell.input_dim == TINY["d"] + 8

    def test_context_variants_widen_main_input(self):
        for name, spec in VARIANTS.items():
            model = tiny_model(name)
            expected = TINY["d"] + TINY["d_tilde"] if spec.uses_context else TINY["d"]
            assert model.main_cell.input_dim == expected, name

    def test_attribute_attention_only_with_multiple_candidates(self):
        assert tiny_model("SAM-Title-Au-Att").attr_att is not None
        assert tiny_model("SAM-Title-Att").attr_att is None
        assert tiny_model("SAM-Cat").attr_att is None

    def test_embedding_dim_equals_hidden_size(self):
        model = tiny_model("RNN")
        assert model.E.shape == (TINY["vocab_size"], TINY["d"])

    def test_state_map_identity_when_dims_agree(self):
        model = tiny_model("RNN-State", d=4, d_tilde=4)
        np.testing.assert_array_equal(model.state_W.value, np.eye(4))

    def test_missing_inventory_rejected(self):
        with pytest.raises(ValueError, match="author"):
            tiny_model("SAM-Au-Att", n_authors=0)

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError, match="variant"):
            build(ModelConfig(variant="LSTM", d=4, d_tilde=4, vocab_size=7))

    def test_same_seed_same_checkpoint_bytes(self, tmp_path):
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_model(tiny_model("SAM-Title-Au-Att", seed=9), p1)
        save_model(tiny_model("SAM-Title-Au-Att", seed=9), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_checkpoint_roundtrip(self, tmp_path):
        model = tiny_model("SAM-Title-Au-Att", seed=4)
        path = tmp_path / "m.ckpt"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.config == model.config
        fwd_a = model.forward_document(DOC, want_caches=False)
        fwd_b = loaded.forward_document(DOC, want_caches=False)
        assert fwd_a.total_nll == fwd_b.total_nll


class TestForward:
    def test_zero_weights_uniform_predictions(self):
        model = tiny_model("RNN")
        for p in model.store.params():
            p.value[...] = 0.0
        fwd = model.forward_document(DOC)
        np.testing.assert_allclose(fwd.per_word_nll, np.log(TINY["vocab_size"]), atol=1e-12)

    def test_single_word_title_attention_is_all_ones(self):
        model = tiny_model("SAM-Title-Att")
        doc = IndexedDocument(id="d", text_ids=(3, 4, EOS_ID), title_ids=(5,))
        fwd = model.forward_document(doc)
        np.testing.assert_allclose(fwd.trace.alpha, 1.0, atol=1e-15)

    @pytest.mark.parametrize("variant", sorted(VARIANTS))
    def test_matches_scalar_composition_oracle(self, variant):
        for seed in range(3):
            model = tiny_model(variant, seed=seed)
            fwd = model.forward_document(DOC, want_caches=False)
            total, per_word = oracles.scalar_forward_document(model, DOC)
            np.testing.assert_allclose(fwd.total_nll, total, atol=1e-10)
            np.testing.assert_allclose(fwd.per_word_nll, per_word, atol=1e-10)

    def test_probabilities_sum_to_one_each_step(self):
        model = tiny_model("SAM-Title-Au-Att", seed=3)
        fwd = model.forward_document(DOC)
        for cache in fwd.caches:
            assert abs(cache.probs.sum() - 1.0) <= 1e-12

    def test_rnn_ignores_attributes(self):
        model = tiny_model("RNN", seed=2)
        bare = IndexedDocument(id="d", text_ids=DOC.text_ids)
        assert model.forward_document(bare).total_nll == model.forward_document(DOC).total_nll

    def test_trace_columns_are_distributions(self):
        model = tiny_model("SAM-Title-Au-Att", seed=5)
        fwd = model.forward_document(DOC)
        np.testing.assert_allclose(fwd.trace.alpha.sum(axis=0), 1.0, atol=1e-9)
        np.testing.assert_allclose(fwd.trace.beta.sum(axis=0), 1.0, atol=1e-9)
        assert fwd.trace.alpha.shape == (len(DOC.title_ids), len(DOC.text_ids))
        assert fwd.trace.beta.shape == (2, len(DOC.text_ids))

    def test_missing_required_attribute_names_variant_and_doc(self):
        model = tiny_model("SAM-Au-Att")
        doc = IndexedDocument(id="orphan", text_ids=(3, EOS_ID))
        with pytest.raises(ValueError, match="SAM-Au-Att.*orphan"):
            model.forward_document(doc)

    def test_vocab_permutation_invariance(self):
        model = tiny_model("SAM-Cat", seed=6)
        base = model.forward_document(DOC, want_caches=False).total_nll

        # relabel the non-special token ids and permute the tied rows
        perm = np.array([0, 1, 2, 5, 3, 6, 4])
        permuted = tiny_model("SAM-Cat", seed=6)
        for name in ("E", "Wout"):
            permuted.store[name].value[perm] = model.store[name].value.copy()
        permuted.store["bout"].value[perm] = model.store["bout"].value.copy()
        doc2 = IndexedDocument(
            id="doc",
            text_ids=tuple(int(perm[t]) for t in DOC.text_ids),
            title_ids=DOC.title_ids,
            author_id=DOC.author_id,
            category_id=DOC.category_id,
        )
        np.testing.assert_allclose(
            permuted.forward_document(doc2, want_caches=False).total_nll, base, atol=1e-10
        )

    def test_degenerate_attention_equals_constant_context(self):
        # one-word title with M1 frozen at zero: the context every step is
        # exactly the single encoder state
        model = tiny_model("SAM-Title-Att", seed=7)
        model.store["M1"].value[...] = 0.0
        doc = IndexedDocument(id="d", text_ids=(3, 5, EOS_ID), title_ids=(6,))
        fwd = model.forward_document(doc, want_caches=False)

        from samlm.attention import encode_title
        from samlm.corpus import PAD_ID
        from samlm.tensor import concat, softmax

        enc = encode_title(model.title_cell, doc.title_ids, model.E.value)
        h = np.zeros(model.config.d)
        total = 0.0
        for x, target in zip((PAD_ID,) + doc.text_ids[:-1], doc.text_ids):
            w = concat(model.E.value[x], enc.states[0])
            h, _ = model.main_cell.step(w, h)
            probs = softmax(model.Wout.value @ h + model.bout.value)
            total -= np.log(probs[target])
        np.testing.assert_allclose(fwd.total_nll, total, atol=1e-10)


class TestBackward:
    @pytest.mark.parametrize("variant", ["RNN", "SAM-Title-Au-Att"])
    def test_end_to_end_gradcheck(self, variant):
        model = tiny_model(variant, seed=1)
        model.store.zero_grads()
        fwd = model.forward_document(DOC, want_trace=False)
        model.backward_document(fwd)
        report = grad_check(
            lambda s: model.forward_document(DOC, want_trace=False, want_caches=False).total_nll,
            model.store,
        )
        assert report.passed, report.format_table()

    def test_per_word_weights_select_single_softmax(self):
        model = tiny_model("SAM-Title-Att", seed=2)
        model.store.zero_grads()
        fwd = model.forward_document(DOC, want_trace=False)
        weights = [1.0] + [0.0] * (len(DOC.text_ids) - 1)
        model.backward_document(fwd, weights=weights)
        report = grad_check(
            lambda s: model.forward_document(DOC, want_trace=False, want_caches=False).per_word_nll[0],
            model.store,
        )
        assert report.passed, report.format_table()

    def test_zero_weights_zero_grads(self):
        model = tiny_model("SAM-Title-Au-Att", seed=3)
        model.store.zero_grads()
        fwd = model.forward_document(DOC, want_trace=False)
        model.backward_document(fwd, weights=[0.0] * len(DOC.text_ids))
        assert all(not p.grad.any() for p in model.store.params())

    def test_two_documents_accumulate_additively(self):
        model = tiny_model("SAM-Cat", seed=4)
        doc2 = IndexedDocument(id="d2", text_ids=(6, EOS_ID), category_id=0)

        def grads_for(docs):
            model.store.zero_grads()
            for doc in docs:
                fwd = model.forward_document(doc, want_trace=False)
                model.backward_document(fwd)
            return {p.name: p.grad.copy() for p in model.store.params()}

        lone1 = grads_for([DOC])
        lone2 = grads_for([doc2])
        both = grads_for([DOC, doc2])
        for name, grad in both.items():
            np.testing.assert_allclose(grad, lone1[name] + lone2[name], atol=1e-12)

    def test_backward_requires_caches(self):
        model = tiny_model("RNN")
        fwd = model.forward_document(DOC, want_caches=False)
        with pytest.raises(ValueError, match="caches"):
            model.backward_document(fwd)
