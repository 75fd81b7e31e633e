import numpy as np
import pytest
from hypothesis import given, strategies as st

from ccqg.annotations import AnnotatedDocument, Sentence, Token
from ccqg.features import (
    ComplexityFeatures,
    compute_raw_features,
    feature_entity_answer_distance,
    feature_entity_frequency,
    feature_topic_coherence,
    js_divergence,
    locate_answer_span,
)


def tok(i, form, deprel="dep", upos="NOUN", head=0, entity="O", lemma=None):
    return Token(
        index=i, form=form, lemma=lemma or form.lower(), upos=upos,
        head=head, deprel=deprel, entity=entity,
    )


def doc(doc_id, *sentences):
    return AnnotatedDocument(
        doc_id=doc_id, sentences=tuple(Sentence(tokens=tuple(s)) for s in sentences),
    )


def simple_sent(*lemmas, entities=None):
    entities = entities or ["O"] * len(lemmas)
    return [
        tok(i + 1, lemma, entity=entities[i]) for i, lemma in enumerate(lemmas)
    ]


class TestJsDivergence:
    def test_identical_is_zero(self):
        p = np.array([0.2, 0.3, 0.5])
        assert js_divergence(p, p) == 0.0

    def test_disjoint_supports_is_one(self):
        assert js_divergence(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(1.0, abs=1e-12)

    def test_derived_value(self):
        got = js_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5]))
        assert got == pytest.approx(0.31127812445913283, abs=1e-12)

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            js_divergence(np.array([1.0]), np.array([0.5, 0.5]))

    def test_rejects_non_distribution(self):
        with pytest.raises(ValueError):
            js_divergence(np.array([0.7, 0.7]), np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            js_divergence(np.array([1.5, -0.5]), np.array([0.5, 0.5]))

    @given(st.lists(st.floats(min_value=1e-6, max_value=1.0), min_size=2, max_size=8))
    def test_properties(self, weights):
        rng = np.random.default_rng(sum(int(w * 1e6) for w in weights))
        p = np.array(weights) / np.sum(weights)
        q = rng.dirichlet(np.ones(len(weights)))
        d_pq = js_divergence(p, q)
        d_qp = js_divergence(q, p)
        assert d_pq == pytest.approx(d_qp, abs=1e-12)
        assert -1e-12 <= d_pq <= 1.0 + 1e-12
        assert js_divergence(p, p) <= 1e-12


class TestTopicCoherence:
    def test_identical_sentences_hit_floor(self):
        s = simple_sent("cat", "dog")
        d = doc("p", s, list(s))
        assert feature_topic_coherence(d, alpha=1.0) == pytest.approx(1e6)

    def test_single_sentence_is_maximal(self):
        d = doc("p", simple_sent("cat"))
        assert feature_topic_coherence(d, alpha=1.0) == pytest.approx(1e6)

    def test_two_sentence_oracle(self):
        d = doc(
            "p",
            simple_sent("cat", "cat", "dog"),
            simple_sent("dog", "bird"),
        )
        got = feature_topic_coherence(d, alpha=1.0)
        assert got == pytest.approx(11.654727328922077, abs=1e-9)

    def test_direct_mode_returns_divergence(self):
        d = doc(
            "p",
            simple_sent("cat", "cat", "dog"),
            simple_sent("dog", "bird"),
        )
        got = feature_topic_coherence(d, alpha=1.0, mode="direct")
        assert got == pytest.approx(0.08580209315737704, abs=1e-9)

    def test_direct_mode_floor_case_is_zero(self):
        d = doc("p", simple_sent("cat"))
        assert feature_topic_coherence(d, alpha=1.0, mode="direct") == 0.0

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            feature_topic_coherence(doc("p", simple_sent("cat")), 1.0, "weird")

    def test_all_stopword_passage_counts_as_coherent(self):
        d = doc(
            "p",
            [tok(1, "the", upos="DET"), tok(2, "of", upos="ADP")],
            [tok(1, "and", upos="CCONJ")],
        )
        assert feature_topic_coherence(d, alpha=1.0) == pytest.approx(1e6)


def entity_passage():
    # paris x2, york x1, rome x3 -> T = 6
    return doc(
        "p",
        simple_sent("paris", "beats", "rome", entities=["B-LOC", "O", "B-LOC"]),
        simple_sent("rome", "beats", "york", entities=["B-LOC", "O", "B-LOC"]),
        simple_sent("paris", "beats", "rome", entities=["B-LOC", "O", "B-LOC"]),
    )


class TestEntityFrequency:
    def test_derived_example(self):
        q = doc("q", simple_sent(
            "paris", "or", "york", entities=["B-LOC", "O", "B-LOC"],
        ))
        # avg = (2/6 + 1/6)/2 = 0.25 -> f4 = 4
        assert feature_entity_frequency(q, entity_passage()) == pytest.approx(4.0)

    def test_frequency_one(self):
        p = doc("p", simple_sent(
            "rome", "rome", "rome", entities=["B-LOC", "B-LOC", "B-LOC"],
        ))
        q = doc("q", simple_sent("rome", entities=["B-LOC"]))
        assert feature_entity_frequency(q, p) == pytest.approx(1.0)

    def test_no_shared_entities_fallback(self):
        p = doc("p", simple_sent(
            *["rome"] * 9, entities=["B-LOC"] * 9,
        ))
        q = doc("q", simple_sent("york", entities=["B-LOC"]))
        assert feature_entity_frequency(q, p) == pytest.approx(10.0)

    def test_entity_free_passage(self):
        p = doc("p", simple_sent("plain", "words"))
        q = doc("q", simple_sent("york", entities=["B-LOC"]))
        assert feature_entity_frequency(q, p) == pytest.approx(1.0)


class TestEntityAnswerDistance:
    def test_occurrence_inside_span_contributes_zero(self):
        p = doc("p", simple_sent(
            "x", "paris", "y", entities=["O", "B-LOC", "O"],
        ))
        q = doc("q", simple_sent("paris", entities=["B-LOC"]))
        assert feature_entity_answer_distance(q, p, (1, 2)) == 0.0

    def test_derived_mean_of_gaps(self):
        # answer span [10, 12); entity a at flat 4 (5 before), b at 23 (11 after)
        forms = ["w"] * 24
        entities = ["O"] * 24
        forms[4], entities[4] = "alpha", "B-PER"
        forms[23], entities[23] = "beta", "B-PER"
        p = doc("p", [
            tok(i + 1, f, entity=e) for i, (f, e) in enumerate(zip(forms, entities))
        ])
        q = doc("q", simple_sent(
            "alpha", "beta", entities=["B-PER", "B-PER"],
        ))
        assert feature_entity_answer_distance(q, p, (10, 12)) == pytest.approx(8.0)

    def test_min_over_occurrences(self):
        p = doc("p", simple_sent(
            "far", "x", "near", "y", "z",
            entities=["B-L", "O", "B-L", "O", "O"],
        ))
        # same entity string at flat 0 and 2; answer at [4,5): gaps 3 and 1
        p = doc("p", simple_sent(
            "spot", "x", "spot", "y", "z",
            entities=["B-L", "O", "B-L", "O", "O"],
        ))
        q = doc("q", simple_sent("spot", entities=["B-L"]))
        assert feature_entity_answer_distance(q, p, (4, 5)) == pytest.approx(1.0)

    def test_fallback_is_token_count(self):
        p = doc("p", simple_sent(*["w"] * 40))
        q = doc("q", simple_sent("york", entities=["B-LOC"]))
        assert feature_entity_answer_distance(q, p, (0, 1)) == pytest.approx(40.0)

    def test_invalid_span(self):
        p = doc("p", simple_sent("a", "b"))
        q = doc("q", simple_sent("a"))
        for span in ((-1, 1), (0, 3), (1, 1), (2, 1)):
            with pytest.raises(ValueError):
                feature_entity_answer_distance(q, p, span)

    def test_spans_cross_sentence_flattening(self):
        p = doc(
            "p",
            simple_sent("one", "two", "three"),
            simple_sent("paris", "five", entities=["B-LOC", "O"]),
        )
        q = doc("q", simple_sent("paris", entities=["B-LOC"]))
        # paris at flat position 3; answer at [0,1): gap = 0-3-1 -> 2 between
        assert feature_entity_answer_distance(q, p, (0, 1)) == pytest.approx(2.0)


HAMLET_QUESTION = None
HAMLET_PASSAGE = None


def hamlet_fixture():
    question = AnnotatedDocument(doc_id="q", sentences=(
        Sentence(tokens=(
            tok(1, "Who", deprel="nsubj", upos="PRON"),
            tok(2, "wrote", deprel="root", upos="VERB", lemma="write"),
            tok(3, "Hamlet", deprel="obj", entity="B-WORK"),
            tok(4, "?", deprel="punct", upos="PUNCT"),
        )),
    ))
    passage = AnnotatedDocument(doc_id="p", sentences=(
        Sentence(tokens=(
            tok(1, "William", deprel="nsubj", entity="B-PER"),
            tok(2, "Shakespeare", deprel="flat", entity="I-PER"),
            tok(3, "wrote", deprel="root", upos="VERB", lemma="write"),
            tok(4, "Hamlet", deprel="obj", entity="B-WORK"),
            tok(5, ".", deprel="punct", upos="PUNCT"),
        )),
        Sentence(tokens=(
            tok(1, "Hamlet", deprel="nsubj", entity="B-WORK"),
            tok(2, "tells", deprel="root", upos="VERB", lemma="tell"),
            tok(3, "a", deprel="det", upos="DET"),
            tok(4, "dark", deprel="amod", upos="ADJ"),
            tok(5, "story", deprel="obj"),
            tok(6, ".", deprel="punct", upos="PUNCT"),
        )),
    ))
    return question, passage


class TestComputeRawFeatures:
    def test_full_fixture_oracle(self):
        question, passage = hamlet_fixture()
        feats = compute_raw_features(question, passage, answer_span=(0, 2),
                                     alpha=1.0)
        assert feats.f1 == 1.0
        assert feats.f2 == 0.0
        assert feats.f3 == pytest.approx(14.959117544108281, abs=1e-9)
        assert feats.f4 == pytest.approx(1.5)   # hamlet: 2 of 3 mentions
        assert feats.f5 == pytest.approx(1.0)   # nearest hamlet 1 token after
        np.testing.assert_array_equal(
            feats.as_array(),
            [feats.f1, feats.f2, feats.f3, feats.f4, feats.f5],
        )

    def test_deterministic(self):
        question, passage = hamlet_fixture()
        a = compute_raw_features(question, passage, (0, 2))
        b = compute_raw_features(question, passage, (0, 2))
        assert a == b

    def test_invariant_validation(self):
        with pytest.raises(ValueError):
            ComplexityFeatures(f1=0.0, f2=0.0, f3=1.0, f4=1.0, f5=0.0)
        with pytest.raises(ValueError):
            ComplexityFeatures(f1=1.0, f2=-1.0, f3=1.0, f4=1.0, f5=0.0)
        with pytest.raises(ValueError):
            ComplexityFeatures(f1=1.0, f2=0.0, f3=float("inf"), f4=1.0, f5=0.0)

    def test_clause_and_modifier_monotonicity(self):
        question, passage = hamlet_fixture()
        base = compute_raw_features(question, passage, (0, 2))
        more = AnnotatedDocument(doc_id="q2", sentences=(
            Sentence(tokens=question.sentences[0].tokens + (
                tok(5, "that", deprel="nsubj", upos="PRON"),
                tok(6, "endures", deprel="acl:relcl", upos="VERB"),
                tok(7, "forever", deprel="advmod", upos="ADV"),
            )),
        ))
        # reindex tokens: rebuild to keep contiguity
        more = AnnotatedDocument(doc_id="q2", sentences=(
            Sentence(tokens=tuple(
                Token(index=i + 1, form=t.form, lemma=t.lemma, upos=t.upos,
                      head=t.head, deprel=t.deprel, entity=t.entity)
                for i, t in enumerate(
                    question.sentences[0].tokens[:3] + (
                        tok(5, "that", deprel="nsubj", upos="PRON"),
                        tok(6, "endures", deprel="acl:relcl", upos="VERB"),
                        tok(7, "forever", deprel="advmod", upos="ADV"),
                        tok(8, "?", deprel="punct", upos="PUNCT"),
                    )
                )
            )),
        ))
        grown = compute_raw_features(more, passage, (0, 2))
        assert grown.f1 == base.f1 + 1
        assert grown.f2 == base.f2 + 1


class TestLocateAnswerSpan:
    def test_first_match_case_insensitive(self):
        _, passage = hamlet_fixture()
        assert locate_answer_span(passage, ["william", "shakespeare"]) == (0, 2)
        assert locate_answer_span(passage, ["Hamlet"]) == (3, 4)

    def test_missing_answer_is_none(self):
        _, passage = hamlet_fixture()
        assert locate_answer_span(passage, ["macbeth"]) is None
        assert locate_answer_span(passage, []) is None
