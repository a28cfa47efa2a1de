"""Unit tests for the rule-based annotator and memory unit generation."""

import httpx
import pytest

from app.errors import AnnotatorUnavailable, EmptyUtterance
from app.models.memory import (
    DialogueAct,
    EmotionLabel,
    EntityKind,
    Relation,
    SemanticAnchorSet,
    TemporalClass,
    UnitKind,
)
from app.services.annotation_service import (
    HttpAnnotator,
    classify_temporal,
    fact_key_for,
    generate_units,
    make_turn_unit,
    render_relation,
    utterance_ref,
)

FUNCTIONAL = ("lives_in", "warranty_period")


def strong(anchors: SemanticAnchorSet) -> set[str]:
    return {e.surface for e in anchors.strong_entities}


class TestRuleAnnotator:
    """Deterministic extraction of facts, relations and entities."""

    def test_warranty_statement(self, annotator):
        anchors = annotator.annotate("The warranty is 1-year free.")

        assert anchors.facts == ("warranty = 1-year free",)
        assert anchors.relations == (Relation(head="warranty", label="is", tail="1-year free"),)
        assert "warranty" in strong(anchors)
        assert anchors.temporal_class is TemporalClass.PRESENT
        assert anchors.dialogue_act is DialogueAct.STATEMENT

    def test_annotation_is_deterministic(self, annotator):
        text = "Anna's favorite color is teal."
        assert annotator.annotate(text) == annotator.annotate(text)

    def test_empty_utterance(self, annotator):
        with pytest.raises(EmptyUtterance):
            annotator.annotate("")
        with pytest.raises(EmptyUtterance):
            annotator.annotate("  ...  ")

    def test_acknowledgment_has_no_content(self, annotator):
        anchors = annotator.annotate("Okay, I understand.")

        assert anchors.dialogue_act is DialogueAct.ACKNOWLEDGMENT
        assert anchors.facts == ()
        assert anchors.triples == ()

    def test_question_has_no_facts(self, annotator):
        anchors = annotator.annotate("Where does Anna live?")

        assert anchors.dialogue_act is DialogueAct.QUESTION
        assert anchors.facts == ()
        assert "anna" in strong(anchors)

    def test_first_person_resolves_to_speaker(self, annotator):
        anchors = annotator.annotate("I live in Paris.", speaker="Maria")

        assert anchors.relations == (Relation(head="maria", label="lives_in", tail="paris"),)
        assert anchors.facts == ("maria lives in paris",)
        assert anchors.triples[0].predicate == "live in"

    def test_entity_possessive_attribute(self, annotator):
        anchors = annotator.annotate("Anna's favorite color is teal.")

        assert anchors.relations == (Relation(head="anna", label="favorite_color", tail="teal"),)
        assert anchors.facts == ("anna favorite color = teal",)

    def test_speaker_possessive_attribute(self, annotator):
        anchors = annotator.annotate("My warranty period is 2 years.")

        assert anchors.relations == (
            Relation(head="user", label="warranty_period", tail="2 years"),
        )

    def test_preference_tag(self, annotator):
        anchors = annotator.annotate("I like green tea.")

        assert anchors.preference_tags == ("pref:green_tea",)
        assert anchors.relations[0].label == "prefers"

    def test_pronoun_resolves_against_context(self, annotator):
        anchors = annotator.annotate("It is 40 euros.", context=["The invoice arrived yesterday."])

        assert anchors.facts == ("invoice = 40 euros",)

    def test_unresolved_pronoun_yields_no_relation(self, annotator):
        anchors = annotator.annotate("She is very busy.")

        assert anchors.relations == ()
        assert anchors.facts == ()

    def test_clause_with_strong_entity_falls_back_to_fact(self, annotator):
        anchors = annotator.annotate("Please check the warranty soon.")

        assert anchors.relations == ()
        assert anchors.facts == ("please check the warranty soon",)

    def test_emotion_from_lexicon(self, annotator):
        anchors = annotator.annotate("I am furious about the refund.")

        assert anchors.emotion.label is EmotionLabel.FRUSTRATED
        assert anchors.emotion.intensity == pytest.approx(0.9)

    def test_weak_entities_are_not_strong(self, annotator):
        anchors = annotator.annotate("The warranty is 1-year free.")
        weak = {e.surface for e in anchors.entities if e.kind is EntityKind.WEAK}

        assert not weak & strong(anchors)

    def test_several_clauses(self, annotator):
        anchors = annotator.annotate("I live in Oslo. I work at Statoil.")

        assert [r.label for r in anchors.relations] == ["lives_in", "works_at"]


class TestTemporalClass:
    @pytest.mark.parametrize(
        ("words", "expected"),
        [
            (["i", "jog", "every", "morning"], TemporalClass.RECURRING),
            (["i", "will", "fly", "tomorrow"], TemporalClass.FUTURE),
            (["she", "visited", "rome"], TemporalClass.PAST),
            (["it", "is", "raining"], TemporalClass.PRESENT),
            (["blue", "sky"], TemporalClass.ATEMPORAL),
        ],
    )
    def test_keyword_classes(self, words, expected):
        assert classify_temporal(words) is expected

    def test_need_is_not_past(self):
        assert classify_temporal(["i", "need", "help"]) is TemporalClass.ATEMPORAL


class TestFactKeys:
    def test_functional_relation_keys_on_slot(self):
        relation = Relation(head="user", label="lives_in", tail="paris")
        assert fact_key_for(relation, "user lives in paris", FUNCTIONAL) == "user|lives_in"

    def test_other_relations_key_on_triple(self):
        relation = Relation(head="user", label="visited", tail="rome")
        assert fact_key_for(relation, "user visited rome", FUNCTIONAL) == "user|visited|rome"

    def test_plain_fact_keys_on_content(self):
        assert fact_key_for(None, "please check the warranty", FUNCTIONAL) == "please check the warranty"

    def test_render_relation(self):
        assert render_relation(Relation(head="a", label="is", tail="b")) == "a = b"
        assert render_relation(Relation(head="a", label="owns", tail="b")) == "a owns b"
        assert render_relation(Relation(head="a", label="eye_color", tail="b")) == "a eye color = b"


class TestGenerateUnits:
    """One unit per distinct fact."""

    def test_duplicate_facts_in_one_batch(self):
        anchors = SemanticAnchorSet(facts=("the refund is late", "the refund is late"))
        units = generate_units(anchors, "The refund is late.", 10, "s1")

        assert len(units) == 1

    def test_no_facts_no_units(self):
        assert generate_units(SemanticAnchorSet(), "hello", 10, "s1") == []

    def test_warranty_unit(self, annotator):
        text = "The warranty is 1-year free."
        units = generate_units(annotator.annotate(text), text, 100, "s1", utterance_id="t000001")

        assert len(units) == 1
        unit = units[0]
        assert unit.id == ""
        assert unit.kind is UnitKind.FACT
        assert unit.content == "warranty = 1-year free"
        assert unit.provenance == ("t000001",)
        assert unit.trace.retrieval_times == (100,)
        assert unit.created_at == 100

    def test_default_provenance_is_content_hash(self, annotator):
        text = "The warranty is 1-year free."
        unit = generate_units(annotator.annotate(text), text, 100, "s1")[0]

        assert unit.provenance == (utterance_ref(text),)

    def test_request_tags_join_preferences(self, annotator):
        text = "I like green tea."
        unit = generate_units(annotator.annotate(text), text, 5, "s1", tags=["drinks"])[0]

        assert unit.preference_tags == ("drinks", "pref:green_tea")

    def test_turn_unit_keeps_raw_text(self, annotator):
        text = "Okay, I understand."
        unit = make_turn_unit(annotator.annotate(text), text, 5, "s1")

        assert unit.kind is UnitKind.TURN
        assert unit.content == "okay, i understand"
        assert unit.fact_key is None


class TestHttpAnnotator:
    """External annotator adapter over httpx."""

    def test_uses_service_response(self):
        payload = SemanticAnchorSet(facts=("remote fact",)).model_dump(mode="json")

        def handler(request: httpx.Request) -> httpx.Response:
            assert request.url.path == "/annotate"
            return httpx.Response(200, json=payload)

        adapter = HttpAnnotator("http://annotator.test/annotate", transport=httpx.MockTransport(handler))

        assert adapter.annotate("anything at all").facts == ("remote fact",)

    def test_failure_falls_back_to_rules(self, annotator):
        transport = httpx.MockTransport(lambda request: httpx.Response(503))
        adapter = HttpAnnotator("http://annotator.test/annotate", fallback=annotator, transport=transport)

        anchors = adapter.annotate("The warranty is 1-year free.")

        assert anchors.facts == ("warranty = 1-year free",)

    def test_failure_without_fallback(self):
        transport = httpx.MockTransport(lambda request: httpx.Response(200, json={"entities": "bad"}))
        adapter = HttpAnnotator("http://annotator.test/annotate", transport=transport)

        with pytest.raises(AnnotatorUnavailable):
            adapter.annotate("The warranty is 1-year free.")
