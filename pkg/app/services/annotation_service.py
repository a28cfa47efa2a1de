"""Semantic anchor annotation and memory unit generation.

The default annotator is rule based and fully deterministic. Its rule tables (the
gazetteer, the emotion lexicon and the acknowledgment vocabulary) are data files
under ``app/data``; ``RULES_VERSION`` changes whenever the rules change output.

An HTTP adapter can delegate annotation to an external model service; it must
return the same JSON shape as ``SemanticAnchorSet``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Protocol

import httpx
from pydantic import ValidationError

from app.config import DEFAULT_FUNCTIONAL_RELATIONS, Settings
from app.errors import AnnotatorUnavailable, EmptyUtterance
from app.models.activation import ActivationTrace
from app.models.memory import (
    DialogueAct,
    EmotionLabel,
    EmotionTag,
    Entity,
    EntityKind,
    MemoryUnit,
    Relation,
    SemanticAnchorSet,
    TemporalClass,
    Triple,
    UnitKind,
)
from app.utils.embedding import EmbeddingProvider, get_embedder
from app.utils.text import normalize, snake_case, strip_possessive, strip_punctuation, tokenize

logger = logging.getLogger(__name__)

RULES_VERSION = "rules-2"
DEFAULT_SPEAKER = "user"

DETERMINERS = frozenset(
    {"the", "a", "an", "this", "that", "these", "those", "our", "your", "their", "his", "her", "its"}
)
SPEAKER_WORDS = frozenset({"i", "me", "we", "us", "myself"})
UNRESOLVED_PRONOUNS = frozenset({"he", "she", "they", "them", "him", "there", "here", "you"})
CONTEXT_PRONOUNS = frozenset({"it", "this", "that"})
WH_WORDS = frozenset({"what", "when", "where", "who", "whom", "which", "why", "how", "whose"})
AUX_WORDS = frozenset(
    {
        "is", "are", "was", "were", "am", "do", "does", "did", "can", "could", "will",
        "would", "should", "shall", "may", "might", "have", "has", "had",
    }
)
STOPWORDS = (
    DETERMINERS
    | SPEAKER_WORDS
    | UNRESOLVED_PRONOUNS
    | CONTEXT_PRONOUNS
    | WH_WORDS
    | AUX_WORDS
    | frozenset(
        {
            "my", "mine", "and", "or", "but", "plus", "of", "in", "on", "at", "to", "for",
            "from", "with", "by", "about", "as", "into", "over", "after", "before", "than",
            "then", "so", "if", "not", "no", "yes", "please", "also", "just", "now", "again",
            "very", "really", "some", "any", "all", "each", "every", "be", "been", "being",
            "hi", "hello", "hey", "thanks", "thank", "okay", "ok", "sure", "well", "oh",
            "sorry", "let", "remember", "note", "actually", "maybe", "perhaps", "today",
            "tomorrow", "yesterday", "tonight", "currently", "still", "soon", "next", "last",
            "our", "your", "their", "it's", "i'm", "that's", "what's", "don't", "can't",
        }
    )
)
MONTHS = frozenset(
    {
        "january", "february", "march", "april", "may", "june", "july", "august",
        "september", "october", "november", "december",
    }
)
WEEKDAYS = frozenset(
    {"monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"}
)
UNIT_WORDS = frozenset(
    {
        "day", "days", "week", "weeks", "month", "months", "year", "years", "hour", "hours",
        "minute", "minutes", "kg", "km", "miles", "percent", "%", "usd", "eur", "dollars",
        "euros", "items", "pieces", "times",
    }
)

RECURRING_WORDS = frozenset(
    {"every", "daily", "weekly", "monthly", "yearly", "annually", "usually", "always", "often", "routinely"}
)
FUTURE_WORDS = frozenset(
    {"will", "tomorrow", "next", "soon", "upcoming", "gonna", "planning", "plan", "intend", "shall"}
)
PAST_WORDS = frozenset(
    {"was", "were", "did", "had", "yesterday", "ago", "last", "previously", "formerly", "earlier"}
)
PRESENT_WORDS = frozenset(
    {"is", "are", "am", "now", "currently", "today", "has", "have", "do", "does", "still", "nowadays"}
)
NOT_PAST_ED = frozenset(
    {"need", "indeed", "speed", "exceed", "proceed", "succeed", "hundred", "embed", "feed", "seed", "breed", "united"}
)

_ADVERB = r"(?:(?:now|currently|still|also|recently|just|already|actually) )?"
_AUX = r"(?:(?:will|would|did|does|do|has|have|had|am going to|is going to|are going to) )?"
_COPULA = r"(?:is|are|was|were|will be|has been|have been)"

# (label, verb alternation, marks a preference)
VERB_PATTERNS: tuple[tuple[str, str, bool], ...] = (
    ("lives_in", r"(?:lives|live|lived|living|resides|reside|resided|stays|stay) in", False),
    ("lives_in", r"(?:moved|moves|move|moving|relocated|relocates|relocate) to", False),
    ("works_at", r"(?:works|work|worked|working) (?:at|for)", False),
    ("works_at", r"is employed (?:at|by)", False),
    ("owns", r"(?:owns|own|owned)", False),
    ("visited", r"(?:visited|visits|visit)", False),
    ("prefers", r"(?:likes|like|loves|love|prefers|prefer|enjoys|enjoy)", True),
    ("purchased", r"(?:bought|buys|buy|ordered|orders|purchased|purchases|purchase)", False),
)
VERB_LABELS = frozenset(label for label, _, _ in VERB_PATTERNS)

_COMPILED_VERBS = tuple(
    (label, re.compile(rf"^(?P<subj>.+?) {_ADVERB}{_AUX}(?P<verb>{verbs}) (?P<obj>.+)$"), pref)
    for label, verbs, pref in VERB_PATTERNS
)
_SPEAKER_POSSESSIVE = re.compile(
    rf"^(?:my|our) (?P<attr>[a-z][a-z \-]{{0,40}}?) {_COPULA} (?P<obj>.+)$"
)
_ENTITY_POSSESSIVE = re.compile(
    rf"^(?P<subj>.+?)['’]s (?P<attr>[a-z][a-z \-]{{0,40}}?) {_COPULA} (?P<obj>.+)$"
)
_ATTRIBUTE_OF = re.compile(
    rf"^(?:the )?(?P<attr>[a-z][a-z \-]{{0,40}}?) of (?P<subj>.+?) {_COPULA} (?P<obj>.+)$"
)
_COPULA_RE = re.compile(rf"^(?P<subj>.+?) (?P<verb>{_COPULA}) (?P<obj>.+)$")
_CLAUSE_SPLIT = re.compile(r"[!?;]+|\.(?!\d)")

MAX_ARGUMENT_WORDS = 6


class Annotator(Protocol):
    def annotate(
        self, utterance: str, context: Sequence[str] = (), speaker: str = DEFAULT_SPEAKER
    ) -> SemanticAnchorSet: ...


def _read_lines(path: str | Path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line.strip().lower() for line in lines if line.strip() and not line.startswith("#")]


def _strip_determiners(phrase: str) -> str:
    words = phrase.split()
    while words and words[0] in DETERMINERS:
        words = words[1:]
    return " ".join(words)


@dataclass(frozen=True)
class _Span:
    surface: str
    category: str


class RuleAnnotator:
    """Deterministic rule-based annotator."""

    def __init__(
        self,
        gazetteer: Iterable[str] = (),
        lexicon: dict[str, tuple[str, float]] | None = None,
        acknowledgments: Iterable[str] = (),
    ):
        self.gazetteer = tuple(sorted({normalize(g) for g in gazetteer if normalize(g)}))
        self.acknowledgments = frozenset(normalize(a) for a in acknowledgments)
        self.lexicon = {
            normalize(word): (EmotionLabel(label), float(weight))
            for word, (label, weight) in (lexicon or {}).items()
        }
        self._gazetteer_res = [
            (term, re.compile(rf"(?<![\w-]){re.escape(term)}(?![\w-])")) for term in self.gazetteer
        ]
        self._lexicon_res = [
            (re.compile(rf"(?<![\w-]){re.escape(word)}(?![\w-])"), label, weight)
            for word, (label, weight) in sorted(self.lexicon.items())
        ]

    @classmethod
    def from_files(
        cls,
        gazetteer_path: str | Path,
        lexicon_path: str | Path,
        acknowledgments_path: str | Path,
    ) -> "RuleAnnotator":
        raw_lexicon = json.loads(Path(lexicon_path).read_text(encoding="utf-8"))
        return cls(
            gazetteer=_read_lines(gazetteer_path),
            lexicon={word: (entry[0], entry[1]) for word, entry in raw_lexicon.items()},
            acknowledgments=_read_lines(acknowledgments_path),
        )

    def annotate(
        self, utterance: str, context: Sequence[str] = (), speaker: str = DEFAULT_SPEAKER
    ) -> SemanticAnchorSet:
        """
        Extract semantic anchors from one utterance.

        Args:
            utterance: Raw utterance text
            context: Prior utterances of the dialogue, oldest first
            speaker: Who said it; first-person references resolve to this name

        Returns:
            SemanticAnchorSet

        Raises:
            EmptyUtterance: If the utterance has no words
        """
        normalized = normalize(utterance)
        raw_tokens = tokenize(utterance)
        words = [t.lower() for t in raw_tokens if t[0].isalnum()]
        if not normalized or not words:
            raise EmptyUtterance("utterance is empty")

        speaker_name = normalize(speaker) or DEFAULT_SPEAKER
        act = self._dialogue_act(utterance, words)
        temporal = classify_temporal(words)
        emotion = self._emotion(normalized)
        if act is DialogueAct.ACKNOWLEDGMENT:
            return SemanticAnchorSet(temporal_class=temporal, emotion=emotion, dialogue_act=act)

        spans = self._strong_spans(normalized, raw_tokens)
        relations: list[Relation] = []
        triples: list[Triple] = []
        facts: list[str] = []
        preferences: list[str] = []

        if act is DialogueAct.STATEMENT:
            referent = self._context_referent(context)
            for clause in _CLAUSE_SPLIT.split(utterance):
                clause_text = normalize(strip_punctuation(clause))
                if not clause_text:
                    continue
                match = self._match_relation(clause_text, speaker_name, referent)
                if match is not None:
                    relation, verb, is_preference = match
                    relations.append(relation)
                    triples.append(Triple(subject=relation.head, predicate=verb, object=relation.tail))
                    facts.append(render_relation(relation))
                    if is_preference:
                        preferences.append(f"pref:{snake_case(relation.tail)}")
                elif len(clause_text.split()) >= 3 and any(
                    _contains_phrase(clause_text, span.surface) for span in spans
                ):
                    facts.append(clause_text)

        entities = self._entities(spans, relations, words)
        return SemanticAnchorSet(
            entities=tuple(entities),
            triples=tuple(dict.fromkeys(triples)),
            facts=tuple(dict.fromkeys(facts)),
            relations=tuple(dict.fromkeys(relations)),
            temporal_class=temporal,
            emotion=emotion,
            dialogue_act=act,
            preference_tags=tuple(sorted(set(preferences))),
        )

    def _dialogue_act(self, utterance: str, words: list[str]) -> DialogueAct:
        if self.acknowledgments and all(word in self.acknowledgments for word in words):
            return DialogueAct.ACKNOWLEDGMENT
        if utterance.rstrip().endswith("?") or words[0] in WH_WORDS or words[0] in AUX_WORDS:
            return DialogueAct.QUESTION
        return DialogueAct.STATEMENT

    def _emotion(self, normalized: str) -> EmotionTag:
        scores: dict[EmotionLabel, float] = {}
        for pattern, label, weight in self._lexicon_res:
            hits = len(pattern.findall(normalized))
            if hits:
                scores[label] = scores.get(label, 0.0) + weight * hits
        if not scores:
            return EmotionTag()
        order = list(EmotionLabel)
        label = max(scores, key=lambda lbl: (scores[lbl], -order.index(lbl)))
        return EmotionTag(label=label, intensity=min(1.0, round(scores[label], 12)))

    def _strong_spans(self, normalized: str, raw_tokens: list[str]) -> list[_Span]:
        spans: list[_Span] = []
        current: list[str] = []

        def flush() -> None:
            while current and current[0].lower() in STOPWORDS:
                current.pop(0)
            if current:
                surface = " ".join(token.lower() for token in current)
                category = "temporal" if current[-1].lower() in MONTHS | WEEKDAYS else "name"
                spans.append(_Span(surface, category))
            current.clear()

        for index, token in enumerate(raw_tokens):
            bare = strip_possessive(token)
            if bare and bare[0].isalpha() and bare[0].isupper():
                current.append(bare)
                if bare != token:
                    flush()
                continue
            if token[0].isdigit():
                if current and current[-1].lower() in MONTHS:
                    current.append(token)
                    flush()
                    continue
                flush()
                surface = token.lower()
                following = raw_tokens[index + 1].lower() if index + 1 < len(raw_tokens) else ""
                if following in UNIT_WORDS:
                    surface = f"{surface} {following}"
                spans.append(_Span(surface, "quantity"))
                continue
            flush()
        flush()

        for term, pattern in self._gazetteer_res:
            if pattern.search(normalized):
                spans.append(_Span(term, "gazetteer"))
        return list({span.surface: span for span in spans}.values())

    def _context_referent(self, context: Sequence[str]) -> str | None:
        for previous in reversed(context):
            if not normalize(previous):
                continue
            spans = self._strong_spans(normalize(previous), tokenize(previous))
            if spans:
                return spans[-1].surface
        return None

    def _resolve_subject(self, raw: str, speaker: str, referent: str | None) -> str | None:
        subject = _strip_determiners(raw.strip())
        if not subject or len(subject.split()) > MAX_ARGUMENT_WORDS:
            return None
        if subject in SPEAKER_WORDS:
            return speaker
        if subject in CONTEXT_PRONOUNS:
            return referent
        if subject in UNRESOLVED_PRONOUNS or subject.split()[0] in WH_WORDS:
            return None
        return subject

    def _match_relation(
        self, clause: str, speaker: str, referent: str | None
    ) -> tuple[Relation, str, bool] | None:
        match = _SPEAKER_POSSESSIVE.match(clause)
        if match:
            return self._build(speaker, snake_case(match["attr"]), match["obj"], "is")

        match = _ENTITY_POSSESSIVE.match(clause)
        if match:
            head = self._resolve_subject(match["subj"], speaker, referent)
            if head:
                return self._build(head, snake_case(match["attr"]), match["obj"], "is")

        match = _ATTRIBUTE_OF.match(clause)
        if match:
            head = self._resolve_subject(match["subj"], speaker, referent)
            if head:
                return self._build(head, snake_case(match["attr"]), match["obj"], "is")

        for label, pattern, is_preference in _COMPILED_VERBS:
            match = pattern.match(clause)
            if match:
                head = self._resolve_subject(match["subj"], speaker, referent)
                if head:
                    built = self._build(head, label, match["obj"], match["verb"])
                    if built:
                        return built[0], built[1], is_preference

        match = _COPULA_RE.match(clause)
        if match:
            head = self._resolve_subject(match["subj"], speaker, referent)
            if head:
                return self._build(head, "is", match["obj"], match["verb"])
        return None

    @staticmethod
    def _build(head: str, label: str, raw_tail: str, verb: str) -> tuple[Relation, str, bool] | None:
        tail = _strip_determiners(strip_punctuation(raw_tail))
        if not tail or not label or len(tail.split()) > MAX_ARGUMENT_WORDS:
            return None
        tail_words = tail.split()
        if tail_words[0] in SPEAKER_WORDS and len(tail_words) == 1:
            return None
        return Relation(head=head, label=label, tail=tail), verb, False

    @staticmethod
    def _entities(spans: list[_Span], relations: list[Relation], words: list[str]) -> list[Entity]:
        strong: dict[str, Entity] = {}
        for span in spans:
            strong.setdefault(span.surface, Entity(surface=span.surface, kind=EntityKind.STRONG, category=span.category))
        for relation in relations:
            for arg in (relation.head, relation.tail):
                strong.setdefault(arg, Entity(surface=arg, kind=EntityKind.STRONG, category="argument"))

        covered = {word for surface in strong for word in surface.split()}
        weak: dict[str, Entity] = {}
        for word in words:
            bare = strip_possessive(word)
            if (
                bare.isalpha()
                and len(bare) >= 3
                and bare not in STOPWORDS
                and bare not in covered
                and bare not in strong
            ):
                weak.setdefault(bare, Entity(surface=bare, kind=EntityKind.WEAK, category="noun"))
        return [*strong.values(), *weak.values()]


def _contains_phrase(text: str, phrase: str) -> bool:
    return re.search(rf"(?<![\w-]){re.escape(phrase)}(?![\w-])", text) is not None


def classify_temporal(words: Sequence[str]) -> TemporalClass:
    """Keyword temporal class; precedence Recurring > Future > Past > Present."""
    lowered = [w.lower() for w in words]
    vocabulary = set(lowered)
    joined = " ".join(lowered)
    if vocabulary & RECURRING_WORDS:
        return TemporalClass.RECURRING
    if vocabulary & FUTURE_WORDS or "going to" in joined:
        return TemporalClass.FUTURE
    if vocabulary & PAST_WORDS or any(
        w.endswith("ed") and len(w) >= 5 and w.isalpha() and w not in NOT_PAST_ED for w in lowered
    ):
        return TemporalClass.PAST
    if vocabulary & PRESENT_WORDS:
        return TemporalClass.PRESENT
    return TemporalClass.ATEMPORAL


def render_relation(relation: Relation) -> str:
    """Canonical fact text for a relation."""
    if relation.label == "is":
        return f"{relation.head} = {relation.tail}"
    words = relation.label.replace("_", " ")
    if relation.label in VERB_LABELS:
        return f"{relation.head} {words} {relation.tail}"
    return f"{relation.head} {words} = {relation.tail}"


def fact_key_for(relation: Relation | None, content: str, functional: Iterable[str]) -> str:
    """Functional relations key on their slot; every other fact keys on its full content."""
    if relation is None:
        return content
    if relation.label in set(functional):
        return f"{relation.head}|{relation.label}"
    return f"{relation.head}|{relation.label}|{relation.tail}"


def utterance_ref(raw: str) -> str:
    return "utt:" + hashlib.sha256(normalize(raw).encode("utf-8")).hexdigest()[:12]


def _scope_anchors(anchors: SemanticAnchorSet, fact: str, relation: Relation | None) -> SemanticAnchorSet:
    args = {relation.head, relation.tail} if relation else set()
    entities = tuple(
        e for e in anchors.entities if e.surface in args or _contains_phrase(fact, e.surface)
    )
    if relation is None:
        triples: tuple[Triple, ...] = ()
        relations: tuple[Relation, ...] = ()
    else:
        relations = (relation,)
        triples = tuple(
            t for t in anchors.triples if (t.subject, t.object) == (relation.head, relation.tail)
        )
    return anchors.model_copy(
        update={"entities": entities, "triples": triples, "facts": (fact,), "relations": relations}
    )


def generate_units(
    anchors: SemanticAnchorSet,
    raw: str,
    now: int,
    space: str,
    *,
    utterance_id: str | None = None,
    speaker: str | None = None,
    tags: Iterable[str] = (),
    embedder: EmbeddingProvider | None = None,
    functional_relations: Iterable[str] = DEFAULT_FUNCTIONAL_RELATIONS,
) -> list[MemoryUnit]:
    """
    Build one memory unit per distinct fact of an annotated utterance.

    Args:
        anchors: Output of ``annotate`` on ``raw``
        raw: The utterance text
        now: Creation timestamp (seconds)
        space: Memory space id
        utterance_id: Provenance reference; defaults to a content hash of ``raw``

    Returns:
        Units without ids; the store assigns ids on insert.
    """
    embedder = embedder or get_embedder()
    functional = tuple(functional_relations)
    by_text = {render_relation(rel): rel for rel in anchors.relations}
    provenance = (utterance_id or utterance_ref(raw),)
    tag_set = tuple(sorted(set(tags) | set(anchors.preference_tags)))

    units: list[MemoryUnit] = []
    seen: set[str] = set()
    for fact in anchors.facts:
        content = normalize(fact)
        if not content or content in seen:
            continue
        seen.add(content)
        relation = by_text.get(content)
        units.append(
            MemoryUnit(
                space_id=space,
                kind=UnitKind.FACT,
                content=content,
                fact_key=fact_key_for(relation, content, functional),
                relation=relation,
                anchors=_scope_anchors(anchors, content, relation),
                embedding=embedder.embed(content),
                created_at=now,
                trace=ActivationTrace.created(now),
                emotion_weight=anchors.emotion.intensity,
                preference_tags=tag_set,
                provenance=provenance,
                speaker=speaker,
            )
        )
    return units


def make_turn_unit(
    anchors: SemanticAnchorSet,
    raw: str,
    now: int,
    space: str,
    *,
    utterance_id: str | None = None,
    speaker: str | None = None,
    embedder: EmbeddingProvider | None = None,
) -> MemoryUnit:
    """Unit for an utterance that carries no fact (questions, acknowledgments, chit-chat)."""
    embedder = embedder or get_embedder()
    content = normalize(strip_punctuation(raw)) or normalize(raw)
    return MemoryUnit(
        space_id=space,
        kind=UnitKind.TURN,
        content=content,
        anchors=anchors,
        embedding=embedder.embed(content),
        created_at=now,
        trace=ActivationTrace.created(now),
        emotion_weight=anchors.emotion.intensity,
        provenance=(utterance_id or utterance_ref(raw),),
        speaker=speaker,
    )


class HttpAnnotator:
    """Delegates annotation to an external service over HTTP.

    Request body ``{"utterance", "context", "speaker"}``; the response must
    validate as ``SemanticAnchorSet``.
    """

    def __init__(
        self,
        url: str,
        timeout: float = 5.0,
        fallback: Annotator | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.url = url
        self.timeout = timeout
        self.fallback = fallback
        self._transport = transport

    def annotate(
        self, utterance: str, context: Sequence[str] = (), speaker: str = DEFAULT_SPEAKER
    ) -> SemanticAnchorSet:
        if not normalize(utterance):
            raise EmptyUtterance("utterance is empty")
        try:
            with httpx.Client(timeout=self.timeout, transport=self._transport) as client:
                response = client.post(
                    self.url,
                    json={"utterance": utterance, "context": list(context), "speaker": speaker},
                )
                response.raise_for_status()
                return SemanticAnchorSet.model_validate(response.json())
        except (httpx.HTTPError, ValidationError, ValueError) as exc:
            if self.fallback is None:
                raise AnnotatorUnavailable(f"annotator at {self.url} failed: {exc}") from exc
            logger.warning("External annotator failed (%s); using rule-based fallback", exc)
            return self.fallback.annotate(utterance, context, speaker)


@lru_cache(maxsize=8)
def _rule_annotator(gazetteer: str, lexicon: str, acknowledgments: str) -> RuleAnnotator:
    return RuleAnnotator.from_files(gazetteer, lexicon, acknowledgments)


def get_default_annotator(settings: Settings | None = None) -> RuleAnnotator:
    memory = settings.memory if settings is not None else Settings.model_fields["memory"].default
    return _rule_annotator(memory.gazetteer_path, memory.lexicon_path, memory.acknowledgments_path)


def build_annotator(settings: Settings) -> Annotator:
    """Rule-based annotator, or the HTTP adapter when one is configured."""
    rule = get_default_annotator(settings)
    config = settings.annotator
    if not config.adapter_url:
        return rule
    return HttpAnnotator(
        config.adapter_url,
        timeout=config.timeout_seconds,
        fallback=rule if config.fallback_to_default else None,
    )
