"""Synthetic dialogue corpora with known redundancy, contradictions and answer keys.

A corpus states ``facts`` distinct facts, repeats each one ``dup`` times in
shuffled rounds, sprinkles assistant acknowledgments, and finally restates
``contradictions`` of the residence facts with a new city after a gap. Every
fact has one probe question whose expected answer is the unit carrying the
probe's fact key.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.config import DEFAULT_FUNCTIONAL_RELATIONS
from app.models.api import IngestRequest
from app.models.corpus import Corpus, CorpusConfig, Probe
from app.services.annotation_service import (
    MONTHS,
    STOPWORDS,
    Annotator,
    fact_key_for,
    get_default_annotator,
    render_relation,
)
from app.utils.text import count_tokens, normalize

logger = logging.getLogger(__name__)

DIALOGUE_FILE = "dialogue.jsonl"
PROBES_FILE = "probes.jsonl"

USER = "user"
ASSISTANT = "assistant"

SYLLABLES = (
    "ka", "lo", "mi", "ra", "ven", "dor", "sa", "ti", "nu", "bel", "gor", "fi",
    "zan", "qui", "mar", "tel", "vo", "ris", "pa", "ul", "ke", "dru", "sen", "ob",
    "lin", "tas", "ye", "hal", "wen", "cor",
)
ATTRIBUTES = (
    "favorite color",
    "shoe size",
    "locker code",
    "seat preference",
    "coffee order",
    "gym day",
    "pet name",
    "lucky charm",
)
NOTE_TERMS = (
    "warranty",
    "return policy",
    "refund",
    "invoice",
    "receipt",
    "subscription",
    "membership",
    "loyalty points",
    "shipping address",
    "tracking number",
    "insurance",
    "appointment",
    "reservation",
)
MONTH_NAMES = tuple(
    m.capitalize()
    for m in (
        "january", "february", "march", "april", "june", "july", "august",
        "september", "october", "november", "december",
    )
)
ACKNOWLEDGMENTS = ("Okay, got it.", "Thanks!", "Understood.", "Sounds good.", "Makes sense.")


class _WordSource:
    """Unique pronounceable words drawn from a seeded generator."""

    def __init__(self, rng: np.random.Generator, reserved: Iterable[str] = ()):
        self._rng = rng
        self._used = {word.lower() for word in reserved}

    def take(self) -> str:
        while True:
            length = int(self._rng.integers(3, 5))
            picks = self._rng.integers(0, len(SYLLABLES), size=length)
            word = "".join(SYLLABLES[i] for i in picks)
            if word not in self._used:
                self._used.add(word)
                return word


def fact_key_of(
    statement: str,
    annotator: Annotator,
    functional_relations: Iterable[str] = DEFAULT_FUNCTIONAL_RELATIONS,
    speaker: str = USER,
) -> str:
    """Fact key the ingestion pipeline assigns to the first fact of ``statement``."""
    anchors = annotator.annotate(statement, (), speaker)
    if not anchors.facts:
        raise ValueError(f"statement carries no fact: {statement!r}")
    content = normalize(anchors.facts[0])
    relation = next((r for r in anchors.relations if render_relation(r) == content), None)
    return fact_key_for(relation, content, functional_relations)


@dataclass(frozen=True, slots=True)
class _Fact:
    statement: str
    probe: Probe
    variant: str | None = None
    update: str | None = None


def _build_facts(
    config: CorpusConfig,
    words: _WordSource,
    annotator: Annotator,
    functional: tuple[str, ...],
) -> list[_Fact]:
    facts: list[_Fact] = []
    for index in range(config.facts):
        name = words.take().capitalize()
        if index < config.contradictions:
            old_city, new_city = words.take().capitalize(), words.take().capitalize()
            statement = f"{name} lives in {old_city}."
            update = f"{name} now lives in {new_city}."
            key = fact_key_of(statement, annotator, functional)
            if fact_key_of(update, annotator, functional) != key:
                raise ValueError(f"update does not share the slot of {statement!r}")
            probe = Probe(question=f"Where does {name} live?", fact_key=key, answer=new_city.lower())
            facts.append(_Fact(statement, probe, update=update))
            continue

        slot = index - config.contradictions
        if slot % 2 == 0:
            attribute = ATTRIBUTES[(slot // 2) % len(ATTRIBUTES)]
            value = words.take()
            statement = f"{name}'s {attribute} is {value}."
            probe = Probe(
                question=f"What is {name}'s {attribute}?",
                fact_key=fact_key_of(statement, annotator, functional),
                answer=value,
            )
            facts.append(_Fact(statement, probe))
        else:
            note = slot // 2
            term = NOTE_TERMS[note % len(NOTE_TERMS)]
            month = MONTH_NAMES[(note // len(NOTE_TERMS)) % len(MONTH_NAMES)]
            order = 1000 + note
            statement = f"{name} mentioned the {term} for order {order} in {month}."
            variant = f"{name} mentioned the {term}, for order {order} in {month}."
            probe = Probe(
                question=f"What did {name} mention about the {term}?",
                fact_key=fact_key_of(statement, annotator, functional),
                answer=f"order {order}",
            )
            facts.append(_Fact(statement, probe, variant=variant))
    return facts


def generate_corpus(
    config: CorpusConfig | None = None,
    *,
    annotator: Annotator | None = None,
    functional_relations: Iterable[str] = DEFAULT_FUNCTIONAL_RELATIONS,
) -> Corpus:
    """
    Generate a deterministic corpus for ``config``.

    The same config and seed always give the same dialogue and probes.
    """
    config = config or CorpusConfig()
    annotator = annotator or get_default_annotator()
    functional = tuple(functional_relations)
    rng = np.random.default_rng(config.seed)
    words = _WordSource(rng, reserved=STOPWORDS | MONTHS | set(NOTE_TERMS))
    facts = _build_facts(config, words, annotator, functional)

    turns: list[IngestRequest] = []
    redundant = 0
    ts = config.start_ts

    def say(utterance: str, speaker: str, *, is_redundant: bool) -> None:
        nonlocal ts, redundant
        turns.append(IngestRequest(utterance=utterance, speaker=speaker, ts=ts, dialogue=config.dialogue))
        ts += config.step_seconds
        if is_redundant:
            redundant += count_tokens(utterance)

    for round_no in range(config.dup):
        for index in rng.permutation(len(facts)).tolist():
            fact = facts[index]
            text = fact.variant if (round_no % 2 == 1 and fact.variant) else fact.statement
            say(text, USER, is_redundant=round_no > 0)
            if config.ack_rate and rng.random() < config.ack_rate:
                ack = ACKNOWLEDGMENTS[int(rng.integers(0, len(ACKNOWLEDGMENTS)))]
                say(ack, ASSISTANT, is_redundant=True)

    updates = [fact.update for fact in facts if fact.update]
    if updates:
        ts += config.contradiction_gap_seconds
        for update in updates:
            say(update, USER, is_redundant=False)

    corpus = Corpus(
        config=config,
        turns=turns,
        probes=[fact.probe for fact in facts],
        redundant_tokens=redundant,
    )
    logger.info(
        "Generated corpus: %d turn(s), %d fact(s), %d contradiction(s), %d redundant token(s)",
        len(turns),
        len(facts),
        len(updates),
        redundant,
    )
    return corpus


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def write_corpus(corpus: Corpus, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``dialogue.jsonl`` and ``probes.jsonl`` under ``out_dir``."""
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    dialogue_path = target / DIALOGUE_FILE
    probes_path = target / PROBES_FILE
    _write_jsonl(dialogue_path, (t.model_dump(exclude={"tags"}) for t in corpus.turns))
    _write_jsonl(probes_path, (p.model_dump() for p in corpus.probes))
    logger.info("Wrote corpus to %s", target)
    return dialogue_path, probes_path


def _read_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    with Path(path).open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if line.strip():
                try:
                    yield line_no, json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{line_no}: {exc.msg}") from exc


def read_dialogue(path: str | Path) -> list[IngestRequest]:
    """Ingest requests from a JSON-lines file of ``{utterance, speaker, ts}`` rows."""
    return [IngestRequest.model_validate(row) for _, row in _read_jsonl(path)]


def read_probes(path: str | Path) -> list[Probe]:
    return [Probe.model_validate(row) for _, row in _read_jsonl(path)]
