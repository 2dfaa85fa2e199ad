"""Seeded synthetic conflict corpora.

Generates knowledge triples over a closed relation inventory, renders each
fact through hand-written surface templates, and derives the three companion
statements used for contrastive training: a paraphrase (same fact, different
wording), a contradiction (same subject and relation, different object, or a
negated relation), and an unrelated statement (different subject and
relation). Also builds QA cases that pair templated questions with golden,
conflicting, or irrelevant contexts.

Every template is invertible: :func:`extract_fact` recovers (subject,
relation, object, negated) from any rendered sentence, which is what the
round-trip tests and the context reader in the benchmark harness rely on.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    CapacityError,
    ConfigError,
    DataFormatError,
    DomainError,
    EmptyInputError,
)

SPLITS = ("train", "dev", "test")
CONTEXT_TYPES = ("golden", "conflicting", "irrelevant")


@dataclass(frozen=True)
class KnowledgeTriple:
    id: str
    subject: str
    relation: str
    object: str


@dataclass(frozen=True)
class ConflictTriple:
    base: KnowledgeTriple
    statement: str
    paraphrase: str
    contradiction: str
    unrelated: str
    split: str


@dataclass(frozen=True)
class QACase:
    id: str
    question: str
    gold_answer: str
    context: str
    context_type: str
    closed_book_correct: bool


# ---------------------------------------------------------------------------
# Bundled lexicons. Entity names are synthetic but natural-looking, built
# compositionally so each relation has enough unique subjects for corpora of
# several thousand triples.
# ---------------------------------------------------------------------------

_CITY_STEMS = [
    "Arden", "Bellmore", "Calder", "Dunwick", "Elsmere", "Farrow", "Gilwood",
    "Harlan", "Ivers", "Jorvik", "Kellen", "Lismore", "Marlowe", "Norfield",
    "Ostbridge", "Penrith", "Quarley", "Ravenholt", "Selwick", "Tarnmouth",
    "Uxley", "Varden", "Westray", "Yarrowby", "Zedmore", "Ashford", "Braxton",
    "Corwen", "Dalmuir", "Eastvale", "Fenwick", "Garmouth", "Holbeck",
    "Ingleton", "Jesmond", "Kirkwall", "Lynmouth", "Morland", "Netherby",
    "Oxcroft",
]
_CITY_PREFIXES = [
    "North", "South", "East", "West", "New", "Old", "Upper", "Lower", "Port",
    "Lake", "Mount", "Fort", "Glen", "Bay", "Cape", "Little", "Great",
    "Saint", "Mid", "High", "Low", "Far", "Near", "Outer", "Inner", "Royal",
]
CITIES = _CITY_STEMS + [f"{p} {s}" for p in _CITY_PREFIXES for s in _CITY_STEMS]

_COUNTRY_HEADS = [
    "Vel", "Kas", "Mor", "Thal", "Bren", "Ald", "Cor", "Dag", "Els", "Fen",
    "Gal", "Hol", "Ist", "Jor", "Kel", "Lor", "Mar", "Nor", "Os", "Pel",
    "Quil", "Ros", "Syl", "Tor", "Ul", "Var", "Wes", "Yar", "Zel", "Bal",
]
_COUNTRY_TAILS = [
    "doria", "mark", "land", "avia", "onia", "istan", "grad", "burg",
    "mora", "heim", "stine", "vania",
]
COUNTRIES = [h + t for h in _COUNTRY_HEADS for t in _COUNTRY_TAILS]

_FIRST_NAMES = [
    "Adele", "Bram", "Clara", "Doran", "Elif", "Farid", "Greta", "Hugo",
    "Iris", "Jonas", "Kira", "Lior", "Mara", "Nils", "Ola", "Petra", "Quinn",
    "Rafa", "Sena", "Tycho", "Uma", "Viktor", "Wilma", "Xenia", "Yusuf",
    "Zora", "Anton", "Beata", "Casimir", "Delia", "Edmund", "Flora", "Gaspar",
    "Hedda", "Ingmar", "Jolan", "Katrin", "Lennart", "Mireille", "Nadia",
]
_LAST_NAMES = [
    "Abernathy", "Bergstrom", "Calloway", "Drexler", "Eastgate", "Fairbairn",
    "Goswami", "Halloran", "Iverson", "Jankowski", "Kesler", "Lindqvist",
    "Montrose", "Navarro", "Oakhurst", "Pellerin", "Quintana", "Rosewood",
    "Sandoval", "Thackeray", "Underwood", "Vasquez", "Whitfield", "Xanthos",
    "Yarrow", "Zeller", "Ashcombe", "Birkeland", "Cromwell", "Dunmore",
    "Ellery", "Fontaine", "Grimaldi", "Hawthorne", "Ibarra", "Juneau",
    "Kingsley", "Lockhart", "Merriweather", "Northgate",
]
PERSONS = [f"{f} {l}" for f in _FIRST_NAMES for l in _LAST_NAMES]

# Inventors are an object pool, so their name parts deliberately share no
# word with any subject pool (see the vocabulary-disjointness test).
_INVENTOR_FIRSTS = [
    "Abelard", "Brunhild", "Cosimo", "Dagny", "Emeric", "Fioretta",
    "Gunther", "Helvig", "Isolde", "Jurgen", "Klemens", "Leopolda",
    "Matthias", "Nikolaus", "Ottoline", "Perpetua", "Quirin", "Rosalind",
    "Siegfried", "Theodora",
]
_INVENTOR_LASTS = [
    "Achterberg", "Blumenthal", "Castellano", "Delacroix", "Eichenwald",
    "Falkenrath", "Giordano", "Hollenbeck", "Ivanovich", "Jespersen",
    "Kaufmann", "Lindenholm", "Morgenstern", "Nachtigall", "Obermann",
    "Pfeiffer", "Quandt", "Rotherham", "Schoenfeld", "Tannhauser",
    "Ulfbert", "Vandermeer", "Wexford", "Zimmermann",
]
INVENTORS = [f"{f} {l}" for f in _INVENTOR_FIRSTS for l in _INVENTOR_LASTS]

YEARS = [str(y) for y in range(1700, 2000)]

_BOOK_ADJECTIVES = [
    "Silent", "Crimson", "Forgotten", "Gilded", "Hollow", "Ashen", "Jade",
    "Lunar", "Midnight", "Pale", "Obsidian", "Painted", "Quiet",
    "Restless", "Scarlet", "Twilight", "Umber", "Velvet", "Wandering",
    "Winter", "Amber", "Broken", "Celestial", "Distant", "Emerald", "Frozen",
    "Golden", "Hidden", "Ivory", "Jeweled",
]
_BOOK_NOUNS = [
    "Meadow", "Harbor", "River", "Mountain", "Letter", "Mirror", "Orchard",
    "Palace", "Road", "Season", "Summit", "Voyage", "Window", "Atlas",
    "Crossing", "Compass", "Dream", "Echo", "Forest", "Gate", "Horizon",
    "Island", "Journey", "Key", "Lantern", "Map", "Night", "Ocean", "Path",
    "Quarry", "Reckoning", "Shore", "Tide", "Umbrella", "Valley", "Whisper",
    "Year", "Archive", "Ballad", "Chronicle",
]
BOOKS = [f"The {a} {n}" for a in _BOOK_ADJECTIVES for n in _BOOK_NOUNS]

_LANDMARK_NAMES = [
    "Falcon", "Heron", "Granite", "Crystal", "Willow", "Cedar", "Marble",
    "Copper", "Silver", "Ember", "Frost", "Garnet", "Hazel", "Juniper",
    "Laurel", "Maple", "Onyx", "Pearl", "Quartz", "Raven", "Sable",
    "Thistle", "Vesper", "Walnut", "Aspen", "Birch", "Cobalt", "Drift",
    "Elder", "Fern", "Gorse", "Heath", "Ivy", "Jasper", "Kestrel", "Larch",
    "Moss", "Nettle", "Osprey", "Pine", "Reed", "Sorrel", "Teak", "Vervain",
    "Wren",
]
_LANDMARK_KINDS = [
    "Bridge", "Museum", "Tower", "Cathedral", "Observatory", "Library",
    "Fountain", "Gallery", "Amphitheater", "Aqueduct", "Castle", "Garden",
    "Lighthouse", "Monument", "Obelisk", "Pavilion", "Plaza", "Statue",
    "Temple", "Belfry",
]
LANDMARKS = [f"{n} {k}" for n in _LANDMARK_NAMES for k in _LANDMARK_KINDS]

_DEVICE_FIRST = [
    "rotary", "harmonic", "magnetic", "optical", "thermal", "acoustic",
    "hydraulic", "pneumatic", "crystalline", "helical", "radial", "axial",
    "kinetic", "static", "modular", "compact", "dual", "linear", "orbital",
    "phased", "polar", "quantum", "resonant", "spiral", "tidal", "vector",
    "woven", "zonal", "arc", "beam",
]
_DEVICE_SECOND = [
    "condenser", "regulator", "gyroscope", "telegraph", "chronometer",
    "compressor", "dynamo", "filament", "governor", "injector", "lattice",
    "loom", "manifold", "oscillator", "pendulum", "press", "pump", "relay",
    "resonator", "servo", "sextant", "shutter", "siphon", "spindle",
    "stabilizer", "turbine", "valve", "visor", "winch", "anemometer",
]
DEVICES = [f"{a} {b}" for a in _DEVICE_FIRST for b in _DEVICE_SECOND]

_CURRENCY_FIRST = [
    "silver", "brass", "copper", "iron", "bronze", "azure", "nickel",
    "zinc", "pewter", "tin", "sterling", "pearl", "ruby", "sable",
    "maritime", "coastal", "violet", "northern", "southern", "eastern",
    "western", "royal", "imperial", "federal", "common", "free", "high",
    "old", "new", "grand",
]
_CURRENCY_SECOND = [
    "crown", "florin", "obol", "thaler", "ducat", "guilder", "shilling",
    "penny", "sovereign", "talent", "drachma", "denar", "real", "peso",
    "franc", "krona", "rupee", "dinar", "lira", "escudo",
]
CURRENCIES = [f"{a} {b}" for a in _CURRENCY_FIRST for b in _CURRENCY_SECOND]


# ---------------------------------------------------------------------------
# Relation inventory: surface templates (first one renders the canonical
# statement), a negated form, a question template, and the entity pools.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RelationSpec:
    name: str
    templates: tuple[str, ...]
    negated: str
    question: str
    subjects: list[str]
    objects: list[str]


RELATIONS: dict[str, RelationSpec] = {
    spec.name: spec
    for spec in [
        RelationSpec(
            name="capital_of",
            templates=(
                "{s} is the capital of {o}.",
                "The capital of {o} is {s}.",
                "{s} serves as the capital city of {o}.",
            ),
            negated="It is not true that {s} is the capital of {o}.",
            question="Of which country is {s} the capital?",
            subjects=CITIES,
            objects=COUNTRIES,
        ),
        RelationSpec(
            name="birth_year_of",
            templates=(
                "{s} was born in the year {o}.",
                "The birth year of {s} is {o}.",
                "{s} came into the world in {o}.",
            ),
            negated="It is not true that {s} was born in the year {o}.",
            question="In which year was {s} born?",
            subjects=PERSONS,
            objects=YEARS,
        ),
        RelationSpec(
            name="author_of",
            templates=(
                "{s} is the author of {o}.",
                "{o} was written by {s}.",
                "{s} wrote the book {o}.",
            ),
            negated="It is not true that {s} is the author of {o}.",
            question="Which book was written by {s}?",
            subjects=PERSONS,
            objects=BOOKS,
        ),
        RelationSpec(
            name="located_in",
            templates=(
                "{s} is located in {o}.",
                "You can find {s} in {o}.",
                "{s} stands in {o}.",
            ),
            negated="It is not true that {s} is located in {o}.",
            question="Where is {s} located?",
            subjects=LANDMARKS,
            objects=COUNTRIES,
        ),
        RelationSpec(
            name="invented_by",
            templates=(
                "The {s} was invented by {o}.",
                "{o} is the inventor of the {s}.",
                "The {s} owes its invention to {o}.",
            ),
            negated="It is not true that the {s} was invented by {o}.",
            question="Who invented the {s}?",
            subjects=DEVICES,
            objects=INVENTORS,
        ),
        RelationSpec(
            name="currency_of",
            templates=(
                "The {s} is the currency of {o}.",
                "{o} uses the {s} as its currency.",
                "The official currency of {o} is the {s}.",
            ),
            negated="It is not true that the {s} is the currency of {o}.",
            question="Of which country is the {s} the official currency?",
            subjects=CURRENCIES,
            objects=COUNTRIES,
        ),
    ]
}

RELATION_NAMES = tuple(RELATIONS)


def _template_pattern(template: str) -> re.Pattern:
    out = []
    pos = 0
    for m in re.finditer(r"\{[so]\}", template):
        out.append(re.escape(template[pos : m.start()]))
        out.append(f"(?P<{template[m.start() + 1]}>.+?)")
        pos = m.end()
    out.append(re.escape(template[pos:]))
    return re.compile("^" + "".join(out) + "$")


# Negated patterns first so a positive template can never shadow them.
_EXTRACTORS: list[tuple[str, bool, re.Pattern]] = [
    (spec.name, True, _template_pattern(spec.negated)) for spec in RELATIONS.values()
] + [
    (spec.name, False, _template_pattern(t))
    for spec in RELATIONS.values()
    for t in spec.templates
]

_QUESTION_PATTERNS = [
    (spec.name, _template_pattern(spec.question)) for spec in RELATIONS.values()
]


def extract_fact(sentence: str) -> tuple[str, str, str, bool] | None:
    """Invert a rendered sentence to (subject, relation, object, negated)."""
    for relation, negated, pattern in _EXTRACTORS:
        m = pattern.match(sentence)
        if m:
            return m.group("s"), relation, m.group("o"), negated
    return None


def parse_question(question: str) -> tuple[str, str] | None:
    """Invert a rendered question to (relation, subject)."""
    for relation, pattern in _QUESTION_PATTERNS:
        m = pattern.match(question)
        if m:
            return relation, m.group("s")
    return None


def context_answer(question: str, context: str) -> str:
    """What a reader that fully trusts the context would answer.

    Parses every sentence of the context, prefers a fact that matches the
    question's subject and relation (empty answer if that fact is negated),
    and otherwise falls back to the first parseable fact's object.
    """
    parsed = parse_question(question)
    facts = []
    for sentence in re.split(r"(?<=\.)\s+", context.strip()):
        fact = extract_fact(sentence)
        if fact:
            facts.append(fact)
    if parsed:
        relation, subject = parsed
        for s, r, o, negated in facts:
            if s == subject and r == relation:
                return "" if negated else o
    return facts[0][2] if facts else ""


def _bigrams(text: str) -> set[str]:
    lowered = text.lower()
    if lowered.startswith("the "):
        lowered = lowered[4:]
    return {lowered[i : i + 2] for i in range(len(lowered) - 1)}


def _derive_seed(seed: int, tag: str) -> int:
    digest = hashlib.blake2b(
        f"{seed}:{tag}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def sample_triples(n: int, seed: int) -> list[KnowledgeTriple]:
    """Draw n distinct (subject, relation) facts from the bundled lexicons."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    capacity = sum(len(spec.subjects) for spec in RELATIONS.values())
    if n > capacity:
        raise CapacityError(f"requested {n} triples, lexicons hold {capacity}")
    rng = random.Random(_derive_seed(seed, "sample"))
    pools = {}
    for name, spec in RELATIONS.items():
        subjects = list(spec.subjects)
        rng.shuffle(subjects)
        pools[name] = subjects
    triples: list[KnowledgeTriple] = []
    rel_cycle = list(RELATION_NAMES)
    while len(triples) < n:
        for name in rel_cycle:
            if len(triples) >= n:
                break
            pool = pools[name]
            if not pool:
                continue
            subject = pool.pop()
            obj = rng.choice(RELATIONS[name].objects)
            triples.append(
                KnowledgeTriple(
                    id=f"t{len(triples):05d}",
                    subject=subject,
                    relation=name,
                    object=obj,
                )
            )
        rel_cycle = [r for r in rel_cycle if pools[r]]
    return triples


def make_variants(
    t: KnowledgeTriple,
    pool: Sequence[KnowledgeTriple],
    seed: int,
    split: str = "train",
) -> ConflictTriple:
    """Render statement, paraphrase, contradiction, and unrelated texts.

    Contradictions are produced by object substitution with a same-relation
    distractor 70% of the time and by relation negation 30% of the time
    (seeded choice).
    """
    rng = random.Random(seed)
    spec = RELATIONS[t.relation]
    statement = spec.templates[0].format(s=t.subject, o=t.object)
    paraphrase = rng.choice(spec.templates[1:]).format(s=t.subject, o=t.object)

    candidates = sorted(
        {p.object for p in pool if p.relation == t.relation and p.object != t.object}
    )
    # prefer distractors that overlap the true object in no character bigram,
    # so the contradiction is unambiguous at the surface level
    disjoint = [o for o in candidates if _bigrams(o).isdisjoint(_bigrams(t.object))]
    swap_objects = disjoint or candidates
    if rng.random() < 0.7 and swap_objects:
        # contradicting passages phrase the wrong fact in their own words,
        # so the template is drawn independently of the statement's
        contradiction = rng.choice(spec.templates).format(
            s=t.subject, o=rng.choice(swap_objects)
        )
    else:
        contradiction = spec.negated.format(s=t.subject, o=t.object)

    unrelated_pool = [
        p for p in pool if p.subject != t.subject and p.relation != t.relation
    ]
    if not unrelated_pool:
        raise CapacityError(
            f"no pool triple with a different subject and relation for {t.id}"
        )
    other = unrelated_pool[rng.randrange(len(unrelated_pool))]
    unrelated = rng.choice(RELATIONS[other.relation].templates).format(
        s=other.subject, o=other.object
    )
    return ConflictTriple(
        base=t,
        statement=statement,
        paraphrase=paraphrase,
        contradiction=contradiction,
        unrelated=unrelated,
        split=split,
    )


def _largest_remainder_counts(total: int, fractions: Sequence[float]) -> list[int]:
    exact = [total * f for f in fractions]
    counts = [int(x) for x in exact]
    short = total - sum(counts)
    order = sorted(
        range(len(fractions)), key=lambda i: (exact[i] - counts[i]), reverse=True
    )
    for i in order[:short]:
        counts[i] += 1
    return counts


def build_dataset(
    n: int,
    seed: int,
    split_ratios: Sequence[float] = (0.8, 0.1, 0.1),
) -> list[ConflictTriple]:
    """Sample n base triples, split them, and render all four surface forms."""
    if len(split_ratios) != len(SPLITS):
        raise ConfigError(f"need {len(SPLITS)} split ratios, got {len(split_ratios)}")
    if abs(sum(split_ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {sum(split_ratios)}")
    triples = sample_triples(n, seed)
    counts = _largest_remainder_counts(n, split_ratios)
    order = list(range(n))
    random.Random(_derive_seed(seed, "split")).shuffle(order)
    split_of = {}
    cursor = 0
    for split, count in zip(SPLITS, counts):
        for idx in order[cursor : cursor + count]:
            split_of[idx] = split
        cursor += count
    return [
        make_variants(t, triples, _derive_seed(seed, t.id), split=split_of[i])
        for i, t in enumerate(triples)
    ]


def build_qa_cases(
    ts: Sequence[ConflictTriple],
    mix: Sequence[float] = (0.4, 0.3, 0.3),
    noise_rate: float = 0.0,
    seed: int = 0,
    known_rate: float = 0.6,
) -> list[QACase]:
    """Pair templated questions with golden/conflicting/irrelevant contexts.

    ``noise_rate`` injects a distractor sentence (another triple's statement)
    after the context with the given probability, leaving the context type
    unchanged. ``known_rate`` is the Bernoulli rate of the simulated
    closed-book knowledge flag.
    """
    ts = list(ts)
    if not ts:
        raise EmptyInputError("build_qa_cases needs a non-empty triple set")
    if len(mix) != len(CONTEXT_TYPES):
        raise ConfigError(f"need {len(CONTEXT_TYPES)} mix fractions, got {len(mix)}")
    if abs(sum(mix) - 1.0) > 1e-9:
        raise ConfigError(f"mix must sum to 1, got {sum(mix)}")
    if not 0.0 <= noise_rate <= 1.0:
        raise DomainError(f"noise_rate must be in [0, 1], got {noise_rate}")
    if not 0.0 <= known_rate <= 1.0:
        raise DomainError(f"known_rate must be in [0, 1], got {known_rate}")

    rng = random.Random(_derive_seed(seed, "qa"))
    counts = _largest_remainder_counts(len(ts), mix)
    type_pool = [
        ctype for ctype, count in zip(CONTEXT_TYPES, counts) for _ in range(count)
    ]
    rng.shuffle(type_pool)

    cases: list[QACase] = []
    for idx, (ct, ctx_type) in enumerate(zip(ts, type_pool)):
        base = ct.base
        spec = RELATIONS[base.relation]
        context = {
            "golden": ct.statement,
            "conflicting": ct.contradiction,
            "irrelevant": ct.unrelated,
        }[ctx_type]
        if noise_rate > 0.0 and rng.random() < noise_rate:
            other = ts[rng.randrange(len(ts))]
            if other.base.id != base.id:
                context = f"{context} {other.statement}"
        cases.append(
            QACase(
                id=f"q{idx:05d}",
                question=spec.question.format(s=base.subject),
                gold_answer=base.object,
                context=context,
                context_type=ctx_type,
                closed_book_correct=rng.random() < known_rate,
            )
        )
    return cases


# ---------------------------------------------------------------------------
# JSONL persistence. One object per line, UTF-8, LF endings, fixed key order.
# ---------------------------------------------------------------------------

_TRIPLE_KEYS = (
    "id", "subject", "relation", "object",
    "statement", "paraphrase", "contradiction", "unrelated", "split",
)
_QA_KEYS = (
    "id", "question", "gold_answer", "context", "context_type",
    "closed_book_correct",
)


def triple_to_row(ct: ConflictTriple) -> dict:
    return {
        "id": ct.base.id,
        "subject": ct.base.subject,
        "relation": ct.base.relation,
        "object": ct.base.object,
        "statement": ct.statement,
        "paraphrase": ct.paraphrase,
        "contradiction": ct.contradiction,
        "unrelated": ct.unrelated,
        "split": ct.split,
    }


def _write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False))
            fh.write("\n")


def write_triples(path: str | Path, ts: Sequence[ConflictTriple]) -> None:
    _write_jsonl(path, (triple_to_row(ct) for ct in ts))


def read_triples(path: str | Path) -> list[ConflictTriple]:
    out = []
    for lineno, row in _read_jsonl(path, _TRIPLE_KEYS):
        if row["relation"] not in RELATIONS:
            raise DataFormatError(f"{path}:{lineno}: unknown relation {row['relation']!r}")
        if row["split"] not in SPLITS:
            raise DataFormatError(f"{path}:{lineno}: unknown split {row['split']!r}")
        out.append(
            ConflictTriple(
                base=KnowledgeTriple(
                    id=row["id"], subject=row["subject"],
                    relation=row["relation"], object=row["object"],
                ),
                statement=row["statement"],
                paraphrase=row["paraphrase"],
                contradiction=row["contradiction"],
                unrelated=row["unrelated"],
                split=row["split"],
            )
        )
    return out


def write_qa_cases(path: str | Path, cases: Sequence[QACase]) -> None:
    _write_jsonl(
        path,
        (
            {
                "id": c.id,
                "question": c.question,
                "gold_answer": c.gold_answer,
                "context": c.context,
                "context_type": c.context_type,
                "closed_book_correct": c.closed_book_correct,
            }
            for c in cases
        ),
    )


def read_qa_cases(path: str | Path) -> list[QACase]:
    out = []
    for lineno, row in _read_jsonl(path, _QA_KEYS):
        if row["context_type"] not in CONTEXT_TYPES:
            raise DataFormatError(
                f"{path}:{lineno}: unknown context_type {row['context_type']!r}"
            )
        if not isinstance(row["closed_book_correct"], bool):
            raise DataFormatError(f"{path}:{lineno}: closed_book_correct must be bool")
        out.append(QACase(**{k: row[k] for k in _QA_KEYS}))
    return out


def _read_jsonl(path: str | Path, required_keys: Sequence[str]):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(row, dict):
                raise DataFormatError(f"{path}:{lineno}: expected an object")
            missing = [k for k in required_keys if k not in row]
            if missing:
                raise DataFormatError(f"{path}:{lineno}: missing keys {missing}")
            yield lineno, row
