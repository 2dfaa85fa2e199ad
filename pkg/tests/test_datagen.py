import json

import pytest

from ragguard import datagen
from ragguard.datagen import (
    CONTEXT_TYPES,
    RELATIONS,
    SPLITS,
    build_dataset,
    build_qa_cases,
    context_answer,
    extract_fact,
    make_variants,
    parse_question,
    read_qa_cases,
    read_triples,
    sample_triples,
    write_qa_cases,
    write_triples,
)
from ragguard.errors import (
    CapacityError,
    ConfigError,
    DataFormatError,
    DomainError,
    EmptyInputError,
)


def test_sample_triples_deterministic():
    assert sample_triples(50, seed=1) == sample_triples(50, seed=1)
    assert sample_triples(50, seed=1) != sample_triples(50, seed=2)


def test_sample_triples_full_corpus_size():
    triples = sample_triples(5000, seed=0)
    assert len(triples) == 5000
    keys = {(t.subject, t.relation) for t in triples}
    assert len(keys) == 5000


def test_sample_triples_capacity():
    capacity = sum(len(spec.subjects) for spec in RELATIONS.values())
    with pytest.raises(CapacityError):
        sample_triples(capacity + 1, seed=0)
    with pytest.raises(DomainError):
        sample_triples(0, seed=0)


def test_template_round_trips_all_relations():
    for name, spec in RELATIONS.items():
        for template in spec.templates:
            text = template.format(s="Subject Example", o="Object Example")
            assert extract_fact(text) == ("Subject Example", name, "Object Example", False)
        negated = spec.negated.format(s="Subject Example", o="Object Example")
        assert extract_fact(negated) == ("Subject Example", name, "Object Example", True)
        relation, subject = parse_question(spec.question.format(s="Subject Example"))
        assert (relation, subject) == (name, "Subject Example")


def test_extract_fact_rejects_free_text():
    assert extract_fact("This sentence matches no template at all") is None


def test_make_variants_structure():
    pool = sample_triples(200, seed=4)
    for t in pool[:60]:
        ct = make_variants(t, pool, seed=99)
        assert ct.paraphrase != ct.statement
        s = extract_fact(ct.statement)
        p = extract_fact(ct.paraphrase)
        c = extract_fact(ct.contradiction)
        u = extract_fact(ct.unrelated)
        assert s == (t.subject, t.relation, t.object, False)
        assert p == s
        assert c is not None and (c[0], c[1]) == (t.subject, t.relation)
        assert c[3] or c[2] != t.object  # negated relation or swapped object
        assert u is not None and u[0] != t.subject and u[1] != t.relation


def test_make_variants_needs_pool():
    t = sample_triples(1, seed=0)[0]
    with pytest.raises(CapacityError):
        make_variants(t, [t], seed=0)


def test_build_dataset_split_sizes():
    ts = build_dataset(2000, seed=1, split_ratios=(0.8, 0.1, 0.1))
    counts = {s: sum(1 for t in ts if t.split == s) for s in SPLITS}
    assert counts == {"train": 1600, "dev": 200, "test": 200}


def test_build_dataset_splits_partition_corpus():
    ts = build_dataset(101, seed=6)
    ids = [t.base.id for t in ts]
    assert len(set(ids)) == len(ids) == 101
    assert {t.split for t in ts} == set(SPLITS)


def test_build_dataset_ratio_validation():
    with pytest.raises(ConfigError):
        build_dataset(10, seed=0, split_ratios=(0.5, 0.2, 0.2))
    with pytest.raises(ConfigError):
        build_dataset(10, seed=0, split_ratios=(1.0, 0.0))


def test_build_dataset_byte_identical(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_triples(a, build_dataset(80, seed=12))
    write_triples(b, build_dataset(80, seed=12))
    assert a.read_bytes() == b.read_bytes()
    assert b"\r\n" not in a.read_bytes()


def test_triples_file_round_trip(tmp_path):
    ts = build_dataset(40, seed=5)
    path = tmp_path / "triples.jsonl"
    write_triples(path, ts)
    assert read_triples(path) == ts


def test_read_triples_rejects_bad_rows(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "t1"}\n', encoding="utf-8")
    with pytest.raises(DataFormatError):
        read_triples(path)
    path.write_text("not json\n", encoding="utf-8")
    with pytest.raises(DataFormatError):
        read_triples(path)


def test_qa_all_golden_mix():
    ts = build_dataset(30, seed=2)
    cases = build_qa_cases(ts, mix=(1.0, 0.0, 0.0), seed=3)
    assert all(c.context_type == "golden" for c in cases)


def test_qa_mix_frequencies():
    ts = build_dataset(200, seed=2)
    cases = build_qa_cases(ts, mix=(0.4, 0.3, 0.3), seed=3)
    counts = {ct: sum(1 for c in cases if c.context_type == ct) for ct in CONTEXT_TYPES}
    assert counts == {"golden": 80, "conflicting": 60, "irrelevant": 60}


def test_qa_golden_context_contains_fact():
    ts = build_dataset(120, seed=8)
    for c in build_qa_cases(ts, mix=(0.5, 0.25, 0.25), noise_rate=0.5, seed=1):
        relation, subject = parse_question(c.question)
        if c.context_type == "golden":
            assert context_answer(c.question, c.context) == c.gold_answer
        elif c.context_type == "conflicting":
            answer = context_answer(c.question, c.context)
            assert answer != c.gold_answer
        assert relation in RELATIONS and subject


def test_qa_deterministic():
    ts = build_dataset(60, seed=2)
    a = build_qa_cases(ts, mix=(0.4, 0.3, 0.3), noise_rate=0.2, seed=7)
    b = build_qa_cases(ts, mix=(0.4, 0.3, 0.3), noise_rate=0.2, seed=7)
    assert a == b


def test_qa_validation_errors():
    ts = build_dataset(10, seed=2)
    with pytest.raises(EmptyInputError):
        build_qa_cases([], seed=0)
    with pytest.raises(ConfigError):
        build_qa_cases(ts, mix=(0.9, 0.2, 0.1), seed=0)
    with pytest.raises(DomainError):
        build_qa_cases(ts, noise_rate=1.5, seed=0)


def test_qa_file_round_trip(tmp_path):
    ts = build_dataset(25, seed=9)
    cases = build_qa_cases(ts, seed=4)
    path = tmp_path / "qa.jsonl"
    write_qa_cases(path, cases)
    assert read_qa_cases(path) == cases
    row = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert list(row) == ["id", "question", "gold_answer", "context",
                         "context_type", "closed_book_correct"]


def test_read_qa_rejects_bad_context_type(tmp_path):
    path = tmp_path / "qa.jsonl"
    row = {"id": "q1", "question": "x", "gold_answer": "y", "context": "z",
           "context_type": "weird", "closed_book_correct": True}
    path.write_text(json.dumps(row) + "\n", encoding="utf-8")
    with pytest.raises(DataFormatError):
        read_qa_cases(path)


def test_subject_and_object_vocabularies_disjoint():
    # the factual head relies on object words never doubling as subject words
    def words(pool):
        out = set()
        for name in pool:
            out.update(name.lower().split())
        return out

    subject_words = set()
    object_words = set()
    for spec in RELATIONS.values():
        subject_words |= words(spec.subjects)
        object_words |= words(spec.objects)
    assert not subject_words & object_words


def test_context_answer_prefers_question_subject():
    ts = build_dataset(40, seed=13)
    case = build_qa_cases(ts, mix=(1.0, 0.0, 0.0), noise_rate=1.0, seed=2)[0]
    # noise appended a distractor sentence; the reader still answers the question
    assert context_answer(case.question, case.context) == case.gold_answer
