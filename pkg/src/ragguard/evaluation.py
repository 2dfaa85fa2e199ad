"""Answer, detection, and agreement metrics plus the benchmark harness.

The harness wires the synthetic QA corpus through signal extraction and
the routing policy, simulates the final answer each verdict implies, and
reports detection quality (F1/AUROC), answer quality (EM/F1), the
knowledge-gap recovery rate (closed-book-wrong, golden-context cases
answered correctly end to end), the misleading-context override rate
(closed-book-correct, conflicting-context cases answered wrongly), and
per-bin flip rates.
"""

from __future__ import annotations

import json
import re
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import datagen
from .datagen import QACase, context_answer, parse_question, read_qa_cases
from .decoupler import EncoderPair, load_checkpoint
from .embed import hash_embed
from .errors import (
    DegenerateInputError,
    DimensionError,
    EmptyInputError,
)
from .policy import Decision, PolicyConfig, decide, flip_rate
from .signals import ConflictSignals, SyntheticOracleProvider, sigma_fact, sigma_sem

REPORT_VERSION = 1


@dataclass(frozen=True)
class DetectionRecord:
    score: float
    label: int


@dataclass(frozen=True)
class OutcomeCase:
    closed_book_correct: bool
    context_type: str
    final_correct: bool


_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(s: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    s = s.lower().translate(_PUNCT_TABLE)
    s = _ARTICLE_RE.sub(" ", s)
    return " ".join(s.split())


def em(pred: str, gold: str) -> int:
    return int(normalize_answer(pred) == normalize_answer(gold))


def f1_token(pred: str, gold: str) -> float:
    """Token-multiset F1 of the normalized answers."""
    pred_tokens = normalize_answer(pred).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def _check_two_classes(labels: np.ndarray) -> None:
    if labels.size == 0 or np.all(labels == labels[0]):
        raise DegenerateInputError("need both classes present")


def detection_f1(recs: Sequence[DetectionRecord], threshold: float) -> float:
    """Binary F1 with predicted-positive = score >= threshold."""
    recs = list(recs)
    if not recs:
        raise EmptyInputError("no detection records")
    labels = np.array([r.label for r in recs])
    _check_two_classes(labels)
    preds = np.array([r.score >= threshold for r in recs])
    tp = int(np.sum(preds & (labels == 1)))
    fp = int(np.sum(preds & (labels == 0)))
    fn = int(np.sum(~preds & (labels == 1)))
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def auroc(recs: Sequence[DetectionRecord]) -> float:
    """Probability a random positive outranks a random negative, ties 1/2.

    Computed from average ranks, which matches the pairwise count exactly
    (tie ranks are halves, exactly representable).
    """
    recs = list(recs)
    if not recs:
        raise EmptyInputError("no detection records")
    labels = np.array([r.label for r in recs])
    _check_two_classes(labels)
    scores = np.array([r.score for r in recs], dtype=np.float64)
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    n_pos = int(np.sum(labels == 1))
    n_neg = len(recs) - n_pos
    rank_sum = float(np.sum(ranks[labels == 1]))
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def kgrr(cases: Sequence[OutcomeCase]) -> float:
    """Recovery rate on closed-book-wrong cases given golden context."""
    pool = [c for c in cases
            if not c.closed_book_correct and c.context_type == "golden"]
    if not pool:
        raise DegenerateInputError("no closed-book-wrong golden-context cases")
    return sum(c.final_correct for c in pool) / len(pool)


def mcor(cases: Sequence[OutcomeCase]) -> float:
    """Override rate on closed-book-correct cases given conflicting context."""
    pool = [c for c in cases
            if c.closed_book_correct and c.context_type == "conflicting"]
    if not pool:
        raise DegenerateInputError("no closed-book-correct conflicting-context cases")
    return sum(not c.final_correct for c in pool) / len(pool)


def _ranks_with_ties(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(sorted_vals):
        j = i
        while j + 1 < len(sorted_vals) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Rank correlation with average ranks for ties."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise DimensionError(f"length mismatch: {av.shape} vs {bv.shape}")
    if av.size < 3:
        raise DimensionError("need at least 3 observations")
    ra, rb = _ranks_with_ties(av), _ranks_with_ties(bv)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt(np.sum(ra * ra) * np.sum(rb * rb))
    if denom == 0.0:
        raise DegenerateInputError("constant input has no rank correlation")
    return float(np.clip(np.sum(ra * rb) / denom, -1.0, 1.0))


def krippendorff_alpha(ratings: Sequence[Sequence], level: str = "nominal") -> float:
    """Agreement for nominal data: 1 - observed/expected disagreement.

    ratings is raters x items; None marks a missing rating. Items with
    fewer than two ratings are skipped. Uses the coincidence-matrix form:
    each ordered pair of ratings within an item contributes 1/(m-1).
    """
    if level != "nominal":
        raise DegenerateInputError(f"unsupported level {level!r}")
    matrix = [list(row) for row in ratings]
    if len(matrix) < 2:
        raise DegenerateInputError("need at least 2 raters")
    n_items = len(matrix[0])
    if any(len(row) != n_items for row in matrix):
        raise DimensionError("raters must rate the same item list")

    values = sorted({v for row in matrix for v in row if v is not None}, key=str)
    index = {v: i for i, v in enumerate(values)}
    coincidence = np.zeros((len(values), len(values)), dtype=np.float64)
    for item in range(n_items):
        present = [row[item] for row in matrix if row[item] is not None]
        m = len(present)
        if m < 2:
            continue
        for i, a in enumerate(present):
            for j, b in enumerate(present):
                if i != j:
                    coincidence[index[a], index[b]] += 1.0 / (m - 1)
    n = coincidence.sum()
    if n <= 0:
        raise DegenerateInputError("no pairable ratings")
    marginals = coincidence.sum(axis=1)
    expected_pairs = n * n - np.sum(marginals * marginals)
    if expected_pairs == 0.0:
        return 1.0  # a single value everywhere: no disagreement possible
    observed_disagreement = n - np.trace(coincidence)
    return float(1.0 - (n - 1) * observed_disagreement / expected_pairs)


# ---------------------------------------------------------------------------
# Benchmark harness.
# ---------------------------------------------------------------------------

MODES = ("policy", "always-context")


def belief_text(case: QACase) -> str | None:
    """Render the simulated parametric belief as a statement, if any."""
    if not case.closed_book_correct:
        return None
    parsed = parse_question(case.question)
    if parsed is None:
        return None
    relation, subject = parsed
    template = datagen.RELATIONS[relation].templates[0]
    return template.format(s=subject, o=case.gold_answer)


def case_signals(
    case: QACase,
    pair: EncoderPair,
    embedder: Callable[[str], object],
    provider: SyntheticOracleProvider,
) -> ConflictSignals:
    """Signals for one QA case.

    Topical relevance is judged from the bare question; factual agreement
    is judged from the question plus the rendered parametric belief, since
    with a knowledge-free embedder the belief has to appear in the text for
    a contradiction to be visible at all.
    """
    belief = belief_text(case)
    fact_query = f"{case.question} {belief}" if belief else case.question
    c = embedder(case.context)
    return ConflictSignals(
        sigma_sem=sigma_sem(embedder(case.question), c, pair),
        sigma_fact=sigma_fact(embedder(fact_query), c, pair),
        sigma_ans=provider.score(case.question, query_id=case.id,
                                 known=case.closed_book_correct),
        query_id=case.id,
    )


def _final_answer(case: QACase, verdict: str) -> str:
    parametric = case.gold_answer if case.closed_book_correct else "unknown"
    if verdict == "TrustMemory":
        return parametric
    # TrustContext adopts the context outright; FlagConflict means memory is
    # weak and the context disagrees with it, so the context answer is used
    # and the flag is left to the decision log.
    return context_answer(case.question, case.context)


def run_benchmark_cases(
    cases: Sequence[QACase],
    pair: EncoderPair,
    policy_cfg: PolicyConfig | None = None,
    seed: int = 0,
    mode: str = "policy",
    embed_dim: int = 256,
    embed_seed: int = 0,
    ans_noise: float = 0.25,
    detection_threshold: float = 0.0,
) -> dict:
    """Run the pipeline over in-memory QA cases and compute all metrics."""
    if mode not in MODES:
        raise DegenerateInputError(f"unknown mode {mode!r}")
    cases = list(cases)
    if not cases:
        raise EmptyInputError("no QA cases")
    policy_cfg = policy_cfg or PolicyConfig()
    provider = SyntheticOracleProvider(seed=seed, noise=ans_noise)
    embedder = lambda text: hash_embed(text, embed_dim, embed_seed)

    detections: list[DetectionRecord] = []
    outcomes: list[OutcomeCase] = []
    decisions: list[Decision] = []
    region_hits = {"tp": 0, "fp": 0, "fn": 0}
    em_scores, f1_scores = [], []

    for case in cases:
        sig = case_signals(case, pair, embedder, provider)
        decision = decide(sig, policy_cfg)
        decisions.append(decision)
        is_conflict = int(case.context_type == "conflicting")
        detections.append(
            DetectionRecord(score=sig.sigma_sem - sig.sigma_fact, label=is_conflict)
        )
        predicted = decision.region == "ConflictZone"
        region_hits["tp"] += predicted and is_conflict
        region_hits["fp"] += predicted and not is_conflict
        region_hits["fn"] += (not predicted) and is_conflict

        if mode == "always-context":
            answer = context_answer(case.question, case.context)
        else:
            answer = _final_answer(case, decision.verdict)
        correct = bool(em(answer, case.gold_answer))
        em_scores.append(em(answer, case.gold_answer))
        f1_scores.append(f1_token(answer, case.gold_answer))
        outcomes.append(OutcomeCase(
            closed_book_correct=case.closed_book_correct,
            context_type=case.context_type,
            final_correct=correct,
        ))

    tp, fp, fn = region_hits["tp"], region_hits["fp"], region_hits["fn"]
    region_f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    labels = {r.label for r in detections}

    def _safe(metric, pool):
        try:
            return metric(pool)
        except DegenerateInputError:
            return None

    report = {
        "report_version": REPORT_VERSION,
        "mode": mode,
        "n_cases": len(cases),
        "detection": {
            "f1": region_f1,
            "auroc": auroc(detections) if len(labels) == 2 else None,
            "threshold_f1": detection_f1(detections, detection_threshold)
            if len(labels) == 2 else None,
        },
        "qa": {
            "em": float(np.mean(em_scores)),
            "f1": float(np.mean(f1_scores)),
            "kgrr": _safe(kgrr, outcomes),
            "mcor": _safe(mcor, outcomes),
        },
        "flip_rates": flip_rate(decisions, policy_cfg),
        "config": {
            "seed": seed,
            "mode": mode,
            "embed_dim": embed_dim,
            "embed_seed": embed_seed,
            "ans_noise": ans_noise,
            "detection_threshold": detection_threshold,
            "policy": policy_cfg.as_dict(),
        },
    }
    return report


def run_benchmark(
    qa_path: str | Path,
    checkpoint_path: str | Path,
    policy_cfg: PolicyConfig | None = None,
    seed: int = 0,
    mode: str = "policy",
    **kwargs,
) -> dict:
    """File-based entry point: loads the QA corpus and checkpoint first."""
    cases = read_qa_cases(qa_path)
    pair = load_checkpoint(checkpoint_path)
    meta = pair.train_meta
    kwargs.setdefault("embed_dim", int(meta.get("embed_dim", 256)))
    kwargs.setdefault("embed_seed", int(meta.get("embed_seed", 0)))
    return run_benchmark_cases(cases, pair, policy_cfg, seed=seed, mode=mode, **kwargs)


def statement_pair_report(
    ts,
    pair: EncoderPair,
    split: str = "test",
    policy_cfg: PolicyConfig | None = None,
    embed_dim: int = 256,
    embed_seed: int = 0,
) -> dict:
    """Conflict-vs-rest detection on (statement, variant) pairs of one split.

    Pairs each split statement with its paraphrase, contradiction, and
    unrelated variant; the contradiction is the positive class and the
    conflict-zone region rule is the detector. Also reports the two
    decoupling margins: meaning-space contradiction-vs-unrelated and
    factual-space paraphrase-vs-contradiction.
    """
    from .decoupler import embedding_key, forward

    policy_cfg = policy_cfg or PolicyConfig()
    subset = [t for t in ts if t.split == split]
    if not subset:
        raise EmptyInputError(f"no triples in split {split!r}")
    embedder = lambda text: hash_embed(text, embed_dim, embed_seed)
    sims: dict[tuple[str, str], list[float]] = {}
    tp = fp = fn = 0
    forms = ("paraphrase", "contradiction", "unrelated")
    for t in subset:
        anchor_sem = forward(pair.sem, embedder(t.statement))
        anchor_fact = forward(pair.fact, embedder(t.statement))
        for form in forms:
            variant = embedder(getattr(t, form))
            s = float(np.dot(anchor_sem.values, forward(pair.sem, variant).values))
            f = float(np.dot(anchor_fact.values, forward(pair.fact, variant).values))
            sims.setdefault(("sem", form), []).append(s)
            sims.setdefault(("fact", form), []).append(f)
            predicted = s > policy_cfg.sem_threshold and f < policy_cfg.fact_threshold
            if form == "contradiction":
                tp += predicted
                fn += not predicted
            else:
                fp += predicted
    means = {f"{space}_{form}": float(np.mean(v)) for (space, form), v in sims.items()}
    return {
        "split": split,
        "n_pairs": 3 * len(subset),
        "f1": 2 * tp / (2 * tp + fp + fn) if tp else 0.0,
        "tp": tp, "fp": fp, "fn": fn,
        "means": means,
        "sem_margin": means["sem_contradiction"] - means["sem_unrelated"],
        "fact_margin": means["fact_paraphrase"] - means["fact_contradiction"],
    }


def report_to_csv_rows(reports: Mapping[str, dict]) -> list[dict]:
    """Summary rows (method, kgrr, mcor, em, f1) for CSV export."""
    rows = []
    for method, report in reports.items():
        rows.append({
            "method": method,
            "kgrr": report["qa"]["kgrr"],
            "mcor": report["qa"]["mcor"],
            "em": report["qa"]["em"],
            "f1": report["qa"]["f1"],
        })
    return rows


def write_report(path: str | Path, report: Mapping) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
