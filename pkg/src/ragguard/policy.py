"""Transparent routing rules over the three conflict signals.

A decision is made in two stages: high self-answerability short-circuits
to trusting memory; otherwise the (meaning, factual) plane is partitioned
into a conflict zone (high meaning, low factual agreement), an aligned
zone (both high), and an unrelated zone (low meaning). Every comparison
that fires is spelled out in the decision's rationale string, which is
rich enough to reconstruct the verdict.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import math

from .errors import ConfigError, DomainError, EmptyInputError
from .signals import ConflictSignals

VERDICTS = ("TrustMemory", "TrustContext", "FlagConflict")
REGIONS = ("ConflictZone", "AlignedZone", "UnrelatedZone")
ANS_BINS = ("Low", "Mid", "High")


@dataclass(frozen=True)
class PolicyConfig:
    sem_threshold: float = 0.65
    fact_threshold: float = 0.40
    ans_high: float = 0.7
    ans_low: float = 0.3
    early_stop_step: int = 10

    def __post_init__(self):
        for name in ("sem_threshold", "fact_threshold", "ans_high", "ans_low"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.ans_low >= self.ans_high:
            raise ConfigError("ans_low must be below ans_high")
        if self.early_stop_step < 1:
            raise ConfigError("early_stop_step must be >= 1")

    def as_dict(self) -> dict:
        return {
            "sem_threshold": self.sem_threshold,
            "fact_threshold": self.fact_threshold,
            "ans_high": self.ans_high,
            "ans_low": self.ans_low,
            "early_stop_step": self.early_stop_step,
        }


@dataclass(frozen=True)
class Decision:
    verdict: str
    region: str
    ans_bin: str
    rationale: str


@dataclass(frozen=True)
class SignalTrajectory:
    """Signals indexed by decoding step, 1-based and contiguous."""

    steps: tuple[ConflictSignals, ...]

    def __post_init__(self):
        if not self.steps:
            raise EmptyInputError("trajectory needs at least one step")


def classify_region(sigma_sem: float, sigma_fact: float,
                    cfg: PolicyConfig | None = None) -> str:
    """Strict inequalities on both axes; ties fall out of the special zones."""
    cfg = cfg or PolicyConfig()
    if not (math.isfinite(sigma_sem) and math.isfinite(sigma_fact)):
        raise DomainError("signals must be finite")
    if sigma_sem > cfg.sem_threshold:
        if sigma_fact < cfg.fact_threshold:
            return "ConflictZone"
        return "AlignedZone"
    return "UnrelatedZone"


def bin_answerability(sigma_ans: float, cfg: PolicyConfig | None = None) -> str:
    """Half-open bins [0, low), [low, high), [high, 1]."""
    cfg = cfg or PolicyConfig()
    if not 0.0 <= sigma_ans <= 1.0:
        raise DomainError(f"sigma_ans must be in [0, 1], got {sigma_ans}")
    if sigma_ans < cfg.ans_low:
        return "Low"
    if sigma_ans < cfg.ans_high:
        return "Mid"
    return "High"


def decide(s: ConflictSignals, cfg: PolicyConfig | None = None) -> Decision:
    """Route one signal triple to a verdict with a full rationale."""
    cfg = cfg or PolicyConfig()
    region = classify_region(s.sigma_sem, s.sigma_fact, cfg)
    ans_bin = bin_answerability(s.sigma_ans, cfg)
    clauses = []
    if s.sigma_ans > cfg.ans_high:
        clauses.append(
            f"sigma_ans={s.sigma_ans:.6f}>ans_high={cfg.ans_high:.6f}"
        )
        clauses.append("trust memory without examining context")
        verdict = "TrustMemory"
    else:
        clauses.append(
            f"sigma_ans={s.sigma_ans:.6f}<=ans_high={cfg.ans_high:.6f}"
        )
        sem_op = ">" if s.sigma_sem > cfg.sem_threshold else "<="
        clauses.append(
            f"sigma_sem={s.sigma_sem:.6f}{sem_op}sem_threshold={cfg.sem_threshold:.6f}"
        )
        if region == "UnrelatedZone":
            clauses.append("context unrelated")
            verdict = "TrustMemory"
        else:
            fact_op = "<" if s.sigma_fact < cfg.fact_threshold else ">="
            clauses.append(
                f"sigma_fact={s.sigma_fact:.6f}{fact_op}"
                f"fact_threshold={cfg.fact_threshold:.6f}"
            )
            if region == "ConflictZone":
                clauses.append("context conflicts with memory")
                verdict = "FlagConflict"
            else:
                clauses.append("context aligned with memory")
                verdict = "TrustContext"
    return Decision(verdict=verdict, region=region, ans_bin=ans_bin,
                    rationale="; ".join(clauses))


def verdict_from_rationale(rationale: str) -> str:
    """Reconstruct the verdict from a decision's rationale string."""
    if "trust memory without examining context" in rationale:
        return "TrustMemory"
    if "context unrelated" in rationale:
        return "TrustMemory"
    if "context conflicts with memory" in rationale:
        return "FlagConflict"
    if "context aligned with memory" in rationale:
        return "TrustContext"
    raise ConfigError(f"unrecognized rationale: {rationale!r}")


def early_success_predict(t: SignalTrajectory,
                          cfg: PolicyConfig | None = None) -> bool:
    """True iff factual agreement overtakes self-answerability before the
    early-stop step (strictly before, steps 1-based)."""
    cfg = cfg or PolicyConfig()
    for step_index, s in enumerate(t.steps, start=1):
        if step_index >= cfg.early_stop_step:
            break
        if s.sigma_fact > s.sigma_ans:
            return True
    return False


def flip_rate(decisions: Sequence[Decision],
              cfg: PolicyConfig | None = None) -> dict[str, float]:
    """Fraction of context-overriding verdicts per answerability bin.

    A flip is any verdict that abandons the parametric answer, i.e.
    TrustContext or FlagConflict. Bins with no decisions are omitted.
    """
    decisions = list(decisions)
    if not decisions:
        raise EmptyInputError("flip_rate needs at least one decision")
    totals = {b: 0 for b in ANS_BINS}
    flips = {b: 0 for b in ANS_BINS}
    for d in decisions:
        totals[d.ans_bin] += 1
        if d.verdict in ("TrustContext", "FlagConflict"):
            flips[d.ans_bin] += 1
    return {b: flips[b] / totals[b] for b in ANS_BINS if totals[b]}


def decision_log_row(query_id: str, d: Decision, cfg: PolicyConfig) -> dict:
    return {
        "query_id": query_id,
        "verdict": d.verdict,
        "region": d.region,
        "ans_bin": d.ans_bin,
        "thresholds": cfg.as_dict(),
        "rationale": d.rationale,
    }
