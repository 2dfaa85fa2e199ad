"""The three scalar conflict signals and their generator-facing encodings.

For a (query, context) pair the middleware emits meaning similarity and
factual agreement (cosines under the trained projection heads) plus a
self-answerability estimate from a pluggable provider. Signals can be
projected to a single embedding vector, spliced into a soft-token prompt
sequence, or rendered as a deterministic hard prompt for text-only APIs.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .decoupler import EncoderPair, ProjectionHead, forward
from .embed import EmbeddingVector, VectorLike, _as_array, cosine
from .errors import ConfigError, DimensionError, ProviderError

DEFAULT_SOFT_TOKENS = 20
DEFAULT_TEMPLATE = "v1"


@dataclass(frozen=True)
class ConflictSignals:
    sigma_sem: float
    sigma_fact: float
    sigma_ans: float
    query_id: str = ""

    def __post_init__(self):
        for name in ("sigma_sem", "sigma_fact", "sigma_ans"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if not 0.0 <= self.sigma_ans <= 1.0:
            raise ConfigError(f"sigma_ans must be in [0, 1], got {self.sigma_ans}")

    def as_vector(self) -> np.ndarray:
        return np.array([self.sigma_sem, self.sigma_fact, self.sigma_ans])


def sigma_sem(q_embed: VectorLike, c_embed: VectorLike, pair: EncoderPair) -> float:
    """Cosine of query and context in the meaning projection space."""
    return cosine(forward(pair.sem, q_embed), forward(pair.sem, c_embed))


def sigma_fact(q_embed: VectorLike, c_embed: VectorLike, pair: EncoderPair) -> float:
    """Cosine of query and context in the factual projection space."""
    return cosine(forward(pair.fact, q_embed), forward(pair.fact, c_embed))


class AnswerabilityProvider(Protocol):
    """Estimates how well the generator can answer from memory alone."""

    mode: str

    def score(self, query: str, query_id: str = "") -> float: ...


def _clamp01(x: float) -> float:
    return float(min(1.0, max(0.0, x)))


@dataclass
class SyntheticOracleProvider:
    """Deterministic answerability stand-in; no model access required.

    When the caller knows whether the simulated parametric memory covers a
    query (a QA case's closed-book flag), pass it through `known`;
    otherwise the flag is derived from a stable hash of the query so the
    provider stays a pure function. Scores land near `known_score` or
    `unknown_score` with seeded uniform noise, then go through the optional
    monotone calibration map and are clamped to [0, 1].
    """

    seed: int = 0
    noise: float = 0.1
    known_score: float = 0.85
    unknown_score: float = 0.15
    known_rate: float = 0.6
    calibration: Callable[[float], float] | None = None
    mode: str = field(default="synthetic-oracle", init=False)

    def _unit_draws(self, query_id: str, query: str) -> tuple[float, float]:
        material = f"{self.seed}|{query_id or query}".encode("utf-8")
        digest = hashlib.blake2b(material, digest_size=16).digest()
        a = int.from_bytes(digest[:8], "little") / 2**64
        b = int.from_bytes(digest[8:], "little") / 2**64
        return a, b

    def score(self, query: str, query_id: str = "", known: bool | None = None) -> float:
        u_known, u_noise = self._unit_draws(query_id, query)
        if known is None:
            known = u_known < self.known_rate
        base = self.known_score if known else self.unknown_score
        raw = base + self.noise * (2.0 * u_noise - 1.0)
        if self.calibration is not None:
            raw = self.calibration(raw)
        return _clamp01(raw)


_PROBE_PROMPT = (
    "Can you answer the following question from memory alone, without any "
    "retrieved context? Reply with YES or NO and a confidence from 0 to 100, "
    'e.g. "YES 80".\nQuestion: {query}'
)
_PROBE_REPLY = re.compile(r"\b(YES|NO)\b[^0-9]*(\d{1,3})", re.IGNORECASE)


@dataclass
class LlmProbeProvider:
    """Asks an LLM endpoint a fixed yes/no answerability question.

    The generate callable takes a prompt and returns the model's text (the
    gateway's LLM client fits). A YES with confidence c maps to c/100, a NO
    to 1 - c/100; anything unparseable raises ProviderError.
    """

    generate: Callable[[str], str]
    calibration: Callable[[float], float] | None = None
    mode: str = field(default="llm-probe", init=False)

    def score(self, query: str, query_id: str = "") -> float:
        try:
            reply = self.generate(_PROBE_PROMPT.format(query=query))
        except Exception as exc:
            raise ProviderError(f"answerability probe failed: {exc}") from exc
        m = _PROBE_REPLY.search(reply or "")
        if not m:
            raise ProviderError(f"unparseable answerability reply: {reply!r}")
        confidence = min(int(m.group(2)), 100) / 100.0
        raw = confidence if m.group(1).upper() == "YES" else 1.0 - confidence
        if self.calibration is not None:
            raw = self.calibration(raw)
        return _clamp01(raw)


def sigma_ans(query: str, provider, query_id: str = "", **kwargs) -> float:
    """Self-answerability in [0, 1] from the configured provider."""
    if provider is None:
        raise ProviderError("no answerability provider configured")
    return _clamp01(provider.score(query, query_id=query_id, **kwargs))


@dataclass
class SignalProjector:
    """Two-layer MLP mapping the 3-vector of signals to a d_model vector."""

    layer1: ProjectionHead
    layer2: ProjectionHead
    activation: str = "tanh"

    def __post_init__(self):
        if self.layer1.d_in != 3:
            raise DimensionError("layer1 must accept the 3 signals")
        if self.layer2.d_in != self.layer1.d_out:
            raise DimensionError("layer2 input must match layer1 output")
        if self.activation not in ("tanh", "relu"):
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def hidden_dim(self) -> int:
        return self.layer1.d_out

    @property
    def d_model(self) -> int:
        return self.layer2.d_out

    @classmethod
    def create(cls, hidden_dim: int = 16, d_model: int = 64, seed: int = 0,
               activation: str = "tanh") -> "SignalProjector":
        rng = np.random.Generator(np.random.Philox(seed))
        l1 = ProjectionHead(
            weight=rng.normal(0.0, 1.0 / np.sqrt(3), size=(3, hidden_dim)),
            bias=np.zeros(hidden_dim),
        )
        l2 = ProjectionHead(
            weight=rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=(hidden_dim, d_model)),
            bias=np.zeros(d_model),
        )
        return cls(layer1=l1, layer2=l2, activation=activation)


def _activate(x: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(x) if kind == "tanh" else np.maximum(x, 0.0)


def project_signals(s: ConflictSignals, p: SignalProjector) -> np.ndarray:
    """e_signal: the MLP image of [sigma_sem, sigma_fact, sigma_ans]."""
    hidden = _activate(p.layer1.affine(s.as_vector()), p.activation)
    return p.layer2.affine(hidden)


@dataclass
class PromptAssembly:
    """Soft tokens, then the signal embedding, then the input embeddings."""

    soft_tokens: list[np.ndarray]
    signal_embedding: np.ndarray
    input_embeddings: list[np.ndarray]

    @classmethod
    def seeded(cls, signal_embedding: np.ndarray,
               input_embeddings: Sequence[np.ndarray],
               n_soft: int = DEFAULT_SOFT_TOKENS, seed: int = 0) -> "PromptAssembly":
        d_model = int(np.asarray(signal_embedding).shape[0])
        rng = np.random.Generator(np.random.Philox(seed))
        soft = [rng.normal(0.0, 0.02, size=d_model) for _ in range(n_soft)]
        return cls(soft_tokens=soft, signal_embedding=np.asarray(signal_embedding),
                   input_embeddings=[np.asarray(v) for v in input_embeddings])


def assemble(p: PromptAssembly) -> list[np.ndarray]:
    """Concatenate [soft tokens..., signal embedding, input...] in order."""
    parts = list(p.soft_tokens) + [p.signal_embedding] + list(p.input_embeddings)
    dims = {int(np.asarray(v).shape[-1]) for v in parts}
    if len(dims) != 1:
        raise DimensionError(f"inconsistent d_model across assembly parts: {sorted(dims)}")
    return [np.asarray(v, dtype=np.float64) for v in parts]


HARD_PROMPT_TEMPLATES = {
    "v1": (
        "[conflict-signals] semantic={sem:.2f} factual={fact:.2f} "
        "answerable={ans:.2f} - if factual consistency is low and semantic "
        "similarity is high, the context likely conflicts with known facts."
    ),
}

_HARD_PROMPT_RE = re.compile(
    r"semantic=(-?\d+\.\d{2}) factual=(-?\d+\.\d{2}) answerable=(-?\d+\.\d{2})"
)


def render_hard_prompt(s: ConflictSignals, template_id: str = DEFAULT_TEMPLATE) -> str:
    """Deterministic text rendering of the signals, 2-decimal fixed format."""
    if template_id not in HARD_PROMPT_TEMPLATES:
        raise ConfigError(f"unknown hard prompt template {template_id!r}")
    return HARD_PROMPT_TEMPLATES[template_id].format(
        sem=s.sigma_sem, fact=s.sigma_fact, ans=s.sigma_ans
    )


def parse_hard_prompt(text: str) -> tuple[float, float, float]:
    """Recover the three signal values from a rendered hard prompt."""
    m = _HARD_PROMPT_RE.search(text)
    if not m:
        raise ConfigError("text does not contain a rendered signal block")
    return tuple(float(g) for g in m.groups())


def format_signal_row(s: ConflictSignals) -> dict:
    """JSONL record with 6-decimal fixed formatting."""
    return {
        "query_id": s.query_id,
        "sigma_sem": round(s.sigma_sem, 6),
        "sigma_fact": round(s.sigma_fact, 6),
        "sigma_ans": round(s.sigma_ans, 6),
    }


def compute_signals(
    query: str,
    context: str,
    pair: EncoderPair,
    embedder: Callable[[str], EmbeddingVector],
    provider,
    query_id: str = "",
    **provider_kwargs,
) -> ConflictSignals:
    """Full signal extraction for one (query, context) text pair."""
    q = embedder(query)
    c = embedder(context)
    return ConflictSignals(
        sigma_sem=sigma_sem(q, c, pair),
        sigma_fact=sigma_fact(q, c, pair),
        sigma_ans=sigma_ans(query, provider, query_id=query_id, **provider_kwargs),
        query_id=query_id,
    )
