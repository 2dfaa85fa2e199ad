"""Dual projection heads that decouple meaning from factual agreement.

Two linear heads over frozen base embeddings are trained with separate
contrastive objectives on (statement, paraphrase, contradiction, unrelated)
quadruples. The meaning-side loss treats both paraphrase and contradiction
as positives against the unrelated negative; the factual-side loss keeps
only the paraphrase positive. All gradients are analytic (hand-derived
numpy) and are verified against central finite differences by grad_check.

Also hosts the 2-D probe used for scatter diagnostics: it projects the
elementwise product of an (anchor, variant) embedding pair onto a plane
that separates the three variant classes while pulling paraphrase pairs
toward the anchor's self-similarity point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import json
import struct

import numpy as np

from .datagen import ConflictTriple
from .embed import EmbeddingVector, VectorLike, _as_array, cosine
from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateVectorError,
    DimensionError,
    EmptyInputError,
    MissingEmbeddingError,
)

SURFACE_FORMS = ("statement", "paraphrase", "contradiction", "unrelated")
PROBE_CLASSES = ("para", "conf", "irr")

CHECKPOINT_MAGIC = b"TCRW"
CHECKPOINT_VERSION = 1


@dataclass
class ProjectionHead:
    """A single affine map; weight is (d_in, d_out), bias is (d_out,)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise DimensionError("weight must be 2-D and bias 1-D")
        if self.weight.shape[1] != self.bias.shape[0]:
            raise DimensionError(
                f"bias dim {self.bias.shape[0]} does not match "
                f"weight output dim {self.weight.shape[1]}"
            )
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise DegenerateVectorError("head parameters must be finite")

    @property
    def d_in(self) -> int:
        return int(self.weight.shape[0])

    @property
    def d_out(self) -> int:
        return int(self.weight.shape[1])

    def affine(self, v: VectorLike) -> np.ndarray:
        a = _as_array(v)
        if a.shape[-1] != self.d_in:
            raise DimensionError(f"input dim {a.shape[-1]}, head expects {self.d_in}")
        return a @ self.weight + self.bias


@dataclass
class EncoderPair:
    """The trained meaning/factual heads plus training metadata."""

    sem: ProjectionHead
    fact: ProjectionHead
    base_dim: int
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sem.d_in != self.base_dim or self.fact.d_in != self.base_dim:
            raise DimensionError("head input dims must equal base_dim")


@dataclass
class TrainConfig:
    tau: float = 0.07
    epochs: int = 120
    batch_size: int = 32
    learning_rate: float = 1e-2
    seed: int = 0
    optimizer: str = "adam"
    head_dim: int = 160

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


def forward(head: ProjectionHead, v: VectorLike) -> EmbeddingVector:
    """Project and unit-normalize a single vector."""
    u = head.affine(v)
    n = float(np.linalg.norm(u))
    if n == 0.0:
        raise DegenerateVectorError("projection collapsed to the zero vector")
    source = v.source if isinstance(v, EmbeddingVector) else "hash-fallback"
    return EmbeddingVector(values=u / n, source=source)


def _project_rows(head: ProjectionHead, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch affine + normalize; returns (unit rows, norms)."""
    u = x @ head.weight + head.bias
    n = np.linalg.norm(u, axis=1)
    if np.any(n == 0.0):
        raise DegenerateVectorError("projection collapsed to the zero vector")
    return u / n[:, None], n


def _logsumexp(values: np.ndarray) -> float:
    m = float(np.max(values))
    return m + float(np.log(np.sum(np.exp(values - m))))


def _contrastive_loss(sims: Sequence[float], tau: float, n_pos: int) -> float:
    """-log of the mass the first n_pos similarities hold in the softmax.

    sims are ordered (paraphrase, contradiction, unrelated); stabilized by
    max-subtraction via logsumexp.
    """
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    logits = np.asarray(sims, dtype=np.float64) / tau
    return _logsumexp(logits) - _logsumexp(logits[:n_pos])


def _quad_sims(
    anchor: VectorLike, para: VectorLike, conf: VectorLike, irr: VectorLike
) -> tuple[float, float, float]:
    return (cosine(anchor, para), cosine(anchor, conf), cosine(anchor, irr))


def loss_sem(
    anchor: VectorLike,
    para: VectorLike,
    conf: VectorLike,
    irr: VectorLike,
    tau: float,
) -> float:
    """Meaning-side loss: paraphrase AND contradiction count as positives."""
    return _contrastive_loss(_quad_sims(anchor, para, conf, irr), tau, n_pos=2)


def loss_fact(
    anchor: VectorLike,
    para: VectorLike,
    conf: VectorLike,
    irr: VectorLike,
    tau: float,
) -> float:
    """Factual-side loss: only the paraphrase is a positive."""
    return _contrastive_loss(_quad_sims(anchor, para, conf, irr), tau, n_pos=1)


@dataclass(frozen=True)
class ProjectedQuadruple:
    """One training sample after projection, per head."""

    sem: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    fact: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


def loss_ctr(batch: Sequence[ProjectedQuadruple], tau: float) -> float:
    """Sum of both losses over the batch."""
    batch = list(batch)
    if not batch:
        raise EmptyInputError("loss_ctr needs a non-empty batch")
    total = 0.0
    for quad in batch:
        total += loss_sem(*quad.sem, tau=tau) + loss_fact(*quad.fact, tau=tau)
    return total


# ---------------------------------------------------------------------------
# Analytic gradients. For one head and one loss the chain is
#   u_k = x_k W + b,  z_k = u_k/|u_k|,  s_k = z_a . z_k,  l_k = s_k/tau,
#   loss = logsumexp(all l) - logsumexp(positive l)
# so dloss/dl = softmax_all - softmax_pos (positives only), and the
# normalization backprop is du = (dz - (z.dz) z)/|u|.
# ---------------------------------------------------------------------------


def _batch_loss_and_grads(
    head: ProjectionHead,
    xs: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    tau: float,
    n_pos: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample losses plus summed (dW, db) for one head and loss kind."""
    zs, norms = zip(*(_project_rows(head, x) for x in xs))
    za, zp, zc, zi = zs
    logits = (
        np.stack(
            [
                np.sum(za * zp, axis=1),
                np.sum(za * zc, axis=1),
                np.sum(za * zi, axis=1),
            ],
            axis=1,
        )
        / tau
    )
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp_all = np.exp(shifted)
    sum_all = exp_all.sum(axis=1)
    sum_pos = exp_all[:, :n_pos].sum(axis=1)
    losses = np.log(sum_all) - np.log(sum_pos)

    soft_all = exp_all / sum_all[:, None]
    soft_pos = np.zeros_like(exp_all)
    soft_pos[:, :n_pos] = exp_all[:, :n_pos] / sum_pos[:, None]
    g = (soft_all - soft_pos) / tau  # dloss/ds per (p, c, i) column

    dza = g[:, 0:1] * zp + g[:, 1:2] * zc + g[:, 2:3] * zi
    dzs = (dza, g[:, 0:1] * za, g[:, 1:2] * za, g[:, 2:3] * za)

    dw = np.zeros_like(head.weight)
    db = np.zeros_like(head.bias)
    for x, z, n, dz in zip(xs, zs, norms, dzs):
        du = (dz - np.sum(z * dz, axis=1, keepdims=True) * z) / n[:, None]
        dw += x.T @ du
        db += du.sum(axis=0)
    return losses, dw, db


def _init_pair(base_dim: int, cfg: TrainConfig) -> EncoderPair:
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    heads = []
    for _ in range(2):
        w = rng.normal(0.0, 1.0 / np.sqrt(base_dim), size=(base_dim, cfg.head_dim))
        heads.append(ProjectionHead(weight=w, bias=np.zeros(cfg.head_dim)))
    return EncoderPair(sem=heads[0], fact=heads[1], base_dim=base_dim)


class _Adam:
    def __init__(self, shapes, lr):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            mhat = self.m[i] / (1 - self.beta1**self.t)
            vhat = self.v[i] / (1 - self.beta2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class _Sgd:
    def __init__(self, shapes, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def embedding_key(triple_id: str, form: str) -> str:
    return f"{triple_id}:{form}"


def _gather_form_matrices(
    triples: Sequence[ConflictTriple],
    base_embeddings: Mapping[str, VectorLike],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    columns = []
    for form in SURFACE_FORMS:
        rows = []
        for t in triples:
            key = embedding_key(t.base.id, form)
            if key not in base_embeddings:
                raise MissingEmbeddingError(f"no embedding for {key}")
            rows.append(_as_array(base_embeddings[key]))
        columns.append(np.stack(rows))
    return tuple(columns)


def _pair_loss(pair: EncoderPair, xs, tau: float) -> float:
    sem_losses, _, _ = _batch_loss_and_grads(pair.sem, xs, tau, n_pos=2)
    fact_losses, _, _ = _batch_loss_and_grads(pair.fact, xs, tau, n_pos=1)
    return float(np.mean(sem_losses + fact_losses))


def train(
    ts: Sequence[ConflictTriple],
    base_embeddings: Mapping[str, VectorLike],
    cfg: TrainConfig,
) -> EncoderPair:
    """Train both heads on the train split; deterministic given cfg.seed.

    base_embeddings maps "<triple_id>:<form>" to the frozen base embedding
    of that surface form (see embedding_key).
    """
    train_triples = [t for t in ts if t.split == "train"]
    if not train_triples:
        raise EmptyInputError("no train-split triples")
    xs = _gather_form_matrices(train_triples, base_embeddings)
    base_dim = xs[0].shape[1]
    pair = _init_pair(base_dim, cfg)

    params = [pair.sem.weight, pair.sem.bias, pair.fact.weight, pair.fact.bias]
    opt_cls = _Adam if cfg.optimizer == "adam" else _Sgd
    opt = opt_cls([p.shape for p in params], cfg.learning_rate)

    rng = np.random.Generator(np.random.Philox(key=cfg.seed, counter=1))
    n = len(train_triples)
    loss_curve = [_pair_loss(pair, xs, cfg.tau)]
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            bxs = tuple(x[idx] for x in xs)
            sem_l, dws, dbs = _batch_loss_and_grads(pair.sem, bxs, cfg.tau, n_pos=2)
            fact_l, dwf, dbf = _batch_loss_and_grads(pair.fact, bxs, cfg.tau, n_pos=1)
            k = len(idx)
            opt.step(params, [dws / k, dbs / k, dwf / k, dbf / k])
        loss_curve.append(_pair_loss(pair, xs, cfg.tau))

    pair.train_meta = {
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "tau": cfg.tau,
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "optimizer": cfg.optimizer,
        "head_dim": cfg.head_dim,
        "loss_curve": loss_curve,
    }
    return pair


def grad_check(
    cfg: TrainConfig,
    sample: tuple[VectorLike, VectorLike, VectorLike, VectorLike],
    epsilon: float = 1e-5,
) -> float:
    """Worst relative error of analytic vs central-difference gradients.

    Checks every parameter of both freshly initialized heads on one sample.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ConfigError(f"epsilon must be in [1e-7, 1e-3], got {epsilon}")
    xs = tuple(_as_array(v)[None, :] for v in sample)
    pair = _init_pair(xs[0].shape[1], cfg)

    _, dws, dbs = _batch_loss_and_grads(pair.sem, xs, cfg.tau, n_pos=2)
    _, dwf, dbf = _batch_loss_and_grads(pair.fact, xs, cfg.tau, n_pos=1)
    analytic = [dws, dbs, dwf, dbf]
    params = [pair.sem.weight, pair.sem.bias, pair.fact.weight, pair.fact.bias]

    def total_loss() -> float:
        sem_l, _, _ = _batch_loss_and_grads(pair.sem, xs, cfg.tau, n_pos=2)
        fact_l, _, _ = _batch_loss_and_grads(pair.fact, xs, cfg.tau, n_pos=1)
        return float(sem_l.sum() + fact_l.sum())

    worst = 0.0
    for p, g in zip(params, analytic):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for j in range(flat_p.size):
            orig = flat_p[j]
            flat_p[j] = orig + epsilon
            hi = total_loss()
            flat_p[j] = orig - epsilon
            lo = total_loss()
            flat_p[j] = orig
            numeric = (hi - lo) / (2 * epsilon)
            denom = max(abs(flat_g[j]), abs(numeric), 1e-6)
            worst = max(worst, abs(flat_g[j] - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# 2-D probe over (anchor, variant) pair features.
# ---------------------------------------------------------------------------


def pair_feature(anchor: VectorLike, variant: VectorLike) -> np.ndarray:
    """Elementwise product of the unit-normalized pair; the probe's input."""
    a = _as_array(anchor)
    v = _as_array(variant)
    if a.shape != v.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {v.shape}")
    na, nv = np.linalg.norm(a), np.linalg.norm(v)
    if na == 0.0 or nv == 0.0:
        raise DegenerateVectorError("pair feature undefined for zero vector")
    return (a / na) * (v / nv)


def probe_point(head: ProjectionHead, anchor: VectorLike, variant: VectorLike) -> np.ndarray:
    return head.affine(pair_feature(anchor, variant))


def train_probe_2d(
    anchors: Sequence[VectorLike],
    variants: Sequence[VectorLike],
    labels: Sequence[str],
    cfg: TrainConfig,
    pull_weight: float = 0.1,
) -> ProjectionHead:
    """Fit the 2-D pair probe with a 3-class softmax plus a paraphrase pull.

    The pull term keeps each paraphrase pair's point near the anchor's
    self-pair point, mirroring how the probe is meant to be read: the
    anchor itself sits at its own perfect-match position.
    """
    if not (len(anchors) == len(variants) == len(labels)):
        raise DimensionError("anchors, variants, labels must have equal length")
    present = set(labels)
    if present != set(PROBE_CLASSES):
        raise ConfigError(
            f"probe needs all classes {PROBE_CLASSES}, got {sorted(present)}"
        )
    feats = np.stack([pair_feature(a, v) for a, v in zip(anchors, variants)])
    self_feats = np.stack([pair_feature(a, a) for a in anchors])
    y = np.array([PROBE_CLASSES.index(l) for l in labels])
    para_mask = y == 0
    n, d = feats.shape

    rng = np.random.Generator(np.random.Philox(cfg.seed))
    wp = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, 2))
    bp = np.zeros(2)
    wc = rng.normal(0.0, 1.0, size=(2, 3))
    bc = np.zeros(3)

    params = [wp, bp, wc, bc]
    opt = _Adam([p.shape for p in params], cfg.learning_rate)
    onehot = np.eye(3)[y]
    epochs = max(cfg.epochs, 1) * 10  # tiny model; cheap full-batch steps
    for _ in range(epochs):
        pts = feats @ wp + bp
        logits = pts @ wc + bc
        shifted = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        dlogits = (probs - onehot) / n
        dwc = pts.T @ dlogits
        dbc = dlogits.sum(axis=0)
        dpts = dlogits @ wc.T

        # pull: mean over paraphrase pairs of |P(a.a) - P(a.v)|^2
        diff_feats = self_feats[para_mask] - feats[para_mask]
        diff_pts = diff_feats @ wp
        k = max(int(para_mask.sum()), 1)
        dwp = feats.T @ dpts + (2.0 * pull_weight / k) * diff_feats.T @ diff_pts
        dbp = dpts.sum(axis=0)
        opt.step(params, [dwp, dbp, dwc, dbc])
    return ProjectionHead(weight=wp, bias=bp)


def probe_centroids(
    head: ProjectionHead,
    anchors: Sequence[VectorLike],
    variants: Sequence[VectorLike],
    labels: Sequence[str],
) -> dict[str, np.ndarray]:
    pts = {c: [] for c in PROBE_CLASSES}
    for a, v, l in zip(anchors, variants, labels):
        pts[l].append(probe_point(head, a, v))
    return {c: np.mean(np.stack(p), axis=0) for c, p in pts.items() if p}


def orient_to_canonical(centroids: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Rotate/reflect centroids toward the canonical corner layout.

    Canonical corners: para (1, 1), conf (1, -1), irr (-1, -1). Only an
    orthogonal transform is applied (orthogonal Procrustes on centered
    centroids), so relative geometry is preserved.
    """
    order = list(PROBE_CLASSES)
    m = np.stack([np.asarray(centroids[c], dtype=np.float64) for c in order])
    target = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]])
    mc = m - m.mean(axis=0)
    tc = target - target.mean(axis=0)
    u, _, vt = np.linalg.svd(mc.T @ tc)
    q = u @ vt
    oriented = mc @ q
    return {c: oriented[i] for i, c in enumerate(order)}


# ---------------------------------------------------------------------------
# Checkpoint format: magic "TCRW", version u32 LE, then per head (sem, fact):
# d_in u32, d_out u32, row-major weights then bias as little-endian float64;
# finally a UTF-8 JSON metadata block.
# ---------------------------------------------------------------------------


def save_checkpoint(path: str | Path, pair: EncoderPair) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        for head in (pair.sem, pair.fact):
            fh.write(struct.pack("<II", head.d_in, head.d_out))
            fh.write(head.weight.astype("<f8").tobytes(order="C"))
            fh.write(head.bias.astype("<f8").tobytes())
        meta = dict(pair.train_meta)
        meta["base_dim"] = pair.base_dim
        fh.write(json.dumps(meta, sort_keys=True).encode("utf-8"))


def load_checkpoint(path: str | Path) -> EncoderPair:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    offset = 8
    heads = []
    for _ in range(2):
        try:
            d_in, d_out = struct.unpack_from("<II", blob, offset)
        except struct.error as exc:
            raise DataFormatError(f"{path}: truncated header") from exc
        offset += 8
        need = 8 * (d_in * d_out + d_out)
        if offset + need > len(blob):
            raise DataFormatError(f"{path}: truncated parameter block")
        w = np.frombuffer(blob, dtype="<f8", count=d_in * d_out, offset=offset)
        offset += 8 * d_in * d_out
        b = np.frombuffer(blob, dtype="<f8", count=d_out, offset=offset)
        offset += 8 * d_out
        heads.append(ProjectionHead(weight=w.reshape(d_in, d_out).copy(), bias=b.copy()))
    try:
        meta = json.loads(blob[offset:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: bad metadata block: {exc}") from exc
    base_dim = meta.pop("base_dim", heads[0].d_in)
    return EncoderPair(sem=heads[0], fact=heads[1], base_dim=base_dim, train_meta=meta)
