"""SNR-based loss weighting and the desk-scale surrogate trainer.

Each signal's usefulness is scored as Var(prediction)/Var(residual) where
the prediction uses that signal alone; softmax over the (capped) SNRs gives
the per-signal loss weights. The surrogate task stands in for LLM-coupled
soft-prompt training: a small classifier predicts conflict labels from the
soft tokens plus the signal embedding, with one loss per signal computed
with only that signal active, combined through the SNR weights and the
alpha balance between the prompt-side and projector-side losses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateInputError,
    DimensionError,
    EmptyInputError,
)
from .signals import ConflictSignals, SignalProjector, _activate

SIGNAL_NAMES = ("sem", "fact", "ans")
DEFAULT_SNR_CAP = 10.0


@dataclass
class WeightConfig:
    loss_alpha: float = 0.5
    cap: float = DEFAULT_SNR_CAP

    def __post_init__(self):
        if not 0.0 <= self.loss_alpha <= 1.0:
            raise ConfigError(f"loss_alpha must be in [0, 1], got {self.loss_alpha}")
        if self.cap <= 0:
            raise ConfigError("cap must be positive")


@dataclass
class SnrState:
    snr: dict[str, float]
    weights: dict[str, float]
    cap: float = DEFAULT_SNR_CAP


def _validate_pairs(preds, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1:
        raise DimensionError(f"preds/labels shape mismatch: {p.shape} vs {y.shape}")
    if p.size < 2:
        raise DimensionError("need at least 2 observations")
    if np.all(y == y[0]):
        raise DegenerateInputError("labels are all identical")
    return p, y


def snr(preds: Sequence[float], labels: Sequence[int],
        cap: float = DEFAULT_SNR_CAP) -> float:
    """Var(prediction) over Var(residual), clamped to [0, cap].

    Population variances; a zero residual variance returns the cap.
    """
    p, y = _validate_pairs(preds, labels)
    var_pred = float(np.var(p))
    var_resid = float(np.var(y - p))
    if var_resid == 0.0:
        return float(cap)
    return float(min(max(var_pred / var_resid, 0.0), cap))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def fit_logistic_1d(
    x: Sequence[float],
    y: Sequence[int],
    ridge: float = 1e-6,
    max_iter: int = 50,
    tol: float = 1e-12,
) -> tuple[float, float]:
    """Newton fit of intercept and slope for P(y=1) = sigmoid(b0 + b1 x).

    A tiny ridge keeps perfectly separable inputs finite.
    """
    xv, yv = _validate_pairs(x, y)
    design = np.column_stack([np.ones_like(xv), xv])
    beta = np.zeros(2)
    for _ in range(max_iter):
        p = _sigmoid(design @ beta)
        grad = design.T @ (p - yv) + ridge * beta
        w = np.maximum(p * (1.0 - p), 1e-12)
        hess = (design * w[:, None]).T @ design + ridge * np.eye(2)
        step = np.linalg.solve(hess, grad)
        beta -= step
        if float(np.max(np.abs(step))) < tol:
            break
    return float(beta[0]), float(beta[1])


def signal_predictor(signal_values: Sequence[float], labels: Sequence[int]) -> np.ndarray:
    """Fitted probabilities of a one-signal logistic model."""
    b0, b1 = fit_logistic_1d(signal_values, labels)
    xv = np.asarray(signal_values, dtype=np.float64)
    return _sigmoid(b0 + b1 * xv)


def softmax_weights(snrs: Mapping[str, float]) -> dict[str, float]:
    """exp(SNR_i) / sum_j exp(SNR_j), max-subtracted for stability."""
    keys = list(snrs)
    vals = np.array([float(snrs[k]) for k in keys])
    if not np.all(np.isfinite(vals)):
        raise ConfigError("SNR values must be finite")
    shifted = np.exp(vals - vals.max())
    weights = shifted / shifted.sum()
    return {k: float(w) for k, w in zip(keys, weights)}


def compute_snr_state(per_signal_preds: Mapping[str, Sequence[float]],
                      labels: Sequence[int],
                      cap: float = DEFAULT_SNR_CAP) -> SnrState:
    snrs = {name: snr(preds, labels, cap=cap) for name, preds in per_signal_preds.items()}
    return SnrState(snr=snrs, weights=softmax_weights(snrs), cap=cap)


def total_loss(prompt_losses: Mapping[str, float],
               projector_losses: Mapping[str, float],
               w: Mapping[str, float],
               cfg: WeightConfig) -> float:
    """sum_i w_i (alpha * prompt_i + (1 - alpha) * projector_i)."""
    expected = set(SIGNAL_NAMES)
    for name, mapping in (("prompt_losses", prompt_losses),
                          ("projector_losses", projector_losses),
                          ("weights", w)):
        if set(mapping) != expected:
            raise ConfigError(f"{name} keys {sorted(mapping)} != {sorted(expected)}")
    a = cfg.loss_alpha
    return float(sum(
        w[i] * (a * prompt_losses[i] + (1.0 - a) * projector_losses[i])
        for i in SIGNAL_NAMES
    ))


# ---------------------------------------------------------------------------
# Surrogate conflict-classification task.
# ---------------------------------------------------------------------------

_MASKS = {name: np.eye(3)[i] for i, name in enumerate(SIGNAL_NAMES)}


@dataclass
class SurrogateConfig:
    epochs: int = 150
    learning_rate: float = 1e-2
    seed: int = 0
    hidden_dim: int = 16
    d_model: int = 64
    n_soft: int = 20
    calibration_frac: float = 0.2
    weight_cfg: WeightConfig = field(default_factory=WeightConfig)


@dataclass
class SurrogateModel:
    projector: SignalProjector
    soft_tokens: np.ndarray          # (n_soft, d_model)
    prompt_w: np.ndarray             # (2 * d_model,)
    prompt_b: float
    projector_w: np.ndarray          # (d_model,)
    projector_b: float
    weights: dict[str, float]

    def _signal_embedding(self, sig_rows: np.ndarray, mask: np.ndarray) -> np.ndarray:
        hidden = _activate(
            (sig_rows * mask) @ self.projector.layer1.weight + self.projector.layer1.bias,
            self.projector.activation,
        )
        return hidden @ self.projector.layer2.weight + self.projector.layer2.bias

    def per_signal_probs(self, signals: Sequence[ConflictSignals]) -> dict[str, np.ndarray]:
        """Prompt-head probability per signal, each with only that signal active."""
        sig_rows = np.stack([s.as_vector() for s in signals])
        mean_soft = self.soft_tokens.mean(axis=0)
        d = mean_soft.shape[0]
        out = {}
        for name, mask in _MASKS.items():
            e = self._signal_embedding(sig_rows, mask)
            logit = mean_soft @ self.prompt_w[:d] + e @ self.prompt_w[d:] + self.prompt_b
            out[name] = _sigmoid(logit)
        return out

    def predict_proba(self, signals: Sequence[ConflictSignals]) -> np.ndarray:
        """SNR-weighted ensemble of the per-signal prompt heads."""
        probs = self.per_signal_probs(signals)
        return sum(self.weights[name] * probs[name] for name in SIGNAL_NAMES)


def _bce(probs: np.ndarray, y: np.ndarray) -> float:
    eps = 1e-12
    return float(-np.mean(y * np.log(probs + eps) + (1 - y) * np.log(1 - probs + eps)))


def train_surrogate(
    signals: Sequence[ConflictSignals],
    labels: Sequence[int],
    cfg: SurrogateConfig | None = None,
) -> tuple[SurrogateModel, dict]:
    """Train the projector, soft tokens, and heads on conflict labels.

    Returns the model plus a report with per-epoch SNR, weights, and loss.
    The SNR weights are recomputed each epoch from the calibration split
    using the current per-signal predictions, so they evolve with training.
    """
    cfg = cfg or SurrogateConfig()
    if len(signals) < 100:
        raise EmptyInputError(f"need at least 100 labeled cases, got {len(signals)}")
    if len(signals) != len(labels):
        raise DimensionError("signals and labels must have equal length")
    y_all = np.asarray(labels, dtype=np.float64)
    if np.all(y_all == y_all[0]):
        raise DegenerateInputError("labels are all identical")

    rng = np.random.Generator(np.random.Philox(cfg.seed))
    order = rng.permutation(len(signals))
    n_cal = max(2, int(round(cfg.calibration_frac * len(signals))))
    cal_idx, fit_idx = order[:n_cal], order[n_cal:]
    sig_rows = np.stack([s.as_vector() for s in signals])
    cal_signals = [signals[i] for i in cal_idx]
    cal_y = y_all[cal_idx]
    fit_rows, fit_y = sig_rows[fit_idx], y_all[fit_idx]

    d = cfg.d_model
    model = SurrogateModel(
        projector=SignalProjector.create(cfg.hidden_dim, d, seed=cfg.seed),
        soft_tokens=rng.normal(0.0, 0.02, size=(cfg.n_soft, d)),
        prompt_w=rng.normal(0.0, 0.1, size=2 * d),
        prompt_b=0.0,
        projector_w=rng.normal(0.0, 0.1, size=d),
        projector_b=0.0,
        weights={name: 1.0 / 3.0 for name in SIGNAL_NAMES},
    )

    def epoch_snr_state() -> SnrState:
        probs = model.per_signal_probs(cal_signals)
        return compute_snr_state(probs, cal_y, cap=cfg.weight_cfg.cap)

    state = epoch_snr_state()
    model.weights = state.weights
    report = {"epochs": [], "initial": {"snr": state.snr, "weights": state.weights}}
    if cfg.epochs == 0:
        return model, report

    w1, b1 = model.projector.layer1.weight, model.projector.layer1.bias
    w2, b2 = model.projector.layer2.weight, model.projector.layer2.bias
    params = [w1, b1, w2, b2, model.soft_tokens, model.prompt_w, model.projector_w]
    moments = [np.zeros_like(p) for p in params]
    moments2 = [np.zeros_like(p) for p in params]
    scalar_state = {"pb": [0.0, 0.0], "qb": [0.0, 0.0]}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    alpha = cfg.weight_cfg.loss_alpha
    step = 0

    for _ in range(cfg.epochs):
        step += 1
        grads = [np.zeros_like(p) for p in params]
        grad_pb = 0.0
        grad_qb = 0.0
        mean_soft = model.soft_tokens.mean(axis=0)
        b = fit_rows.shape[0]
        prompt_losses, projector_losses = {}, {}
        for name in SIGNAL_NAMES:
            wgt = model.weights[name]
            masked = fit_rows * _MASKS[name]
            a1 = masked @ w1 + b1
            h1 = np.tanh(a1)
            e = h1 @ w2 + b2
            zp = mean_soft @ model.prompt_w[:d] + e @ model.prompt_w[d:] + model.prompt_b
            zq = e @ model.projector_w + model.projector_b
            pp, pq = _sigmoid(zp), _sigmoid(zq)
            prompt_losses[name] = _bce(pp, fit_y)
            projector_losses[name] = _bce(pq, fit_y)

            dzp = wgt * alpha * (pp - fit_y) / b
            dzq = wgt * (1 - alpha) * (pq - fit_y) / b
            grads[5][:d] += dzp.sum() * mean_soft
            grads[5][d:] += e.T @ dzp
            grad_pb += dzp.sum()
            grads[4] += np.outer(np.ones(cfg.n_soft) / cfg.n_soft,
                                 dzp.sum() * model.prompt_w[:d])
            grads[6] += e.T @ dzq
            grad_qb += dzq.sum()
            de = np.outer(dzp, model.prompt_w[d:]) + np.outer(dzq, model.projector_w)
            grads[2] += h1.T @ de
            grads[3] += de.sum(axis=0)
            dh1 = de @ w2.T
            da1 = dh1 * (1.0 - h1 * h1)
            grads[0] += masked.T @ da1
            grads[1] += da1.sum(axis=0)

        for i, (p, g) in enumerate(zip(params, grads)):
            moments[i] = beta1 * moments[i] + (1 - beta1) * g
            moments2[i] = beta2 * moments2[i] + (1 - beta2) * g * g
            mhat = moments[i] / (1 - beta1**step)
            vhat = moments2[i] / (1 - beta2**step)
            p -= cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
        for key, g in (("pb", grad_pb), ("qb", grad_qb)):
            st = scalar_state[key]
            st[0] = beta1 * st[0] + (1 - beta1) * g
            st[1] = beta2 * st[1] + (1 - beta2) * g * g
            delta = cfg.learning_rate * (st[0] / (1 - beta1**step)) / (
                np.sqrt(st[1] / (1 - beta2**step)) + eps
            )
            if key == "pb":
                model.prompt_b -= delta
            else:
                model.projector_b -= delta

        state = epoch_snr_state()
        model.weights = state.weights
        report["epochs"].append({
            "snr": state.snr,
            "weights": state.weights,
            "loss": total_loss(prompt_losses, projector_losses, model.weights,
                               cfg.weight_cfg),
        })
    return model, report
