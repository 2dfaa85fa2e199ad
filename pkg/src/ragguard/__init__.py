"""Conflict-aware middleware for retrieval-augmented generation.

Computes three interpretable signals for a (query, context) pair: meaning
similarity and factual agreement under trained projection heads, plus a
self-answerability estimate. The signals drive transparent routing
decisions, an analytic noise-robustness bound with Monte Carlo
verification, and a QA benchmark harness.
"""

from .datagen import ConflictTriple, KnowledgeTriple, QACase, build_dataset, build_qa_cases
from .decoupler import (
    EncoderPair,
    ProjectionHead,
    TrainConfig,
    forward,
    grad_check,
    load_checkpoint,
    loss_ctr,
    loss_fact,
    loss_sem,
    save_checkpoint,
    train,
    train_probe_2d,
)
from .embed import EmbedConfig, EmbeddingVector, cosine, embed_batch, hash_embed, normalize
from .errors import RagGuardError
from .evaluation import (
    auroc,
    detection_f1,
    em,
    f1_token,
    kgrr,
    krippendorff_alpha,
    mcor,
    normalize_answer,
    run_benchmark,
    spearman,
)
from .gateway import GatewayConfig, GatewayService, llm_generate, serve
from .policy import Decision, PolicyConfig, bin_answerability, classify_region, decide, flip_rate
from .signals import (
    ConflictSignals,
    LlmProbeProvider,
    PromptAssembly,
    SignalProjector,
    SyntheticOracleProvider,
    assemble,
    project_signals,
    render_hard_prompt,
    sigma_ans,
    sigma_fact,
    sigma_sem,
)
from .theory import PipelineParams, SimResult, dominance_report, exact_gap, simulate, upper_bound
from .weighting import (
    SnrState,
    WeightConfig,
    signal_predictor,
    snr,
    softmax_weights,
    total_loss,
    train_surrogate,
)

__version__ = "0.1.0"
