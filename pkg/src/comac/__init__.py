"""Persona/knowledge grounding engine.

Scores conversation-relevant persona and knowledge entries with a sparse,
symmetric, length-normalized late-interaction similarity over token
embeddings, trains the small grounding heads with an imbalance-aware
composite loss, and assembles grounded prompts.
"""

from .corpus import DialogueRound, TextEntry, Token, load_corpus, tokenize
from .embedding import (
    ReducedMatrix,
    ReductionLayer,
    TokenMatrix,
    hash_embed,
    import_embeddings,
    reduce,
    write_embeddings,
)
from .errors import EngineError
from .grounding import FusionParams, GroundingResult, assemble_prompt, kg_forward, pg_forward
from .latesim import colbert, mean_over_docs, normalized, sim_matrix, ssn, symmetric
from .metrics import kg_accuracy, pg_metrics, rouge_l, unigram_f1
from .objective import (
    GradientSet,
    ModelState,
    TrainConfig,
    gradients,
    kg_loss,
    pg_loss,
    total_loss,
    train,
)
from .saliency import (
    IdfTable,
    SaliencyScorer,
    SelectionMask,
    build_idf,
    ff_weights,
    select_tokens,
    tfidf_weights,
)

__version__ = "0.1.0"

__all__ = [
    "DialogueRound",
    "EngineError",
    "FusionParams",
    "GradientSet",
    "GroundingResult",
    "IdfTable",
    "ModelState",
    "ReducedMatrix",
    "ReductionLayer",
    "SaliencyScorer",
    "SelectionMask",
    "TextEntry",
    "Token",
    "TokenMatrix",
    "TrainConfig",
    "assemble_prompt",
    "build_idf",
    "colbert",
    "ff_weights",
    "gradients",
    "hash_embed",
    "import_embeddings",
    "kg_accuracy",
    "kg_forward",
    "kg_loss",
    "load_corpus",
    "mean_over_docs",
    "normalized",
    "pg_forward",
    "pg_loss",
    "pg_metrics",
    "reduce",
    "rouge_l",
    "select_tokens",
    "sim_matrix",
    "ssn",
    "symmetric",
    "tfidf_weights",
    "tokenize",
    "total_loss",
    "train",
    "unigram_f1",
    "write_embeddings",
]
