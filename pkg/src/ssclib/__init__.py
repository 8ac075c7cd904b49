"""Multi-label sequential sentence classification with a generative LM:
demonstration-retrieval prompting, a generate-then-classify verbalizer head,
an auto-weighted contrastive objective, and corpus/evaluation tooling."""

__version__ = "0.1.0"

from .backends import (
    BackendUnavailableError,
    ByteTokenizer,
    ContextOverflowError,
    EchoBackend,
    GenerationResult,
    LMBackend,
    ToyTransformerBackend,
    WhitespaceTokenizer,
)
from .config import RunConfig
from .contrastive import (
    MemoryBank,
    PairWeightNet,
    combined_loss,
    pair_weight,
    positives,
    weighted_contrastive_loss,
)
from .corpus import (
    DEFAULT_LABEL_SET,
    Corpus,
    CorpusError,
    Document,
    LabelSet,
    Sentence,
    cohens_kappa,
    corpus_stats,
    kappa_report,
    load_corpus,
    stratified_split,
    write_corpus,
)
from .evaluation import (
    EvalReport,
    ThresholdProfile,
    decode_predictions,
    f1_scores,
    tune_thresholds,
)
from .experiments import run_ablation, run_icl, run_training, shot_sweep
from .prompting import (
    ParseFailure,
    Prompt,
    assemble_prompt,
    parse_generated_label,
    render_demonstration,
    render_query,
)
from .retrieval import HashedBowBackend, cosine, rank_demonstrations
from .synthetic import generate_corpus, perturbed_round
from .verbalizer import VerbalizerHead, classification_loss, concat_hidden
