"""Desk-scale laboratory for studying what happens when translation models
are retrained on their own output, and for trying out the usual defenses:
quality scoring, provenance detection, curriculum scheduling, and mixing
real data back in.
"""

__version__ = "0.1.0"

from .corpus import (
    Corpus,
    PreprocessOptions,
    SentencePair,
    Stemmer,
    Vocab,
    build_vocab,
    load_parallel_corpus,
    preprocess_sentence,
    save_corpus,
    split_corpus,
    tokenize,
)
from .errors import (
    AlignmentError,
    ConfigError,
    DegenerateInputError,
    EmptyClassError,
    EmptyCorpusError,
    EmptyInputError,
    GraphError,
    NumericError,
    RegurgelabError,
    ShapeError,
    SingularMatrixError,
    SizeError,
)
from .autodiff import (
    AdamState,
    Tape,
    Tensor,
    adam_step,
    backward,
    constant,
    gradient_check,
    load_checkpoint,
    parameter,
    save_checkpoint,
)
from .model import (
    GenerationRecord,
    TransformerConfig,
    TranslationModel,
    generate_synthetic_corpus,
    load_model,
    save_model,
    train_batches,
    translate,
)
from .metrics import (
    BleuConfig,
    BleuReport,
    SynonymTable,
    corpus_bleu,
    self_bleu,
    sentence_bleu,
    tfidf_embed,
    unique_token_count,
)
from .mitigation import (
    Detector,
    FeaturizerConfig,
    Schedule,
    ScoredInstance,
    answer_entropy,
    build_schedule,
    featurize_pairs,
    mix_corpora,
    proportion_mix,
    train_bleu_regressor,
    train_detector,
    translation_entropy,
)
from .experiment import (
    ExperimentConfig,
    RunReport,
    emit_report,
    run_experiment,
)
from .toylang import make_toy_corpus, toy_vocab

__all__ = [
    "__version__",
    # corpus
    "Corpus", "PreprocessOptions", "SentencePair", "Stemmer", "Vocab",
    "build_vocab", "load_parallel_corpus", "preprocess_sentence",
    "save_corpus", "split_corpus", "tokenize",
    # errors
    "AlignmentError", "ConfigError", "DegenerateInputError",
    "EmptyClassError", "EmptyCorpusError", "EmptyInputError", "GraphError",
    "NumericError", "RegurgelabError", "ShapeError", "SingularMatrixError",
    "SizeError",
    # autodiff
    "AdamState", "Tape", "Tensor", "adam_step", "backward", "constant",
    "gradient_check", "load_checkpoint", "parameter", "save_checkpoint",
    # model
    "GenerationRecord", "TransformerConfig", "TranslationModel",
    "generate_synthetic_corpus", "load_model", "save_model",
    "train_batches", "translate",
    # metrics
    "BleuConfig", "BleuReport", "SynonymTable", "corpus_bleu", "self_bleu",
    "sentence_bleu", "tfidf_embed", "unique_token_count",
    # mitigation
    "Detector", "FeaturizerConfig", "Schedule", "ScoredInstance",
    "answer_entropy", "build_schedule", "featurize_pairs", "mix_corpora",
    "proportion_mix", "train_bleu_regressor", "train_detector",
    "translation_entropy",
    # experiment
    "ExperimentConfig", "RunReport", "emit_report", "run_experiment",
    # toy language
    "make_toy_corpus", "toy_vocab",
]
