"""Multimodal hierarchical topic models for unsupervised concept formation."""
from ._backend import BACKEND
from .core import (ConfigError, FittedModel, ModelConfig, classify, fit, infer_new, load_model,
                   predict_modality, save_model)
from .corpus import Corpus, CorpusError, Document, Lexicon, ModalitySpec, load_corpus, save_corpus
from .evaluate import EvalReport, chance_rand, evaluate_predictions, kl_divergence, rand_index
from .hierarchy import (Concept, HierarchyModel, HierarchySpec, load_hierarchy, emotion_spec, predict_cross,
                        save_hierarchy, train_hierarchy)
from .preprocess import PreprocessError
from .synth import desk_shape, make_separable_params, sample_corpus

__version__ = "0.1.0"
