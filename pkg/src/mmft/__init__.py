"""Fast linear multi-modal classification with fused or quantized features."""

from .corpus import (
    Document,
    FeatureTable,
    Vocabulary,
    build_vocab,
    load_documents,
    load_features,
    parse_line,
    text_weights,
)
from .inference import Prediction, evaluate, nearest_neighbors, predict
from .model import Fusion, GateSide, Model, ModelConfig, forward, fuse
from .persistence import load_codebook, load_model, save_codebook, save_model
from .quantizer import Codebook, emit_quantized_corpus, encode, kmeans, train_codebook
from .trainer import TrainConfig, grid_search, lr_at, train

__version__ = "0.1.0"
