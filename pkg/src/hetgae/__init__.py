"""Type-aware heterogeneous graph autoencoder with schema-valid edge
reconstruction, joint semi-supervised node classification, and
decoder-driven graph augmentation."""

from .augment import (AugmentationPolicy, AugmentedGraph, graph_augment,
                      predict_all_legal, threshold_grid_search)
from .decoder import (DecoderParameters, EdgePredictionSet, FocalConfig,
                      edge_probability, focal_loss, reconstruction_loss,
                      score_pairs, type_transform)
from .encoder import EncoderParameters, encode, project_features
from .errors import ConfigError, DataError, NumericError, VerificationError
from .graph import (GraphSchema, HeteroGraph, LegalPairSet,
                    enumerate_legal_pairs, load_graph, save_graph)
from .heads import HeadParameters, classification_loss, fbc_forward, hgc_forward
from .synth import SyntheticSpec, generate_synthetic, imdb_style_spec, separable_spec
from .trainer import (AdamW, Metrics, ModelParameters, TrainConfig, TrainReport,
                      evaluate, joint_loss, macro_f1, micro_f1, train)

__version__ = "0.1.0"
