"""Collaborative filtering on language-embedding item features.

Train linear probes, two-layer projections with neighborhood smoothing, or
plain identifier-embedding baselines; evaluate by full-corpus ranking; carry
frozen models to unseen datasets; steer a user's ranking with a text query.
"""

from .corpus import (
    DatasetSplit,
    IdMaps,
    MixedDataset,
    RawInteractions,
    filter_and_index,
    load_split,
    merge_datasets,
    parse_interactions,
    split_dataset,
    unmerge,
    write_split,
)
from .embed import (
    EmbeddingMatrix,
    align_to_items,
    load_matrix,
    shuffle_rows,
    user_language_features,
    write_matrix,
)
from .evaluate import (
    RankingMetrics,
    evaluate_output,
    metrics_at_k,
    rank_items,
    strategy_baseline,
    zero_shot_evaluate,
)
from .graph import BipartiteGraph, build_graph, multi_layer, propagate
from .intent import IntentEvalCase, IntentQuerySet, blend, intent_evaluate, intent_rank, project_query
from .model import (
    AlphaRecParams,
    IdEmbeddingParams,
    ModelOutput,
    ProbeParams,
    cosine_score,
    full_forward,
    load_checkpoint,
    mlp_forward,
    probe_forward,
    save_checkpoint,
)
from .synth import SynthConfig, generate, make_domain_pair
from .train import TrainConfig, TrainingDiverged, bpr_loss, fit, infonce_loss, sample_negatives

__version__ = "0.1.0"
