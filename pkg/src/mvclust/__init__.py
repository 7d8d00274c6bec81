"""Multi-view clustering toolkit over precomputed feature views.

Per-view baselines (kmeans, agglomerative, deep embedded clustering),
multi-view baselines (concatenate+cluster, co-association consensus),
and the staged multi-branch deep procedure with optional end-to-end
refinement. Evaluation is by normalized mutual information.
"""

from .dataio import (
    FeatureView,
    Manifest,
    MultiViewDataset,
    Partition,
    load_dataset,
    load_manifest,
    load_view,
    save_view,
)
from .deepclust import DecState, dec_finetune, idec_train, kl_cluster_loss, soft_assign, target_distribution
from .ensemble import ClustererSpec, cc, coassociation, concat_views, mvec
from .flatclust import KMeansConfig, LinkageConfig, agglomerative_distance, agglomerative_features, kmeans
from .metrics import contingency, inertia, nmi
from .mvnet import MvNetModel, MvNetSpec, dmvc, dmvc_fix, embed, mvnet_forward, mvnet_spec
from .nnet import MlpModel, MlpSpec, TrainConfig, train_autoencoder
from .synthgen import PRESETS, SynthConfig, ViewSpec, generate

__version__ = "0.1.0"
