"""Graph-based recovery of fold counts in modulo-sampled multichannel signals."""

__version__ = "0.1.0"

from .signal import (  # noqa: E402
    CoarseLabelGrid,
    FoldedWindow,
    Recording,
    SignalWindow,
    coarse_labels,
    fold,
    normalize,
    segment,
    unfold_exact,
)
from .graph import Montage, WindowGraph, build_graph, default_montage, knn_spatial  # noqa: E402
from .model import ModelConfig, forward, init_params, predict_fold_class  # noqa: E402
from .baselines import itoh_unwrap, mrf_recover, recover, sparse_opt_recover  # noqa: E402
from .metrics import Metrics, paired_ttest, pearson_r, score  # noqa: E402
from .data import SynthConfig, WindowDataset, load_dataset, save_dataset, synth_generate  # noqa: E402
from .train import TrainConfig, evaluate, run_ablation, train  # noqa: E402
